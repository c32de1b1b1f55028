//! Monte Carlo BER simulation: Gray QAM over AWGN, exact bit LLRs,
//! flooding sum-product decoding.
//!
//! Frames carry the all-zero codeword XORed with a per-frame scrambling
//! sequence, which is removed again from the LLRs before decoding. For a
//! linear code this gives the statistics of random codewords while needing no
//! encoder; [`Encoder`] exists to spot-check that on small codes.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{snr_db_from_ebn0, LabeledConstellation};
use crate::error::{Error, Result};
use crate::lifting::{ChannelAssignment, LiftedCode};

/// Messages are clipped to this magnitude.
const LLR_CLIP: f64 = 30.0;

/// Exact per-level LLRs `log P(b_i = 0 | y) / P(b_i = 1 | y)` for a symbol
/// received with complex noise variance `noise_var`.
pub fn demap_llr(c: &LabeledConstellation, y: Complex64, noise_var: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.bits()];
    demap_into(c, y, noise_var, &mut out);
    out
}

fn demap_into(c: &LabeledConstellation, y: Complex64, noise_var: f64, out: &mut [f64]) {
    let metric: Vec<f64> = c
        .points()
        .iter()
        .map(|x| -(y - x).norm_sqr() / noise_var)
        .collect();
    for (level, o) in out.iter_mut().enumerate() {
        let mut best = [f64::NEG_INFINITY; 2];
        for (p, &mt) in metric.iter().enumerate() {
            let b = c.bit(p, level) as usize;
            best[b] = best[b].max(mt);
        }
        let mut sum = [0.0; 2];
        for (p, &mt) in metric.iter().enumerate() {
            let b = c.bit(p, level) as usize;
            sum[b] += (mt - best[b]).exp();
        }
        *o = (best[0] + sum[0].ln()) - (best[1] + sum[1].ln());
    }
}

/// Check-major adjacency of a lifted code.
#[derive(Clone, Debug)]
pub struct TannerGraph {
    n: usize,
    chk_ptr: Vec<usize>,
    edge_bit: Vec<u32>,
    bit_ptr: Vec<usize>,
    bit_edges: Vec<u32>,
}

impl TannerGraph {
    pub fn new(code: &LiftedCode) -> Self {
        let mut edges = code.edges.clone();
        edges.sort_unstable();
        let mut chk_ptr = vec![0; code.n_checks + 1];
        for &(c, _) in &edges {
            chk_ptr[c as usize + 1] += 1;
        }
        for i in 0..code.n_checks {
            chk_ptr[i + 1] += chk_ptr[i];
        }
        let edge_bit: Vec<u32> = edges.iter().map(|&(_, b)| b).collect();
        let mut bit_ptr = vec![0; code.n + 1];
        for &b in &edge_bit {
            bit_ptr[b as usize + 1] += 1;
        }
        for i in 0..code.n {
            bit_ptr[i + 1] += bit_ptr[i];
        }
        let mut fill = bit_ptr.clone();
        let mut bit_edges = vec![0u32; edge_bit.len()];
        for (e, &b) in edge_bit.iter().enumerate() {
            bit_edges[fill[b as usize]] = e as u32;
            fill[b as usize] += 1;
        }
        Self {
            n: code.n,
            chk_ptr,
            edge_bit,
            bit_ptr,
            bit_edges,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_checks(&self) -> usize {
        self.chk_ptr.len() - 1
    }
}

/// Flooding sum-product state.
pub struct BpDecoder<'a> {
    graph: &'a TannerGraph,
    llr: &'a [f64],
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    hard: Vec<u8>,
    /// Bits whose posterior LLR is exactly zero.
    undecided: usize,
    buf: Vec<f64>,
}

impl<'a> BpDecoder<'a> {
    pub fn new(graph: &'a TannerGraph, llr: &'a [f64]) -> Self {
        assert_eq!(llr.len(), graph.n, "one LLR per bit");
        let v2c = graph
            .edge_bit
            .iter()
            .map(|&b| llr[b as usize].clamp(-LLR_CLIP, LLR_CLIP))
            .collect();
        let hard = llr.iter().map(|&l| u8::from(l < 0.0)).collect();
        Self {
            graph,
            llr,
            v2c,
            c2v: vec![0.0; graph.edge_bit.len()],
            hard,
            undecided: llr.iter().filter(|&&l| l == 0.0).count(),
            buf: Vec::new(),
        }
    }

    pub fn check_to_bit(&self) -> &[f64] {
        &self.c2v
    }

    pub fn hard_decisions(&self) -> &[u8] {
        &self.hard
    }

    /// All bits decided and every check satisfied.
    pub fn syndrome_ok(&self) -> bool {
        let g = self.graph;
        self.undecided == 0
            && (0..g.n_checks()).all(|c| {
                g.edge_bit[g.chk_ptr[c]..g.chk_ptr[c + 1]]
                    .iter()
                    .fold(0u8, |s, &b| s ^ self.hard[b as usize])
                    == 0
            })
    }

    pub fn iterate(&mut self) {
        let g = self.graph;
        let limit = (LLR_CLIP / 2.0).tanh();
        for c in 0..g.n_checks() {
            let (s, t) = (g.chk_ptr[c], g.chk_ptr[c + 1]);
            self.buf.clear();
            self.buf
                .extend(self.v2c[s..t].iter().map(|&m| (0.5 * m).tanh()));
            let mut prefix = 1.0;
            for (i, e) in (s..t).enumerate() {
                self.c2v[e] = prefix;
                prefix *= self.buf[i];
            }
            let mut suffix = 1.0;
            for (i, e) in (s..t).enumerate().rev() {
                let p = (self.c2v[e] * suffix).clamp(-limit, limit);
                self.c2v[e] = 2.0 * p.atanh();
                suffix *= self.buf[i];
            }
        }
        self.undecided = 0;
        for b in 0..g.n {
            let edges = &g.bit_edges[g.bit_ptr[b]..g.bit_ptr[b + 1]];
            let total = self.llr[b] + edges.iter().map(|&e| self.c2v[e as usize]).sum::<f64>();
            for &e in edges {
                self.v2c[e as usize] = (total - self.c2v[e as usize]).clamp(-LLR_CLIP, LLR_CLIP);
            }
            self.hard[b] = u8::from(total < 0.0);
            self.undecided += usize::from(total == 0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Decodes until the syndrome is zero or `max_iters` iterations have run.
pub fn bp_decode(graph: &TannerGraph, llr: &[f64], max_iters: usize) -> DecodeOutcome {
    let mut dec = BpDecoder::new(graph, llr);
    let mut iterations = 0;
    let mut converged = dec.syndrome_ok();
    while !converged && iterations < max_iters {
        dec.iterate();
        iterations += 1;
        converged = dec.syndrome_ok();
    }
    DecodeOutcome {
        bits: dec.hard,
        converged,
        iterations,
    }
}

/// Systematic encoder from dense GF(2) elimination of the parity-check matrix.
/// Meant for small codes only.
#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    /// Reduced rows, bit-packed.
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
    info_positions: Vec<usize>,
}

impl Encoder {
    pub fn new(code: &LiftedCode) -> Self {
        let n = code.n;
        let words = n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; code.n_checks];
        for &(c, b) in &code.edges {
            rows[c as usize][b as usize / 64] ^= 1 << (b % 64);
        }
        let get = |r: &[u64], col: usize| (r[col / 64] >> (col % 64)) & 1 == 1;
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            let Some(p) = (rank..rows.len()).find(|&r| get(&rows[r], col)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && get(row, col) {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a ^= b;
                    }
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        rows.truncate(rank);
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let info_positions = (0..n).filter(|&c| !is_pivot[c]).collect();
        Self {
            n,
            rows,
            pivots,
            info_positions,
        }
    }

    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        assert_eq!(info.len(), self.k());
        let mut word = vec![0u8; self.n];
        for (&pos, &bit) in self.info_positions.iter().zip(info) {
            word[pos] = bit & 1;
        }
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let mut parity = 0u8;
            for &pos in &self.info_positions {
                if word[pos] == 1 && (row[pos / 64] >> (pos % 64)) & 1 == 1 {
                    parity ^= 1;
                }
            }
            word[p] = parity;
        }
        word
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub ebn0_points: Vec<f64>,
    pub max_frames: usize,
    pub target_bit_errors: usize,
    pub bp_iters: usize,
    pub seed: u64,
    /// Send encoded random words instead of the scrambled all-zero word.
    pub random_codewords: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ebn0_points: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            max_frames: 1000,
            target_bit_errors: 200,
            bp_iters: 100,
            seed: 1,
            random_codewords: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ebn0_points.is_empty()
            || self.ebn0_points.windows(2).any(|w| w[1] <= w[0])
            || self.max_frames == 0
            || self.target_bit_errors == 0
            || self.bp_iters == 0
        {
            return Err(Error::InvalidParams(
                "need sorted E_b/N_0 points and positive counts".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub ebn0_db: f64,
    pub frames: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub frame_errors: usize,
    pub avg_bp_iters: f64,
    /// Sum over frames of the squared per-frame bit error rate.
    pub sum_sq_frame_ber: f64,
}

impl BerRecord {
    /// Normal-approximation 95% interval on BER, with frames as the samples
    /// (bit errors within a frame are strongly correlated).
    pub fn ci95(&self) -> (f64, f64) {
        let f = self.frames as f64;
        let var = if self.frames > 1 {
            ((self.sum_sq_frame_ber - f * self.ber * self.ber) / (f - 1.0)).max(0.0)
        } else {
            0.0
        };
        let half = 1.96 * (var / f).sqrt();
        ((self.ber - half).max(0.0), self.ber + half)
    }

    pub const CSV_HEADER: &'static str = "ebn0_db,frames,bit_errors,ber,frame_errors,avg_bp_iters";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{},{},{:.6e},{},{:.2}",
            self.ebn0_db,
            self.frames,
            self.bit_errors,
            self.ber,
            self.frame_errors,
            self.avg_bp_iters
        )
    }
}

struct FrameResult {
    bit_errors: usize,
    frame_error: bool,
    iterations: usize,
}

/// Everything fixed across frames of one simulation.
pub struct Link<'a> {
    graph: TannerGraph,
    constellation: &'a LabeledConstellation,
    symbols: Vec<u32>,
    point_of_label: Vec<usize>,
    rate: f64,
    encoder: Option<Encoder>,
}

impl<'a> Link<'a> {
    /// `interleaver_seed` orders bits within each channel (see
    /// [`ChannelAssignment::frame_symbols`]).
    pub fn new(
        code: &LiftedCode,
        assignment: &ChannelAssignment,
        constellation: &'a LabeledConstellation,
        interleaver_seed: u64,
    ) -> Result<Self> {
        if assignment.n() != code.n || assignment.m != constellation.bits() {
            return Err(Error::InvalidParams(format!(
                "assignment covers {} bits on {} channels; code has {} bits, constellation {} levels",
                assignment.n(),
                assignment.m,
                code.n,
                constellation.bits()
            )));
        }
        Ok(Self {
            graph: TannerGraph::new(code),
            constellation,
            symbols: assignment.frame_symbols(interleaver_seed)?,
            point_of_label: (0..constellation.points().len() as u32)
                .map(|l| constellation.point_for_label(l))
                .collect(),
            rate: code.design_rate(),
            encoder: None,
        })
    }

    pub fn with_encoder(mut self, code: &LiftedCode) -> Self {
        self.encoder = Some(Encoder::new(code));
        self
    }

    pub fn graph(&self) -> &TannerGraph {
        &self.graph
    }

    fn frame(&self, noise_var: f64, max_iters: usize, rng: &mut ChaCha8Rng) -> FrameResult {
        let n = self.graph.n;
        let m = self.constellation.bits();
        let word: Vec<u8> = match &self.encoder {
            Some(enc) => {
                let info: Vec<u8> = (0..enc.k()).map(|_| rng.gen::<u8>() & 1).collect();
                enc.encode(&info)
            }
            None => vec![0; n],
        };
        let scramble: Vec<u8> = (0..n).map(|_| rng.gen::<u8>() & 1).collect();
        let sigma = (noise_var / 2.0).sqrt();
        let mut llr = vec![0.0; n];
        let mut levels = vec![0.0; m];
        for sym in self.symbols.chunks_exact(m) {
            let label = sym.iter().fold(0u32, |acc, &b| {
                (acc << 1) | u32::from(word[b as usize] ^ scramble[b as usize])
            });
            let x = self.constellation.points()[self.point_of_label[label as usize]];
            let z = Complex64::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            );
            demap_into(self.constellation, x + z, noise_var, &mut levels);
            for (&b, &l) in sym.iter().zip(&levels) {
                llr[b as usize] = if scramble[b as usize] == 1 { -l } else { l };
            }
        }
        let out = bp_decode(&self.graph, &llr, max_iters);
        let bit_errors = out.bits.iter().zip(&word).filter(|(a, b)| a != b).count();
        FrameResult {
            bit_errors,
            frame_error: bit_errors > 0,
            iterations: out.iterations,
        }
    }

    /// BER at each point of `config`; each point draws from its own seeded
    /// stream, so results do not depend on which other points are run.
    pub fn run_ber(&self, config: &SimConfig) -> Result<Vec<BerRecord>> {
        config.validate()?;
        let m = self.constellation.bits();
        let n = self.graph.n as f64;
        let mut out = Vec::with_capacity(config.ebn0_points.len());
        for &ebn0 in &config.ebn0_points {
            let snr_db = snr_db_from_ebn0(ebn0, self.rate, m);
            let noise_var = 10f64.powf(-snr_db / 10.0);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(ebn0.to_bits());
            let mut rec = BerRecord {
                ebn0_db: ebn0,
                frames: 0,
                bit_errors: 0,
                ber: 0.0,
                frame_errors: 0,
                avg_bp_iters: 0.0,
                sum_sq_frame_ber: 0.0,
            };
            let mut iters = 0usize;
            while rec.frames < config.max_frames && rec.bit_errors < config.target_bit_errors {
                let f = self.frame(noise_var, config.bp_iters, &mut rng);
                rec.frames += 1;
                rec.bit_errors += f.bit_errors;
                rec.frame_errors += usize::from(f.frame_error);
                rec.sum_sq_frame_ber += (f.bit_errors as f64 / n).powi(2);
                iters += f.iterations;
            }
            rec.ber = rec.bit_errors as f64 / (rec.frames as f64 * n);
            rec.avg_bp_iters = iters as f64 / rec.frames as f64;
            log::info!("E_b/N_0 {ebn0:.3} dB: {}", rec.csv_row());
            out.push(rec);
        }
        Ok(out)
    }
}

/// One-call BER simulation with the interleaver seeded from `config.seed`.
pub fn run_ber(
    code: &LiftedCode,
    assignment: &ChannelAssignment,
    constellation: &LabeledConstellation,
    config: &SimConfig,
) -> Result<Vec<BerRecord>> {
    Link::new(code, assignment, constellation, config.seed)?.run_ber(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmap::BitMapping;
    use crate::lifting::{assign_channels, lift};
    use crate::protograph::{build_single_chain, SingleChainParams};

    fn toy_code(edges: Vec<(u32, u32)>, n: usize, n_checks: usize) -> LiftedCode {
        LiftedCode {
            n,
            n_checks,
            q: 1,
            seed: 0,
            edges,
        }
    }

    #[test]
    fn llr_signs_on_points() {
        let c = LabeledConstellation::qam16_gray();
        for p in 0..16 {
            let llr = demap_llr(&c, c.points()[p], 1e-4);
            for (level, l) in llr.iter().enumerate() {
                assert_eq!(*l < 0.0, c.bit(p, level) == 1);
            }
        }
    }

    #[test]
    fn llr_reflection_flips_one_dimension() {
        let c = LabeledConstellation::qam16_gray();
        let y = Complex64::new(0.3, -0.7);
        let a = demap_llr(&c, y, 0.2);
        let b = demap_llr(&c, y.conj(), 0.2);
        // Q sign flips, Q inner/outer unchanged, I levels unchanged
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        assert!((a[2] + b[2]).abs() < 1e-12);
        assert!((a[3] - b[3]).abs() < 1e-12);
    }

    #[test]
    fn single_iteration_messages() {
        // one degree-3 check, one degree-1 check on bit 0
        let code = toy_code(vec![(0, 0), (0, 1), (0, 2), (1, 0)], 3, 2);
        let g = TannerGraph::new(&code);
        let llr = [0.5, -1.2, 2.0];
        let mut dec = BpDecoder::new(&g, &llr);
        dec.iterate();
        let expect = 2.0 * ((-0.6f64).tanh() * 1.0f64.tanh()).atanh();
        let to_bit0 = dec.check_to_bit()[0];
        assert!((to_bit0 - expect).abs() < 1e-12);
        // a degree-1 check pins its bit to zero
        assert!(dec.check_to_bit()[3] > 25.0);
    }

    #[test]
    fn decode_trivial_inputs() {
        let p = SingleChainParams::new(3, 6, 10, 2).unwrap();
        let code = lift(&build_single_chain(&p).unwrap(), 20, 1).unwrap();
        let g = TannerGraph::new(&code);
        let out = bp_decode(&g, &vec![10.0; code.n], 50);
        assert!(out.converged && out.iterations == 0);
        let out = bp_decode(&g, &vec![0.0; code.n], 5);
        assert!(!out.converged);
    }

    #[test]
    fn encoder_words_satisfy_checks() {
        let p = SingleChainParams::new(3, 6, 10, 2).unwrap();
        let code = lift(&build_single_chain(&p).unwrap(), 10, 2).unwrap();
        let enc = Encoder::new(&code);
        assert!(enc.k() >= code.n - code.n_checks);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let info: Vec<u8> = (0..enc.k()).map(|_| rng.gen::<u8>() & 1).collect();
            let w = enc.encode(&info);
            assert!(code.syndrome(&w).iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn noiseless_link_is_error_free() {
        let p = SingleChainParams::new(3, 6, 10, 2).unwrap();
        let code = lift(&build_single_chain(&p).unwrap(), 20, 1).unwrap();
        let a = assign_channels(&BitMapping::uniform(4, 20), 20, 1).unwrap();
        let c = LabeledConstellation::qam16_gray();
        let cfg = SimConfig {
            ebn0_points: vec![30.0],
            max_frames: 3,
            ..Default::default()
        };
        let r = run_ber(&code, &a, &c, &cfg).unwrap();
        assert_eq!(r[0].bit_errors, 0);
        assert_eq!(r[0].frames, 3);
        assert_eq!(r, run_ber(&code, &a, &c, &cfg).unwrap());
    }
}
