//! Erasure density evolution on protographs with per-VN channel erasure
//! probabilities, and threshold search over an erasure profile.
//!
//! Messages live on edge instances: an entry of multiplicity `n` in the
//! protograph contributes `n` parallel edges, each excluded only from its own
//! extrinsic product.

use serde::{Deserialize, Serialize};

use crate::bitmap::BitMapping;
use crate::channel::ErasureProfile;
use crate::error::{Error, Result};
use crate::protograph::Protograph;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeOptions {
    pub max_iters: usize,
    /// Residuals below this count as zero.
    pub zero_tol: f64,
    /// Bisection stops once the average-erasure bracket is this narrow.
    pub bisect_tol: f64,
    /// A run whose residuals move less than this in one iteration has reached
    /// a nonzero fixed point and stops early as not converged.
    pub stall_tol: f64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            zero_tol: 1e-10,
            bisect_tol: 1e-4,
            stall_tol: 1e-13,
        }
    }
}

impl DeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1
            || !(self.zero_tol > 0.0 && self.zero_tol < 1.0)
            || !(self.bisect_tol > 0.0 && self.bisect_tol < 1.0)
            || self.stall_tol < 0.0
        {
            return Err(Error::InvalidParams(format!("bad DE options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeResult {
    pub converged: bool,
    /// Iterations run; equals the convergence iteration when `converged`.
    pub iterations: usize,
    /// Per-VN erasure probability at exit.
    pub residuals: Vec<f64>,
}

impl DeResult {
    pub fn mean_residual(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len() as f64
    }
}

/// Edge-instance adjacency of a protograph, built once and reused across runs.
#[derive(Clone, Debug)]
pub struct EdgeGraph {
    vn_count: usize,
    /// Edges are CN-major; CN `k` owns `cn_ptr[k]..cn_ptr[k + 1]`.
    cn_ptr: Vec<usize>,
    /// Edge ids grouped by VN: VN `j` owns `vn_edges[vn_ptr[j]..vn_ptr[j + 1]]`.
    vn_ptr: Vec<usize>,
    vn_edges: Vec<usize>,
    edge_vn: Vec<usize>,
}

impl EdgeGraph {
    pub fn new(graph: &Protograph) -> Self {
        let mut cn_ptr = vec![0];
        let mut edge_vn = Vec::new();
        for k in 0..graph.cn_count() {
            for j in 0..graph.vn_count() {
                for _ in 0..graph.multiplicity(k, j) {
                    edge_vn.push(j);
                }
            }
            cn_ptr.push(edge_vn.len());
        }
        let vn_count = graph.vn_count();
        let mut buckets = vec![Vec::new(); vn_count];
        for (e, &j) in edge_vn.iter().enumerate() {
            buckets[j].push(e);
        }
        let mut vn_ptr = vec![0];
        let mut vn_edges = Vec::with_capacity(edge_vn.len());
        for b in buckets {
            vn_edges.extend(b);
            vn_ptr.push(vn_edges.len());
        }
        Self {
            vn_count,
            cn_ptr,
            vn_ptr,
            vn_edges,
            edge_vn,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edge_vn.len()
    }

    pub fn vn_count(&self) -> usize {
        self.vn_count
    }
}

/// Step-by-step density evolution state.
pub struct DensityEvolution<'a> {
    graph: &'a EdgeGraph,
    eps: &'a [f64],
    /// VN-to-CN erasure probability per edge.
    p: Vec<f64>,
    /// CN-to-VN erasure probability per edge.
    q: Vec<f64>,
    residuals: Vec<f64>,
    iteration: usize,
    buf: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> DensityEvolution<'a> {
    pub fn new(graph: &'a EdgeGraph, eps: &'a [f64]) -> Self {
        assert_eq!(eps.len(), graph.vn_count, "one erasure probability per VN");
        let p = graph.edge_vn.iter().map(|&j| eps[j]).collect();
        Self {
            graph,
            eps,
            p,
            q: vec![0.0; graph.edge_count()],
            residuals: eps.to_vec(),
            iteration: 0,
            buf: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn vn_to_cn(&self) -> &[f64] {
        &self.p
    }

    pub fn cn_to_vn(&self) -> &[f64] {
        &self.q
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// One CN update followed by one VN update. Returns the largest change of
    /// any residual.
    pub fn step(&mut self) -> f64 {
        let g = self.graph;
        let (buf, scratch) = (&mut self.buf, &mut self.scratch);
        for k in 0..g.cn_ptr.len() - 1 {
            let (s, t) = (g.cn_ptr[k], g.cn_ptr[k + 1]);
            extrinsic_products(self.p[s..t].iter().map(|&p| 1.0 - p), buf, scratch);
            for (e, prod) in (s..t).zip(scratch.iter()) {
                self.q[e] = 1.0 - prod;
            }
        }
        let mut delta: f64 = 0.0;
        for j in 0..g.vn_count {
            let edges = &g.vn_edges[g.vn_ptr[j]..g.vn_ptr[j + 1]];
            let full = extrinsic_products(edges.iter().map(|&e| self.q[e]), buf, scratch);
            let eps = self.eps[j];
            for (&e, prod) in edges.iter().zip(scratch.iter()) {
                self.p[e] = eps * prod;
            }
            let r = eps * full;
            delta = delta.max((self.residuals[j] - r).abs());
            self.residuals[j] = r;
        }
        self.iteration += 1;
        delta
    }

    pub fn run(mut self, opts: &DeOptions) -> DeResult {
        let mut converged = false;
        while self.iteration < opts.max_iters {
            let delta = self.step();
            if self.residuals.iter().all(|&r| r < opts.zero_tol) {
                converged = true;
                break;
            }
            if delta < opts.stall_tol {
                break;
            }
        }
        DeResult {
            converged,
            iterations: self.iteration,
            residuals: self.residuals,
        }
    }
}

/// Fills `out[i]` with the product of all factors but the `i`-th and returns
/// the full product. Prefix/suffix products keep zero factors exact.
fn extrinsic_products(
    factors: impl Iterator<Item = f64>,
    buf: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> f64 {
    buf.clear();
    buf.extend(factors);
    out.clear();
    let mut acc = 1.0;
    for &f in buf.iter() {
        out.push(acc);
        acc *= f;
    }
    let mut suffix = 1.0;
    for i in (0..buf.len()).rev() {
        out[i] *= suffix;
        suffix *= buf[i];
    }
    acc
}

/// Runs density evolution for per-VN erasure probabilities `eps`.
pub fn run_de(graph: &Protograph, eps: &[f64], opts: &DeOptions) -> DeResult {
    let eg = EdgeGraph::new(graph);
    DensityEvolution::new(&eg, eps).run(opts)
}

/// Decoding threshold in average erasure and the SNR where it is reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub avg_erasure: f64,
    pub snr_db: f64,
}

/// Bisection over the profile's SNR range for the lowest SNR (largest average
/// erasure) at which density evolution converges.
pub fn threshold(
    graph: &Protograph,
    map: &BitMapping,
    profile: &ErasureProfile,
    opts: &DeOptions,
) -> Result<Threshold> {
    opts.validate()?;
    if map.v() != graph.vn_count() || map.m() != profile.m() {
        return Err(Error::Mapping(format!(
            "mapping is {}x{}, graph has {} VNs and profile {} channels",
            map.m(),
            map.v(),
            graph.vn_count(),
            profile.m()
        )));
    }
    let eg = EdgeGraph::new(graph);
    let converges = |snr: f64| -> Result<bool> {
        let eps = map.effective_erasures(&profile.erasures_at(snr)?);
        Ok(DensityEvolution::new(&eg, &eps).run(opts).converged)
    };
    let (mut lo, mut hi) = profile.snr_range();
    if !converges(hi)? {
        return Err(Error::NoBracket(format!("no convergence even at {hi} dB")));
    }
    if converges(lo)? {
        return Err(Error::NoBracket(format!(
            "converges already at the lowest SNR {lo} dB"
        )));
    }
    for _ in 0..60 {
        if profile.avg_at(lo)? - profile.avg_at(hi)? <= opts.bisect_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Threshold {
        avg_erasure: profile.avg_at(hi)?,
        snr_db: hi,
    })
}

/// Threshold on a single BEC: every VN sees the same erasure probability.
pub fn scalar_threshold(graph: &Protograph, opts: &DeOptions) -> Result<f64> {
    let profile = ErasureProfile::scalar_bec(2);
    let map = BitMapping::uniform(1, graph.vn_count());
    Ok(threshold(graph, &map, &profile, opts)?.avg_erasure)
}

/// Density evolution at the profile point with average erasure `avg`.
pub fn evaluate_at(
    graph: &Protograph,
    map: &BitMapping,
    profile: &ErasureProfile,
    avg: f64,
    opts: &DeOptions,
) -> Result<DeResult> {
    let snr = profile.snr_for_avg_erasure(avg)?;
    let eps = map.effective_erasures(&profile.erasures_at(snr)?);
    Ok(run_de(graph, &eps, opts))
}

/// `l_s(avg)`, or `None` when density evolution does not converge.
pub fn convergence_iterations(
    graph: &Protograph,
    map: &BitMapping,
    profile: &ErasureProfile,
    avg: f64,
    opts: &DeOptions,
) -> Result<Option<usize>> {
    let r = evaluate_at(graph, map, profile, avg, opts)?;
    Ok(r.converged.then_some(r.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protograph::{build_single_chain, SingleChainParams};

    fn block36() -> Protograph {
        Protograph::from_multiplicity(vec![vec![3, 3]]).unwrap()
    }

    fn chain(l: u32) -> Protograph {
        build_single_chain(&SingleChainParams::new(3, 6, l, 2).unwrap()).unwrap()
    }

    /// Fixed-point iteration of the (3,6) recursion, bisected on the channel.
    fn scalar_oracle() -> f64 {
        let converges = |eps: f64| {
            let mut x = eps;
            for _ in 0..100_000 {
                x = eps * (1.0 - (1.0 - x).powi(5)).powi(2);
                if x < 1e-12 {
                    return true;
                }
            }
            false
        };
        let (mut lo, mut hi) = (0.3, 0.5);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if converges(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn trivial_channels() {
        let g = chain(10);
        let opts = DeOptions::default();
        let r = run_de(&g, &vec![0.0; g.vn_count()], &opts);
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        let r = run_de(&g, &vec![1.0; g.vn_count()], &opts);
        assert!(!r.converged);
        assert!(r.residuals.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn block_threshold_matches_oracle() {
        let oracle = scalar_oracle();
        assert!((oracle - 0.4294).abs() < 5e-4);
        let th = scalar_threshold(&block36(), &DeOptions::default()).unwrap();
        assert!((th - oracle).abs() < 5e-4, "{th} vs {oracle}");
    }

    #[test]
    fn coupling_raises_threshold() {
        let opts = DeOptions::default();
        let th = scalar_threshold(&chain(10), &opts).unwrap();
        // short chains gain from their terminated ends well past the block threshold
        assert!(th > 0.48 && th < 0.52, "{th}");
    }

    #[test]
    fn uniform_vector_equals_scalar() {
        let g = chain(8);
        let eg = EdgeGraph::new(&g);
        let map = BitMapping::uniform(4, g.vn_count());
        let eff = map.effective_erasures(&[0.47; 4]);
        let opts = DeOptions::default();
        let a = DensityEvolution::new(&eg, &eff).run(&opts);
        let b = DensityEvolution::new(&eg, &vec![0.47; g.vn_count()]).run(&opts);
        assert_eq!(a, b);
    }

    #[test]
    fn messages_nonincreasing() {
        let g = chain(10);
        let eg = EdgeGraph::new(&g);
        let eps: Vec<f64> = (0..g.vn_count())
            .map(|j| 0.4 + 0.01 * (j % 7) as f64)
            .collect();
        let mut de = DensityEvolution::new(&eg, &eps);
        let mut prev = de.vn_to_cn().to_vec();
        for _ in 0..200 {
            de.step();
            assert!(de.vn_to_cn().iter().zip(&prev).all(|(a, b)| a <= b));
            prev = de.vn_to_cn().to_vec();
        }
    }

    #[test]
    fn parallel_edges_count_separately() {
        // one CN with a double edge to VN 0 and a single edge to VN 1
        let g = Protograph::from_multiplicity(vec![vec![2, 1]]).unwrap();
        let eg = EdgeGraph::new(&g);
        let eps = [0.5, 0.4];
        let mut de = DensityEvolution::new(&eg, &eps);
        de.step();
        let q = de.cn_to_vn();
        assert!((q[0] - (1.0 - 0.5 * 0.6)).abs() < 1e-15);
        assert!((q[2] - (1.0 - 0.5 * 0.5)).abs() < 1e-15);
        assert!((de.residuals()[0] - 0.5 * q[0] * q[1]).abs() < 1e-15);
    }

    #[test]
    fn extrinsic_with_zero_factor() {
        let (mut buf, mut out) = (Vec::new(), Vec::new());
        let full = extrinsic_products([2.0, 0.0, 3.0].into_iter(), &mut buf, &mut out);
        assert_eq!(full, 0.0);
        assert_eq!(out, vec![0.0, 6.0, 0.0]);
    }

    #[test]
    fn bracket_errors() {
        let g = block36();
        let map = BitMapping::uniform(1, 2);
        let snr: Vec<f64> = (0..30).map(f64::from).collect();
        let eps = snr.iter().map(|s| vec![0.6 - 0.1 * s / 29.0]).collect();
        let narrow = ErasureProfile::from_samples("bec", "none", snr, eps).unwrap();
        assert!(matches!(
            threshold(&g, &map, &narrow, &DeOptions::default()),
            Err(Error::NoBracket(_))
        ));
    }
}
