//! Lifting a protograph into a sparse parity-check matrix, and realizing a
//! fractional bit mapping on the lifted code's bits.
//!
//! Bit `j * Q + t` is copy `t` of protograph VN `j`; check `k * Q + t` is copy
//! `t` of protograph CN `k`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitmap::BitMapping;
use crate::error::{Error, Result};
use crate::protograph::Protograph;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedCode {
    pub n: usize,
    pub n_checks: usize,
    pub q: usize,
    pub seed: u64,
    /// `(check, bit)` pairs, no duplicates.
    pub edges: Vec<(u32, u32)>,
}

impl LiftedCode {
    pub fn vn_count(&self) -> usize {
        self.n / self.q
    }

    /// Protograph VN that bit `bit` was copied from.
    pub fn origin(&self, bit: usize) -> usize {
        bit / self.q
    }

    /// `1 - n_checks / n`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.n_checks as f64 / self.n as f64
    }

    pub fn bit_degrees(&self) -> Vec<u32> {
        let mut d = vec![0; self.n];
        for &(_, b) in &self.edges {
            d[b as usize] += 1;
        }
        d
    }

    pub fn check_degrees(&self) -> Vec<u32> {
        let mut d = vec![0; self.n_checks];
        for &(c, _) in &self.edges {
            d[c as usize] += 1;
        }
        d
    }

    /// `H x` over GF(2).
    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        let mut s = vec![0u8; self.n_checks];
        for &(c, b) in &self.edges {
            s[c as usize] ^= bits[b as usize] & 1;
        }
        s
    }

    /// Sparse coordinate text: header `n n_checks Q seed`, then `check bit` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.edges.len() * 12);
        writeln!(
            s,
            "# lifted parity-check matrix: bit j*Q+t is copy t of VN j"
        )
        .unwrap();
        writeln!(s, "{} {} {} {}", self.n, self.n_checks, self.q, self.seed).unwrap();
        for &(c, b) in &self.edges {
            writeln!(s, "{c} {b}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hn, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "empty code file"))?;
        let h: Vec<u64> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(hn, format!("{e}")))?;
        let [n, n_checks, q, seed] = h[..] else {
            return Err(Error::parse(hn, "header must be `n n_checks Q seed`"));
        };
        let (n, n_checks, q) = (n as usize, n_checks as usize, q as usize);
        if q < 2 || n % q != 0 || n_checks % q != 0 {
            return Err(Error::parse(
                hn,
                "n and n_checks must be multiples of Q >= 2",
            ));
        }
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let mut w = line.split_whitespace().map(str::parse::<u32>);
            match (w.next(), w.next(), w.next()) {
                (Some(Ok(c)), Some(Ok(b)), None) if (c as usize) < n_checks && (b as usize) < n => {
                    edges.push((c, b))
                }
                _ => return Err(Error::parse(ln, format!("bad edge line {line:?}"))),
            }
        }
        Ok(Self {
            n,
            n_checks,
            q,
            seed,
            edges,
        })
    }
}

const SHIFT_DRAWS: usize = 200;

/// Shifts placed so far, indexed by check and by variable node.
struct Shifts {
    q: usize,
    all: Vec<(usize, usize, usize)>,
    by_cn: Vec<Vec<usize>>,
    by_vn: Vec<Vec<usize>>,
}

impl Shifts {
    fn new(cns: usize, vns: usize, q: usize) -> Self {
        Self {
            q,
            all: Vec::new(),
            by_cn: vec![Vec::new(); cns],
            by_vn: vec![Vec::new(); vns],
        }
    }

    fn has(&self, k: usize, j: usize, s: usize) -> bool {
        self.by_cn[k].iter().any(|&e| self.all[e] == (k, j, s))
    }

    fn push(&mut self, k: usize, j: usize, s: usize) {
        self.by_cn[k].push(self.all.len());
        self.by_vn[j].push(self.all.len());
        self.all.push((k, j, s));
    }

    /// Whether a new edge `(k, j, s)` closes a 4-cycle
    /// `k -> j -> k2 -> j2 -> k`, i.e. `s - s_d + s_c - s_b = 0 mod q`.
    fn closes_four_cycle(&self, k: usize, j: usize, s: usize) -> bool {
        let q = self.q;
        self.by_vn[j].iter().any(|&d| {
            let (k2, _, sd) = self.all[d];
            self.by_cn[k2].iter().filter(|&&c| c != d).any(|&c| {
                let (_, j2, sc) = self.all[c];
                self.by_vn[j2]
                    .iter()
                    .filter(|&&b| b != c && self.all[b].0 == k)
                    .any(|&b| (s + q - sd + sc + q - self.all[b].2).is_multiple_of(q))
            })
        })
    }
}

/// Replaces every protograph edge instance by a circulant shift. Parallel
/// edges of one protograph entry get distinct shifts, so the lifted graph
/// has no parallel edges. Shifts are drawn at random and redrawn while they
/// close a 4-cycle with the shifts placed so far; when `q` is too small to
/// avoid one, the last draw is kept.
pub fn lift(graph: &Protograph, q: usize, seed: u64) -> Result<LiftedCode> {
    if q < 2 {
        return Err(Error::Lifting(format!(
            "lift factor must be at least 2, got {q}"
        )));
    }
    let n = q * graph.vn_count();
    let n_checks = q * graph.cn_count();
    if n > u32::MAX as usize || n_checks > u32::MAX as usize {
        return Err(Error::Lifting("lifted code too large".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifts = Shifts::new(graph.cn_count(), graph.vn_count(), q);
    let mut four_cycles = 0;
    for (k, j, mult) in graph.edges() {
        let mult = mult as usize;
        if mult > q {
            return Err(Error::Lifting(format!(
                "entry ({k}, {j}) has multiplicity {mult} > Q = {q}"
            )));
        }
        for _ in 0..mult {
            let mut last = None;
            for _ in 0..SHIFT_DRAWS {
                let s = rng.gen_range(0..q);
                if shifts.has(k, j, s) {
                    continue;
                }
                last = Some(s);
                if !shifts.closes_four_cycle(k, j, s) {
                    break;
                }
            }
            let s = match last {
                Some(s) => s,
                None => (0..q).find(|&s| !shifts.has(k, j, s)).expect("mult <= q"),
            };
            if shifts.closes_four_cycle(k, j, s) {
                four_cycles += 1;
            }
            shifts.push(k, j, s);
        }
    }
    if four_cycles > 0 {
        log::debug!("lift by {q}: {four_cycles} shifts close 4-cycles");
    }
    let mut edges = Vec::with_capacity(shifts.all.len() * q);
    for &(k, j, s) in &shifts.all {
        for t in 0..q {
            edges.push(((k * q + t) as u32, (j * q + (t + s) % q) as u32));
        }
    }
    edges.sort_unstable();
    Ok(LiftedCode {
        n,
        n_checks,
        q,
        seed,
        edges,
    })
}

/// Bits per channel for each VN: `counts[j][i]` of VN `j`'s `Q` copies go to
/// channel `i`. Largest-remainder rounding per VN, then single-bit moves
/// between VNs until every channel holds exactly `Q V / m` bits.
pub fn apportion(map: &BitMapping, q: usize) -> Result<Vec<Vec<usize>>> {
    let (m, v) = (map.m(), map.v());
    let n = q * v;
    if !n.is_multiple_of(m) {
        return Err(Error::Lifting(format!("m = {m} does not divide n = {n}")));
    }
    let ideal = |i: usize, j: usize| map.get(i, j).clamp(0.0, 1.0) * q as f64;
    let mut counts = Vec::with_capacity(v);
    for j in 0..v {
        let col_sum: f64 = (0..m).map(|i| ideal(i, j)).sum();
        let scale = if col_sum > 0.0 {
            q as f64 / col_sum
        } else {
            0.0
        };
        let exact: Vec<f64> = (0..m).map(|i| ideal(i, j) * scale).collect();
        let mut c: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = q - c.iter().sum::<usize>();
        for &i in order.iter().cycle().take(short) {
            c[i] += 1;
        }
        counts.push(c);
    }
    let target = n / m;
    loop {
        let totals: Vec<usize> = (0..m).map(|i| counts.iter().map(|c| c[i]).sum()).collect();
        let over = (0..m).find(|&i| totals[i] > target);
        let under = (0..m).find(|&i| totals[i] < target);
        let (Some(from), Some(to)) = (over, under) else {
            break;
        };
        // move the bit whose rounding error improves most
        let gain = |j: usize| {
            (counts[j][from] as f64 - ideal(from, j)) + (ideal(to, j) - counts[j][to] as f64)
        };
        let j = (0..v)
            .filter(|&j| counts[j][from] > 0)
            .max_by(|&a, &b| gain(a).total_cmp(&gain(b)).then(b.cmp(&a)))
            .expect("an over-full channel has bits");
        counts[j][from] -= 1;
        counts[j][to] += 1;
    }
    Ok(counts)
}

/// Channel index of every lifted bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelAssignment {
    pub m: usize,
    pub channels: Vec<u8>,
}

/// Realizes `map` on `Q` copies per VN; which copies get which channel is
/// shuffled by `seed`.
pub fn assign_channels(map: &BitMapping, q: usize, seed: u64) -> Result<ChannelAssignment> {
    let counts = apportion(map, q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channels = Vec::with_capacity(q * map.v());
    for c in counts {
        let mut block: Vec<u8> = c
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i as u8, k))
            .collect();
        block.shuffle(&mut rng);
        channels.extend(block);
    }
    Ok(ChannelAssignment {
        m: map.m(),
        channels,
    })
}

impl ChannelAssignment {
    pub fn n(&self) -> usize {
        self.channels.len()
    }

    pub fn totals(&self) -> Vec<usize> {
        let mut t = vec![0; self.m];
        for &c in &self.channels {
            t[c as usize] += 1;
        }
        t
    }

    /// Groups bits into modulation symbols: the bits of each channel are
    /// interleaved by `seed`, then symbol `s` takes the `s`-th bit of every
    /// channel. Entry `s * m + i` is the bit sent on level `i` of symbol `s`.
    pub fn frame_symbols(&self, seed: u64) -> Result<Vec<u32>> {
        let totals = self.totals();
        if totals.iter().any(|&t| t != totals[0]) {
            return Err(Error::Lifting(format!("unequal channel loads {totals:?}")));
        }
        let mut per_channel: Vec<Vec<u32>> = vec![Vec::with_capacity(totals[0]); self.m];
        for (b, &c) in self.channels.iter().enumerate() {
            per_channel[c as usize].push(b as u32);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for list in &mut per_channel {
            list.shuffle(&mut rng);
        }
        let mut out = Vec::with_capacity(self.channels.len());
        for s in 0..totals[0] {
            for list in &per_channel {
                out.push(list[s]);
            }
        }
        Ok(out)
    }

    /// Run-length text: header `m n`, then `channel count` lines in bit order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# channel assignment, run-length encoded in bit order").unwrap();
        writeln!(s, "{} {}", self.m, self.channels.len()).unwrap();
        let mut i = 0;
        while i < self.channels.len() {
            let c = self.channels[i];
            let run = self.channels[i..].iter().take_while(|&&x| x == c).count();
            writeln!(s, "{c} {run}").unwrap();
            i += run;
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hn, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "empty assignment file"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(hn, format!("{e}")))?;
        let [m, n] = h[..] else {
            return Err(Error::parse(hn, "header must be `m n`"));
        };
        let mut channels = Vec::with_capacity(n);
        for (ln, line) in lines {
            let mut w = line.split_whitespace().map(str::parse::<usize>);
            match (w.next(), w.next(), w.next()) {
                (Some(Ok(c)), Some(Ok(run)), None) if c < m && c < 256 => {
                    channels.extend(std::iter::repeat_n(c as u8, run))
                }
                _ => return Err(Error::parse(ln, format!("bad run line {line:?}"))),
            }
        }
        if channels.len() != n {
            return Err(Error::parse(
                0,
                format!("runs cover {} bits, header says {n}", channels.len()),
            ));
        }
        Ok(Self { m, channels })
    }
}
