//! Bit-channel capacities of labeled constellations over complex AWGN and the
//! equivalent parallel erasure channels used for threshold analysis.
//!
//! Noise is circularly symmetric with unit total variance (`N0 = 1`), so the
//! SNR is the average symbol energy `Es/N0` and each real dimension carries
//! noise of variance 1/2. With that convention a Gauss-Hermite node `t` is a
//! noise sample directly.

use std::fmt::Write as _;

use gauss_quad::GaussHermite;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Quadrature nodes per real dimension.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Built-in 16-QAM: per real dimension the amplitudes `-3, -1, 1, 3` carry the
/// Gray pairs `00, 01, 11, 10`. The in-phase pair is bit levels (0, 1), the
/// quadrature pair levels (2, 3), so levels 0 and 2 are the two sign bits and
/// levels 1 and 3 the two inner/outer bits.
pub const QAM16_GRAY: &str = "16qam-gray";
pub const QPSK_GRAY: &str = "qpsk-gray";
pub const BPSK: &str = "bpsk";

/// Square constellation that factors into two independently labeled PAMs.
#[derive(Clone, Debug, PartialEq)]
struct SeparablePam {
    /// Normalized amplitudes.
    amplitudes: Vec<f64>,
    /// Per-amplitude label over `bits_per_dim` bits, MSB first.
    labels: Vec<u32>,
    bits_per_dim: usize,
    /// Whether the quadrature dimension carries bits too.
    quadrature: bool,
}

/// Constellation points with a bit label per point. Bit level `i` of a label
/// is bit `m - 1 - i` of the integer (level 0 is the MSB).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledConstellation {
    id: String,
    points: Vec<Complex64>,
    labels: Vec<u32>,
    bits: usize,
    separable: Option<SeparablePam>,
}

impl LabeledConstellation {
    pub fn new(id: impl Into<String>, points: Vec<Complex64>, labels: Vec<u32>) -> Result<Self> {
        let n = points.len();
        if n < 2 || !n.is_power_of_two() || labels.len() != n {
            return Err(Error::InvalidParams(
                "constellation needs 2^m points and one label per point".into(),
            ));
        }
        let bits = n.trailing_zeros() as usize;
        let mut seen = vec![false; n];
        for &l in &labels {
            if l as usize >= n || std::mem::replace(&mut seen[l as usize], true) {
                return Err(Error::InvalidParams("labels are not a bijection".into()));
            }
        }
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / n as f64;
        let scale = energy.sqrt().recip();
        Ok(Self {
            id: id.into(),
            points: points.into_iter().map(|p| p * scale).collect(),
            labels,
            bits,
            separable: None,
        })
    }

    fn from_pam(id: &str, amplitudes: &[f64], labels: &[u32], quadrature: bool) -> Self {
        let bpd = amplitudes.len().trailing_zeros() as usize;
        let mut points = Vec::new();
        let mut full = Vec::new();
        if quadrature {
            for (&ai, &li) in amplitudes.iter().zip(labels) {
                for (&aq, &lq) in amplitudes.iter().zip(labels) {
                    points.push(Complex64::new(ai, aq));
                    full.push((li << bpd) | lq);
                }
            }
        } else {
            for (&a, &l) in amplitudes.iter().zip(labels) {
                points.push(Complex64::new(a, 0.0));
                full.push(l);
            }
        }
        let mut c = Self::new(id, points, full).expect("built-in constellation");
        let dims = if quadrature { 2.0 } else { 1.0 };
        let energy = amplitudes.iter().map(|a| a * a).sum::<f64>() / amplitudes.len() as f64;
        let scale = (dims * energy).sqrt().recip();
        c.separable = Some(SeparablePam {
            amplitudes: amplitudes.iter().map(|a| a * scale).collect(),
            labels: labels.to_vec(),
            bits_per_dim: bpd,
            quadrature,
        });
        c
    }

    pub fn qam16_gray() -> Self {
        Self::from_pam(
            QAM16_GRAY,
            &[-3.0, -1.0, 1.0, 3.0],
            &[0b00, 0b01, 0b11, 0b10],
            true,
        )
    }

    pub fn qpsk_gray() -> Self {
        Self::from_pam(QPSK_GRAY, &[-1.0, 1.0], &[0, 1], true)
    }

    pub fn bpsk() -> Self {
        Self::from_pam(BPSK, &[-1.0, 1.0], &[0, 1], false)
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            QAM16_GRAY => Ok(Self::qam16_gray()),
            QPSK_GRAY => Ok(Self::qpsk_gray()),
            BPSK => Ok(Self::bpsk()),
            other => Err(Error::InvalidParams(format!(
                "unknown constellation {other:?}"
            ))),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn labeling_id(&self) -> &'static str {
        if self.separable.is_some() {
            "gray-sign-first"
        } else {
            "custom"
        }
    }

    /// `m = log2 |X|`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn bit(&self, point: usize, level: usize) -> u32 {
        (self.labels[point] >> (self.bits - 1 - level)) & 1
    }

    /// Point index carrying `label`.
    pub fn point_for_label(&self, label: u32) -> usize {
        self.labels
            .iter()
            .position(|&l| l == label)
            .expect("label in range")
    }

    /// Bit levels grouped by identical capacity; for square Gray QAM these are
    /// the same-role bits of the two dimensions.
    pub fn capacity_groups(&self) -> Vec<Vec<usize>> {
        match &self.separable {
            Some(s) if s.quadrature => (0..s.bits_per_dim)
                .map(|b| vec![b, b + s.bits_per_dim])
                .collect(),
            _ => (0..self.bits).map(|b| vec![b]).collect(),
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-level capacities of a labeled real PAM with noise variance 1/2.
fn bit_capacities_1d(
    amplitudes: &[f64],
    labels: &[u32],
    bits: usize,
    sqrt_snr: f64,
    quad: &GaussHermite,
) -> Vec<f64> {
    let n = amplitudes.len();
    let norm = std::f64::consts::PI.sqrt().recip();
    (0..bits)
        .map(|level| {
            let bit = |p: usize| (labels[p] >> (bits - 1 - level)) & 1;
            let mut loss = 0.0;
            for x in 0..n {
                let expectation = quad.integrate(|z| {
                    let metric =
                        |xp: usize| -(sqrt_snr * (amplitudes[x] - amplitudes[xp]) + z).powi(2);
                    let all = log_sum_exp((0..n).map(metric));
                    let same = log_sum_exp((0..n).filter(|&xp| bit(xp) == bit(x)).map(metric));
                    all - same
                });
                loss += norm * expectation;
            }
            1.0 - loss / (n as f64 * std::f64::consts::LN_2)
        })
        .collect()
}

fn bit_capacities_2d(c: &LabeledConstellation, sqrt_snr: f64, quad: &GaussHermite) -> Vec<f64> {
    let n = c.points.len();
    let nodes: Vec<(f64, f64)> = quad.iter().map(|(x, w)| (*x, *w)).collect();
    (0..c.bits)
        .map(|level| {
            let mut loss = 0.0;
            for x in 0..n {
                let bx = c.bit(x, level);
                for &(zr, wr) in &nodes {
                    for &(zi, wi) in &nodes {
                        let z = Complex64::new(zr, zi);
                        let metric =
                            |xp: usize| -(sqrt_snr * (c.points[x] - c.points[xp]) + z).norm_sqr();
                        let all = log_sum_exp((0..n).map(metric));
                        let same =
                            log_sum_exp((0..n).filter(|&xp| c.bit(xp, level) == bx).map(metric));
                        loss += wr * wi * (all - same);
                    }
                }
            }
            1.0 - loss / (std::f64::consts::PI * n as f64 * std::f64::consts::LN_2)
        })
        .collect()
}

/// `C_i = I(B_i; Y)` under uniform inputs and parallel demapping, by
/// Gauss-Hermite quadrature with `nodes` points per real dimension.
pub fn bit_channel_capacities_with(
    constellation: &LabeledConstellation,
    snr_db: f64,
    nodes: usize,
) -> Vec<f64> {
    let quad = GaussHermite::new(nodes.max(2)).expect("at least two nodes");
    let sqrt_snr = 10f64.powf(snr_db / 10.0).sqrt();
    let caps = match &constellation.separable {
        Some(s) => {
            let dim = bit_capacities_1d(&s.amplitudes, &s.labels, s.bits_per_dim, sqrt_snr, &quad);
            if s.quadrature {
                dim.iter().chain(dim.iter()).copied().collect()
            } else {
                dim
            }
        }
        None => bit_capacities_2d(constellation, sqrt_snr, &quad),
    };
    caps.into_iter().map(|c| c.clamp(0.0, 1.0)).collect()
}

pub fn bit_channel_capacities(constellation: &LabeledConstellation, snr_db: f64) -> Vec<f64> {
    bit_channel_capacities_with(constellation, snr_db, DEFAULT_QUADRATURE_NODES)
}

/// The same capacities without the per-dimension factorization.
pub fn bit_channel_capacities_joint(
    constellation: &LabeledConstellation,
    snr_db: f64,
    nodes: usize,
) -> Vec<f64> {
    let quad = GaussHermite::new(nodes.max(2)).expect("at least two nodes");
    let sqrt_snr = 10f64.powf(snr_db / 10.0).sqrt();
    bit_capacities_2d(constellation, sqrt_snr, &quad)
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0))
        .collect()
}

/// `E_b/N_0 = E_s/N_0 - 10 log10(R m)` in dB.
pub fn ebn0_db(snr_db: f64, rate: f64, m: usize) -> f64 {
    snr_db - 10.0 * (rate * m as f64).log10()
}

pub fn snr_db_from_ebn0(ebn0_db: f64, rate: f64, m: usize) -> f64 {
    ebn0_db + 10.0 * (rate * m as f64).log10()
}

/// Largest allowed jump of the average erasure between neighboring samples.
pub const MAX_AVG_STEP: f64 = 0.005;

/// Tabulated equivalent-BEC erasure probabilities versus SNR.
#[derive(Clone, Debug, PartialEq)]
pub struct ErasureProfile {
    constellation: String,
    labeling: String,
    snr_db: Vec<f64>,
    erasures: Vec<Vec<f64>>,
    average: Vec<f64>,
}

/// `-2 dB ..= 12 dB` in 0.05 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..=280).map(|i| -2.0 + f64::from(i) * 0.05).collect()
}

pub fn erasure_profile(
    constellation: &LabeledConstellation,
    snr_grid: &[f64],
) -> Result<ErasureProfile> {
    let erasures = snr_grid
        .iter()
        .map(|&s| {
            bit_channel_capacities(constellation, s)
                .into_iter()
                .map(|c| 1.0 - c)
                .collect()
        })
        .collect();
    ErasureProfile::from_samples(
        constellation.id(),
        constellation.labeling_id(),
        snr_grid.to_vec(),
        erasures,
    )
}

impl ErasureProfile {
    pub fn from_samples(
        constellation: &str,
        labeling: &str,
        snr_db: Vec<f64>,
        erasures: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if snr_db.len() < 2 || snr_db.len() != erasures.len() {
            return Err(Error::Profile("need at least two samples".into()));
        }
        let m = erasures[0].len();
        if m == 0 || erasures.iter().any(|e| e.len() != m) {
            return Err(Error::Profile("inconsistent channel count".into()));
        }
        if snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Profile(
                "SNR grid must be strictly increasing".into(),
            ));
        }
        if erasures.iter().flatten().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::Profile("erasure probability outside [0, 1]".into()));
        }
        let average: Vec<f64> = erasures
            .iter()
            .map(|e| e.iter().sum::<f64>() / m as f64)
            .collect();
        for w in average.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Profile(
                    "average erasure must strictly decrease with SNR".into(),
                ));
            }
            if w[0] - w[1] >= MAX_AVG_STEP {
                return Err(Error::Profile(format!(
                    "grid too coarse: average erasure jumps by {:.4}",
                    w[0] - w[1]
                )));
            }
        }
        Ok(Self {
            constellation: constellation.into(),
            labeling: labeling.into(),
            snr_db,
            erasures,
            average,
        })
    }

    /// A single BEC: erasure probability `1 - x` at "SNR" `x` over `[0, 1]`.
    /// Lets scalar-channel analysis share the profile-driven code paths.
    pub fn scalar_bec(points: usize) -> Self {
        let n = points.max(2);
        let snr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let erasures = snr.iter().map(|s| vec![1.0 - s]).collect();
        let average = snr.iter().map(|s| 1.0 - s).collect();
        Self {
            constellation: "bec".into(),
            labeling: "none".into(),
            snr_db: snr,
            erasures,
            average,
        }
    }

    pub fn constellation(&self) -> &str {
        &self.constellation
    }

    pub fn labeling(&self) -> &str {
        &self.labeling
    }

    pub fn m(&self) -> usize {
        self.erasures[0].len()
    }

    pub fn snr_grid(&self) -> &[f64] {
        &self.snr_db
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (&self.erasures[i], self.average[i])
    }

    pub fn snr_range(&self) -> (f64, f64) {
        (self.snr_db[0], *self.snr_db.last().unwrap())
    }

    /// `(highest, lowest)` average erasure covered.
    pub fn avg_range(&self) -> (f64, f64) {
        (self.average[0], *self.average.last().unwrap())
    }

    fn segment(&self, snr_db: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.snr_range();
        if !(lo..=hi).contains(&snr_db) {
            return Err(Error::OutOfRange {
                target: snr_db,
                lo,
                hi,
            });
        }
        let i = self
            .snr_db
            .partition_point(|&s| s <= snr_db)
            .clamp(1, self.snr_db.len() - 1)
            - 1;
        let t = (snr_db - self.snr_db[i]) / (self.snr_db[i + 1] - self.snr_db[i]);
        Ok((i, t))
    }

    /// Piecewise-linear `eps_i(snr)`.
    pub fn erasures_at(&self, snr_db: f64) -> Result<Vec<f64>> {
        let (i, t) = self.segment(snr_db)?;
        Ok(self.erasures[i]
            .iter()
            .zip(&self.erasures[i + 1])
            .map(|(a, b)| a + t * (b - a))
            .collect())
    }

    pub fn avg_at(&self, snr_db: f64) -> Result<f64> {
        let (i, t) = self.segment(snr_db)?;
        Ok(self.average[i] + t * (self.average[i + 1] - self.average[i]))
    }

    /// Inverse of [`Self::avg_at`].
    pub fn snr_for_avg_erasure(&self, target: f64) -> Result<f64> {
        let (hi, lo) = self.avg_range();
        if !(lo..=hi).contains(&target) {
            return Err(Error::OutOfRange { target, lo, hi });
        }
        // first sample at or below the target
        let k = self.average.partition_point(|&a| a > target);
        if k == 0 {
            return Ok(self.snr_db[0]);
        }
        let (a0, a1) = (self.average[k - 1], self.average[k]);
        let t = (a0 - target) / (a0 - a1);
        Ok(self.snr_db[k - 1] + t * (self.snr_db[k] - self.snr_db[k - 1]))
    }

    pub fn to_text(&self) -> String {
        let m = self.m();
        let mut out = String::new();
        writeln!(out, "# equivalent parallel BEC erasure profile").unwrap();
        writeln!(out, "constellation {}", self.constellation).unwrap();
        writeln!(out, "labeling {}", self.labeling).unwrap();
        let cols: Vec<String> = (0..m).map(|i| format!("eps_{i}")).collect();
        writeln!(out, "snr_db {} eps_avg", cols.join(" ")).unwrap();
        for (k, s) in self.snr_db.iter().enumerate() {
            let e: Vec<String> = self.erasures[k].iter().map(|x| x.to_string()).collect();
            writeln!(out, "{s} {} {}", e.join(" "), self.average[k]).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut constellation = None;
        let mut labeling = None;
        let mut header_seen = false;
        let mut snr = Vec::new();
        let mut erasures = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            let first = words.next().unwrap();
            match first {
                "constellation" => constellation = words.next().map(str::to_owned),
                "labeling" => labeling = words.next().map(str::to_owned),
                "snr_db" => header_seen = true,
                _ => {
                    if !header_seen {
                        return Err(Error::parse(n + 1, "data before column header"));
                    }
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(n + 1, format!("{e}")))?;
                    if vals.len() < 3 {
                        return Err(Error::parse(n + 1, "too few columns"));
                    }
                    snr.push(vals[0]);
                    erasures.push(vals[1..vals.len() - 1].to_vec());
                }
            }
        }
        let constellation =
            constellation.ok_or_else(|| Error::parse(0, "missing constellation"))?;
        let labeling = labeling.unwrap_or_else(|| "custom".into());
        Self::from_samples(&constellation, &labeling, snr, erasures)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constellation_normalized_and_gray() {
        let c = LabeledConstellation::qam16_gray();
        assert_eq!(c.bits(), 4);
        let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
        // horizontal and vertical neighbours differ in exactly one bit
        let d = 2.0 / 10f64.sqrt();
        for (a, pa) in c.points().iter().enumerate() {
            for (b, pb) in c.points().iter().enumerate() {
                if ((pa - pb).norm() - d).abs() < 1e-9 {
                    assert_eq!((c.labels()[a] ^ c.labels()[b]).count_ones(), 1);
                }
            }
        }
        assert_eq!(c.capacity_groups(), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn capacity_limits() {
        let c = LabeledConstellation::qam16_gray();
        for cap in bit_channel_capacities(&c, 40.0) {
            assert!(cap > 1.0 - 1e-9);
        }
        for cap in bit_channel_capacities(&c, -40.0) {
            assert!(cap < 1e-3);
        }
    }

    #[test]
    fn paired_levels_match() {
        let c = LabeledConstellation::qam16_gray();
        for snr in [-2.0, 3.0, 5.2, 9.0] {
            let cap = bit_channel_capacities(&c, snr);
            assert!((cap[0] - cap[2]).abs() < 1e-9);
            assert!((cap[1] - cap[3]).abs() < 1e-9);
            // sign bits are the strong pair
            assert!(cap[0] > cap[1] + 1e-3);
        }
    }

    #[test]
    fn factorized_matches_joint_quadrature() {
        let c = LabeledConstellation::qam16_gray();
        let a = bit_channel_capacities_with(&c, 5.0, 32);
        let b = bit_channel_capacities_joint(&c, 5.0, 32);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn bpsk_is_scalar() {
        let c = LabeledConstellation::bpsk();
        assert_eq!(c.bits(), 1);
        let p = erasure_profile(&c, &default_snr_grid()).unwrap();
        for i in 0..p.snr_grid().len() {
            let (e, avg) = p.sample(i);
            assert_eq!(e[0], avg);
        }
    }

    #[test]
    fn ebn0_conversion() {
        assert!((ebn0_db(5.20, 0.4, 4) - 3.1588).abs() < 1e-3);
        assert_eq!(ebn0_db(4.0, 0.5, 2), 4.0);
        assert_eq!(ebn0_db(4.0, 1.0, 1), 4.0);
        assert!((snr_db_from_ebn0(ebn0_db(3.3, 0.4, 4), 0.4, 4) - 3.3).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_rejected() {
        let c = LabeledConstellation::qam16_gray();
        assert!(matches!(
            erasure_profile(&c, &[0.0, 2.0, 4.0]),
            Err(Error::Profile(_))
        ));
    }

    #[test]
    fn profile_text_round_trip() {
        let c = LabeledConstellation::qam16_gray();
        let grid: Vec<f64> = (0..40).map(|i| 4.0 + i as f64 * 0.05).collect();
        let p = erasure_profile(&c, &grid).unwrap();
        let back = ErasureProfile::parse(&p.to_text()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn inverse_lookup() {
        let p = ErasureProfile::scalar_bec(101);
        assert!((p.snr_for_avg_erasure(0.25).unwrap() - 0.75).abs() < 1e-12);
        assert!(p.snr_for_avg_erasure(1.5).is_err());
        assert!(p.avg_at(2.0).is_err());
    }
}
