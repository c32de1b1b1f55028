//! Fractional bit mappings `A = [a_ij]` from protograph VNs to bit-channels.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Column-sum tolerance for mappings produced in-process.
pub const COLUMN_TOL: f64 = 1e-9;
/// Row-sum tolerance for mappings produced in-process.
pub const ROW_TOL: f64 = 1e-6;
/// Tolerance for tables published with four decimals.
pub const ROUNDED_TABLE_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub column: f64,
    pub row: f64,
}

impl Tolerances {
    pub const STRICT: Self = Self {
        column: COLUMN_TOL,
        row: ROW_TOL,
    };
    pub const ROUNDED: Self = Self {
        column: ROUNDED_TABLE_TOL,
        row: ROUNDED_TABLE_TOL,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::STRICT
    }
}

/// A single broken constraint of a mapping.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// `a[channel][vn]` outside `[0, 1]`.
    Bound {
        channel: usize,
        vn: usize,
        value: f64,
    },
    /// Column of `vn` does not sum to one.
    ColumnSum { vn: usize, sum: f64 },
    /// Row of `channel` does not sum to `V / m`.
    RowSum {
        channel: usize,
        sum: f64,
        expected: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Bound { channel, vn, value } => {
                write!(f, "bound: a[{channel}][{vn}] = {value} outside [0, 1]")
            }
            Violation::ColumnSum { vn, sum } => {
                write!(
                    f,
                    "column sum: VN {vn} sums to {sum}, off by {:e}",
                    sum - 1.0
                )
            }
            Violation::RowSum {
                channel,
                sum,
                expected,
            } => write!(
                f,
                "row sum: channel {channel} sums to {sum}, expected {expected} (off by {:e})",
                sum - expected
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitMapping {
    m: usize,
    v: usize,
    /// Row-major `m x V`.
    a: Vec<f64>,
}

impl BitMapping {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let v = rows.first().map_or(0, Vec::len);
        if m == 0 || v == 0 || rows.iter().any(|r| r.len() != v) {
            return Err(Error::Mapping(
                "mapping must be a non-empty m x V grid".into(),
            ));
        }
        Ok(Self {
            m,
            v,
            a: rows.into_iter().flatten().collect(),
        })
    }

    /// Every entry `1 / m`.
    pub fn uniform(m: usize, v: usize) -> Self {
        assert!(m >= 1 && v >= 1);
        Self {
            m,
            v,
            a: vec![1.0 / m as f64; m * v],
        }
    }

    /// Spreads each VN's fraction on a channel group evenly over the group's channels.
    /// `fractions[j][g]` is the share of VN `j` on `groups[g]`.
    pub fn from_group_fractions(
        m: usize,
        groups: &[Vec<usize>],
        fractions: &[Vec<f64>],
    ) -> Result<Self> {
        let v = fractions.len();
        if v == 0 {
            return Err(Error::Mapping("no VNs".into()));
        }
        let mut a = vec![0.0; m * v];
        for (j, f) in fractions.iter().enumerate() {
            if f.len() != groups.len() {
                return Err(Error::Mapping(format!(
                    "VN {j}: one fraction per group needed"
                )));
            }
            for (g, chans) in groups.iter().enumerate() {
                for &c in chans {
                    if c >= m {
                        return Err(Error::Mapping(format!("channel {c} out of range")));
                    }
                    a[c * v + j] = f[g] / chans.len() as f64;
                }
            }
        }
        Ok(Self { m, v, a })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn get(&self, channel: usize, vn: usize) -> f64 {
        self.a[channel * self.v + vn]
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.a[channel * self.v..(channel + 1) * self.v]
    }

    pub fn column(&self, vn: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.get(i, vn)).collect()
    }

    /// Checks the bound, column-sum and row-sum constraints.
    pub fn validate(&self, tol: Tolerances) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for j in 0..self.v {
                let value = self.get(i, j);
                if !(0.0..=1.0).contains(&value) {
                    out.push(Violation::Bound {
                        channel: i,
                        vn: j,
                        value,
                    });
                }
            }
        }
        for j in 0..self.v {
            let sum: f64 = (0..self.m).map(|i| self.get(i, j)).sum();
            if (sum - 1.0).abs() > tol.column {
                out.push(Violation::ColumnSum { vn: j, sum });
            }
        }
        let expected = self.v as f64 / self.m as f64;
        for i in 0..self.m {
            let sum: f64 = self.row(i).iter().sum();
            if (sum - expected).abs() > tol.row {
                out.push(Violation::RowSum {
                    channel: i,
                    sum,
                    expected,
                });
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// `eps'_j = sum_i eps_i a_ij`.
    pub fn effective_erasures(&self, eps: &[f64]) -> Vec<f64> {
        assert_eq!(eps.len(), self.m, "one erasure probability per channel");
        let mut out = vec![0.0; self.v];
        for (i, &e) in eps.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += e * a;
            }
        }
        out
    }

    /// Column-per-line text: header `m V`, then one line of `m` reals per VN.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "# bit mapping: one line per VN, one column per bit-channel"
        )
        .unwrap();
        writeln!(s, "{} {}", self.m, self.v).unwrap();
        for j in 0..self.v {
            let col: Vec<String> = self.column(j).iter().map(|x| x.to_string()).collect();
            writeln!(s, "{}", col.join(" ")).unwrap();
        }
        s
    }

    /// Reads either the column-per-line format or the grouped range format
    /// (see [`parse_grouped_table`]).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let Some((first_no, first)) = lines.next() else {
            return Err(Error::parse(0, "empty mapping file"));
        };
        if first.starts_with("groups") {
            return parse_grouped_table(text);
        }
        let dims: Vec<usize> = first
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(first_no, format!("{e}")))?;
        let [m, v] = dims[..] else {
            return Err(Error::parse(first_no, "header must be `m V`"));
        };
        let mut rows = vec![Vec::with_capacity(v); m];
        for (n, line) in lines {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(n, format!("{e}")))?;
            if vals.len() != m {
                return Err(Error::parse(n, format!("expected {m} values")));
            }
            for (row, x) in rows.iter_mut().zip(vals) {
                row.push(x);
            }
        }
        if rows[0].len() != v {
            return Err(Error::parse(
                0,
                format!("expected {v} VN lines, got {}", rows[0].len()),
            ));
        }
        Self::from_rows(rows)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a grouped table such as
///
/// ```text
/// groups 0,2 1,3
/// 1-2   0.1592 0.8408
/// 7     0.9920 0.0080
/// ```
///
/// Each data line names a 1-based VN range and one fraction per channel
/// group; a group's fraction is split equally over its channels. Ranges
/// must tile `1..=V` without overlap.
pub fn parse_grouped_table(text: &str) -> Result<BitMapping> {
    let mut lines = content_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| Error::parse(0, "empty table"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some("groups") {
        return Err(Error::parse(hn, "table must start with `groups`"));
    }
    let groups: Vec<Vec<usize>> = words
        .map(|g| {
            g.split(',')
                .map(|c| c.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(hn, format!("bad group: {e}")))?;
    let m = groups.iter().flatten().count();
    let mut seen = vec![false; m];
    for &c in groups.iter().flatten() {
        if c >= m || std::mem::replace(&mut seen[c], true) {
            return Err(Error::parse(hn, "groups must partition the channels 0..m"));
        }
    }

    let mut columns: Vec<Option<Vec<f64>>> = Vec::new();
    for (n, line) in lines {
        let mut words = line.split_whitespace();
        let range = words.next().unwrap();
        let (lo, hi) = match range.split_once('-') {
            Some((a, b)) => (a.parse::<usize>(), b.parse::<usize>()),
            None => (range.parse::<usize>(), range.parse::<usize>()),
        };
        let (lo, hi) = match (lo, hi) {
            (Ok(lo), Ok(hi)) if lo >= 1 && hi >= lo => (lo, hi),
            _ => return Err(Error::parse(n, format!("bad VN range {range:?}"))),
        };
        let fr: Vec<f64> = words
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(n, format!("{e}")))?;
        if fr.len() != groups.len() {
            return Err(Error::parse(
                n,
                format!("expected {} fractions", groups.len()),
            ));
        }
        let total: f64 = fr.iter().sum();
        if (total - 1.0).abs() > ROUNDED_TABLE_TOL {
            return Err(Error::parse(n, format!("fractions sum to {total}, not 1")));
        }
        if columns.len() < hi {
            columns.resize(hi, None);
        }
        for col in &mut columns[lo - 1..hi] {
            if col.is_some() {
                return Err(Error::parse(
                    n,
                    format!("range {range} overlaps an earlier one"),
                ));
            }
            *col = Some(fr.clone());
        }
    }
    let fractions: Vec<Vec<f64>> = columns
        .into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| Error::Mapping(format!("VN {} not covered", j + 1))))
        .collect::<Result<_>>()?;
    BitMapping::from_group_fractions(m, &groups, &fractions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid() {
        let u = BitMapping::uniform(4, 40);
        assert!(u.validate(Tolerances::STRICT).is_ok());
        assert!((0..4).all(|i| u.row(i).iter().all(|&x| x == 0.25)));
        assert!((0..4).all(|i| u.row(i).iter().sum::<f64>() == 10.0));
        let one = BitMapping::uniform(1, 5);
        assert!(one.row(0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn violations_are_reported() {
        let mut rows = vec![vec![0.25; 4]; 4];
        rows[0][0] = 1.2;
        let map = BitMapping::from_rows(rows).unwrap();
        let errs = map.validate(Tolerances::STRICT).unwrap_err();
        assert!(errs.contains(&Violation::Bound {
            channel: 0,
            vn: 0,
            value: 1.2
        }));
        assert!(errs
            .iter()
            .any(|v| matches!(v, Violation::ColumnSum { vn: 0, .. })));
        assert!(errs
            .iter()
            .any(|v| matches!(v, Violation::RowSum { channel: 0, .. })));
    }

    #[test]
    fn effective_erasure_cases() {
        let eps = [0.3, 0.6, 0.3, 0.6];
        let u = BitMapping::uniform(4, 3);
        assert!(u
            .effective_erasures(&eps)
            .iter()
            .all(|&e| (e - 0.45).abs() < 1e-15));
        let mut rows = vec![vec![0.0; 2]; 4];
        rows[0][0] = 1.0;
        rows[1][1] = 1.0;
        let map = BitMapping::from_rows(rows).unwrap();
        assert_eq!(map.effective_erasures(&eps), vec![0.3, 0.6]);
    }

    #[test]
    fn grouped_ranges() {
        let text = "groups 0,2 1,3\n1-2 0.2 0.8\n3 0.8 0.2\n4 0.8 0.2\n";
        let map = parse_grouped_table(text).unwrap();
        assert_eq!(map.v(), 4);
        assert_eq!(map.column(0), map.column(1));
        assert_eq!(map.column(0), vec![0.1, 0.4, 0.1, 0.4]);
        assert!(map.validate(Tolerances::STRICT).is_ok());
        assert_eq!(BitMapping::parse(text).unwrap(), map);
    }

    #[test]
    fn grouped_errors() {
        assert!(parse_grouped_table("groups 0,2 1,3\n1-2 0.5 0.6\n").is_err());
        assert!(parse_grouped_table("groups 0,2 1,3\n1-2 0.5 0.5\n2 0.5 0.5\n").is_err());
        assert!(matches!(
            parse_grouped_table("groups 0,2 1,3\n1 0.5 0.5\n3 0.5 0.5\n"),
            Err(Error::Mapping(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let map = parse_grouped_table("groups 0,2 1,3\n1-3 0.3 0.7\n4-6 0.7 0.3\n").unwrap();
        assert_eq!(BitMapping::parse(&map.to_text()).unwrap(), map);
    }
}
