//! Protograph ensembles: single coupled chains and connected-chain constructions.
//!
//! Node indices are chain-major. Within chain `c`, the VN at chain-position
//! `t` (1-based) with local index `v` has global index
//! `c * L * b_v + (t - 1) * b_v + v`; CNs are laid out the same way over the
//! `L + w` check positions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design rate as an exact fraction.
pub type Rate = Ratio<i64>;

/// Parameters of a terminated single-chain ensemble `C(J, K, L, w)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleChainParams {
    pub j: u32,
    pub k: u32,
    pub l: u32,
    pub w: u32,
    pub bc: u32,
    pub bv: u32,
    /// Optional edge-spreading table: `w + 1` matrices of size `bc x bv`.
    /// When absent, every offset carries an all-ones block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spreading: Option<Vec<Vec<Vec<u32>>>>,
}

impl SingleChainParams {
    /// Canonical all-ones spreading over `w + 1` offsets. `b_c` and `b_v`
    /// follow from `J = (w + 1) b_c` and `K = (w + 1) b_v`.
    pub fn new(j: u32, k: u32, l: u32, w: u32) -> Result<Self> {
        if w == 0 || !j.is_multiple_of(w + 1) || !k.is_multiple_of(w + 1) {
            return Err(Error::InvalidParams(format!(
                "(J={j}, K={k}, w={w}) has no canonical edge spreading; supply an explicit table"
            )));
        }
        let p = Self {
            j,
            k,
            l,
            w,
            bc: j / (w + 1),
            bv: k / (w + 1),
            spreading: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_spreading(
        j: u32,
        k: u32,
        l: u32,
        w: u32,
        bc: u32,
        bv: u32,
        spreading: Vec<Vec<Vec<u32>>>,
    ) -> Result<Self> {
        let p = Self {
            j,
            k,
            l,
            w,
            bc,
            bv,
            spreading: Some(spreading),
        };
        p.validate()?;
        Ok(p)
    }

    /// Parses `"J,K,L,w"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<u32> = text
            .split(',')
            .map(|s| s.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParams(format!("{text:?}: {e}")))?;
        match parts.as_slice() {
            [j, k, l, w] => Self::new(*j, *k, *l, *w),
            _ => Err(Error::InvalidParams(format!(
                "expected J,K,L,w but got {text:?}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.j < 2 {
            return bad(format!("J = {} must be at least 2", self.j));
        }
        if self.l < 1 || self.w < 1 || self.bc < 1 || self.bv < 1 {
            return bad("L, w, b_c, b_v must all be positive".into());
        }
        if u64::from(self.k) * u64::from(self.bc) != u64::from(self.j) * u64::from(self.bv) {
            return bad(format!(
                "K = {} is not J * b_v / b_c = {} * {} / {}",
                self.k, self.j, self.bv, self.bc
            ));
        }
        match &self.spreading {
            None => {
                if self.j != (self.w + 1) * self.bc || self.k != (self.w + 1) * self.bv {
                    return bad(format!(
                        "(J={}, w={}) needs an explicit edge-spreading table",
                        self.j, self.w
                    ));
                }
            }
            Some(table) => {
                if table.len() != self.w as usize + 1 {
                    return bad(format!("spreading table needs {} offsets", self.w + 1));
                }
                for block in table {
                    if block.len() != self.bc as usize
                        || block.iter().any(|row| row.len() != self.bv as usize)
                    {
                        return bad("spreading block has wrong shape".into());
                    }
                }
                for v in 0..self.bv as usize {
                    let deg: u32 = table.iter().flat_map(|b| b.iter().map(|r| r[v])).sum();
                    if deg != self.j {
                        return bad(format!("spreading gives VN {v} degree {deg}, not J"));
                    }
                }
                for c in 0..self.bc as usize {
                    let deg: u32 = table.iter().flat_map(|b| b[c].iter()).sum();
                    if deg != self.k {
                        return bad(format!("spreading gives CN {c} degree {deg}, not K"));
                    }
                }
            }
        }
        Ok(())
    }

    fn spread(&self, offset: u32, c: u32, v: u32) -> u32 {
        match &self.spreading {
            None => 1,
            Some(t) => t[offset as usize][c as usize][v as usize],
        }
    }

    pub fn vns_per_chain(&self) -> u32 {
        self.l * self.bv
    }

    pub fn cns_per_chain(&self) -> u32 {
        (self.l + self.w) * self.bc
    }
}

impl fmt::Display for SingleChainParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.j, self.k, self.l, self.w)
    }
}

/// `R = 1 - (L + w) b_c / (L b_v)`.
pub fn design_rate(params: &SingleChainParams) -> Rate {
    let cn = i64::from(params.l + params.w) * i64::from(params.bc);
    let vn = i64::from(params.l) * i64::from(params.bv);
    Rate::from_integer(1) - Rate::new(cn, vn)
}

/// Location of a node inside a (possibly multi-chain) ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePosition {
    pub chain: u32,
    /// 1-based chain-position.
    pub position: u32,
    /// Index among the `b_v` (or `b_c`) nodes of that position.
    pub local: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainEnd {
    Left,
    Right,
}

/// One block of connection edges from a terminal CN of one chain to a VN of another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnectionEdge {
    pub source_chain: u32,
    pub source_end: ChainEnd,
    /// Terminal CN slot; slot 0 is the outermost CN of the end.
    pub slot: u32,
    pub target_chain: u32,
    /// VN index local to the target chain (0-based, position-major).
    pub target_vn: u32,
    pub multiplicity: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub num_chains: u32,
    pub connecting_end: Vec<ChainEnd>,
    pub edges: Vec<ConnectionEdge>,
}

impl ConnectionSpec {
    /// Number of extra edges landing on each VN of `chain`, indexed by local VN.
    pub fn target_increments(&self, params: &SingleChainParams, chain: u32) -> Vec<u32> {
        let mut inc = vec![0; params.vns_per_chain() as usize];
        for e in self.edges.iter().filter(|e| e.target_chain == chain) {
            inc[e.target_vn as usize] += e.multiplicity;
        }
        inc
    }
}

/// A terminal CN of a chain end that still has free sockets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TerminalSlot {
    pub slot: u32,
    /// CN index local to the chain.
    pub cn: u32,
    pub position: u32,
    pub deficit: u32,
}

/// Terminal CNs of one end of a single chain, outermost first, with their
/// spare degree `K - deg`.
pub fn terminal_slots(params: &SingleChainParams, end: ChainEnd) -> Vec<TerminalSlot> {
    let degrees = single_chain_cn_degrees(params);
    let positions: Vec<u32> = match end {
        ChainEnd::Left => (1..=params.w).collect(),
        ChainEnd::Right => (params.l + 1..=params.l + params.w).rev().collect(),
    };
    let mut slots = Vec::new();
    for pos in positions {
        if pos < 1 || pos > params.l + params.w {
            continue;
        }
        for c in 0..params.bc {
            let cn = (pos - 1) * params.bc + c;
            let deg = degrees[cn as usize];
            if deg < params.k {
                slots.push(TerminalSlot {
                    slot: slots.len() as u32,
                    cn,
                    position: pos,
                    deficit: params.k - deg,
                });
            }
        }
    }
    slots
}

/// Total spare sockets at one end of a single chain.
pub fn spare_budget(params: &SingleChainParams, end: ChainEnd) -> u32 {
    terminal_slots(params, end).iter().map(|s| s.deficit).sum()
}

fn single_chain_cn_degrees(params: &SingleChainParams) -> Vec<u32> {
    let mut deg = vec![0u32; params.cns_per_chain() as usize];
    for t in 1..=params.l {
        for i in 0..=params.w {
            for c in 0..params.bc {
                let row: u32 = (0..params.bv).map(|v| params.spread(i, c, v)).sum();
                deg[((t + i - 1) * params.bc + c) as usize] += row;
            }
        }
    }
    deg
}

/// Bipartite multigraph between CN and VN positions with edge multiplicities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protograph {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<SingleChainParams>,
    num_chains: u32,
    cn_count: usize,
    vn_count: usize,
    /// Row-major `cn_count x vn_count`.
    multiplicity: Vec<Vec<u32>>,
    position_of_vn: Vec<NodePosition>,
    position_of_cn: Vec<NodePosition>,
}

impl Protograph {
    /// A protograph from a bare multiplicity grid; every node sits at position 1 of chain 0.
    pub fn from_multiplicity(multiplicity: Vec<Vec<u32>>) -> Result<Self> {
        let cn_count = multiplicity.len();
        let vn_count = multiplicity.first().map_or(0, Vec::len);
        let at = |i: usize| NodePosition {
            chain: 0,
            position: 1,
            local: i as u32,
        };
        Self::from_parts(
            None,
            1,
            multiplicity,
            (0..vn_count).map(at).collect(),
            (0..cn_count).map(at).collect(),
        )
    }

    pub fn from_parts(
        params: Option<SingleChainParams>,
        num_chains: u32,
        multiplicity: Vec<Vec<u32>>,
        position_of_vn: Vec<NodePosition>,
        position_of_cn: Vec<NodePosition>,
    ) -> Result<Self> {
        let g = Self {
            params,
            num_chains,
            cn_count: multiplicity.len(),
            vn_count: multiplicity.first().map_or(0, Vec::len),
            multiplicity,
            position_of_vn,
            position_of_cn,
        };
        g.check_shape()?;
        Ok(g)
    }

    fn check_shape(&self) -> Result<()> {
        if self.cn_count == 0 || self.vn_count == 0 {
            return Err(Error::InvalidParams("empty protograph".into()));
        }
        if self.multiplicity.iter().any(|r| r.len() != self.vn_count) {
            return Err(Error::InvalidParams("ragged multiplicity grid".into()));
        }
        if self.position_of_vn.len() != self.vn_count || self.position_of_cn.len() != self.cn_count
        {
            return Err(Error::InvalidParams(
                "position maps do not match node counts".into(),
            ));
        }
        if let Some(p) = &self.params {
            p.validate()?;
        }
        Ok(())
    }

    pub fn load_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.check_shape()?;
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn params(&self) -> Option<&SingleChainParams> {
        self.params.as_ref()
    }

    pub fn num_chains(&self) -> u32 {
        self.num_chains
    }

    pub fn cn_count(&self) -> usize {
        self.cn_count
    }

    pub fn vn_count(&self) -> usize {
        self.vn_count
    }

    pub fn multiplicity(&self, cn: usize, vn: usize) -> u32 {
        self.multiplicity[cn][vn]
    }

    pub fn grid(&self) -> &[Vec<u32>] {
        &self.multiplicity
    }

    pub fn position_of_vn(&self, vn: usize) -> NodePosition {
        self.position_of_vn[vn]
    }

    pub fn position_of_cn(&self, cn: usize) -> NodePosition {
        self.position_of_cn[cn]
    }

    pub fn cn_degree(&self, cn: usize) -> u32 {
        self.multiplicity[cn].iter().sum()
    }

    pub fn vn_degree(&self, vn: usize) -> u32 {
        self.multiplicity.iter().map(|r| r[vn]).sum()
    }

    pub fn cn_degrees(&self) -> Vec<u32> {
        (0..self.cn_count).map(|k| self.cn_degree(k)).collect()
    }

    pub fn vn_degrees(&self) -> Vec<u32> {
        (0..self.vn_count).map(|j| self.vn_degree(j)).collect()
    }

    pub fn edge_count(&self) -> u32 {
        self.multiplicity.iter().flatten().sum()
    }

    /// Nonzero entries as `(cn, vn, multiplicity)`, CN-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.multiplicity.iter().enumerate().flat_map(|(k, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &m)| m > 0)
                .map(move |(j, &m)| (k, j, m))
        })
    }

    /// `1 - (#CN / #VN)`.
    pub fn design_rate(&self) -> Rate {
        Rate::from_integer(1) - Rate::new(self.cn_count as i64, self.vn_count as i64)
    }

    /// Whether the Tanner graph of the protograph is a single component.
    pub fn is_connected(&self) -> bool {
        let n = self.cn_count + self.vn_count;
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.cn_count]);
        seen[self.cn_count] = true;
        while let Some(u) = queue.pop_front() {
            let neighbors: Vec<usize> = if u < self.cn_count {
                (0..self.vn_count)
                    .filter(|&j| self.multiplicity[u][j] > 0)
                    .map(|j| self.cn_count + j)
                    .collect()
            } else {
                let j = u - self.cn_count;
                (0..self.cn_count)
                    .filter(|&k| self.multiplicity[k][j] > 0)
                    .collect()
            };
            for v in neighbors {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Returns the graph with nodes relabeled: new VN `vn_perm[j]` is old VN `j`,
    /// likewise for CNs.
    pub fn permuted(&self, cn_perm: &[usize], vn_perm: &[usize]) -> Self {
        let mut grid = vec![vec![0; self.vn_count]; self.cn_count];
        let mut vpos = self.position_of_vn.clone();
        let mut cpos = self.position_of_cn.clone();
        for k in 0..self.cn_count {
            for j in 0..self.vn_count {
                grid[cn_perm[k]][vn_perm[j]] = self.multiplicity[k][j];
            }
            cpos[cn_perm[k]] = self.position_of_cn[k];
        }
        for j in 0..self.vn_count {
            vpos[vn_perm[j]] = self.position_of_vn[j];
        }
        Self {
            params: self.params.clone(),
            num_chains: self.num_chains,
            cn_count: self.cn_count,
            vn_count: self.vn_count,
            multiplicity: grid,
            position_of_vn: vpos,
            position_of_cn: cpos,
        }
    }

    /// Sorted, position-labeled edge list minimized over relabelings of the chains.
    /// Two ensembles that differ only by chain numbering share the same form.
    pub fn canonical_form(&self) -> Vec<(NodePosition, NodePosition, u32)> {
        let mut best: Option<Vec<_>> = None;
        for perm in permutations(self.num_chains as usize) {
            let relabel = |p: NodePosition| NodePosition {
                chain: perm[p.chain as usize] as u32,
                ..p
            };
            let mut form: Vec<_> = self
                .edges()
                .map(|(k, j, m)| {
                    (
                        relabel(self.position_of_cn[k]),
                        relabel(self.position_of_vn[j]),
                        m,
                    )
                })
                .collect();
            form.sort_unstable();
            if best.as_ref().is_none_or(|b| form < *b) {
                best = Some(form);
            }
        }
        best.unwrap_or_default()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n <= 1 {
        return vec![(0..n).collect()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for slot in 0..n {
            let mut p = rest.clone();
            p.insert(slot, n - 1);
            out.push(p);
        }
    }
    out
}

/// Disjoint union of `chains` copies of `C(J, K, L, w)`.
fn chain_union(params: &SingleChainParams, chains: u32) -> Result<Protograph> {
    params.validate()?;
    let vpc = params.vns_per_chain();
    let cpc = params.cns_per_chain();
    let vn_count = (chains * vpc) as usize;
    let cn_count = (chains * cpc) as usize;
    let mut grid = vec![vec![0u32; vn_count]; cn_count];
    let mut vpos = Vec::with_capacity(vn_count);
    let mut cpos = Vec::with_capacity(cn_count);
    for chain in 0..chains {
        for t in 1..=params.l {
            for v in 0..params.bv {
                vpos.push(NodePosition {
                    chain,
                    position: t,
                    local: v,
                });
                let vn = (chain * vpc + (t - 1) * params.bv + v) as usize;
                for i in 0..=params.w {
                    for c in 0..params.bc {
                        let cn = (chain * cpc + (t + i - 1) * params.bc + c) as usize;
                        grid[cn][vn] += params.spread(i, c, v);
                    }
                }
            }
        }
        for pos in 1..=params.l + params.w {
            for c in 0..params.bc {
                cpos.push(NodePosition {
                    chain,
                    position: pos,
                    local: c,
                });
            }
        }
    }
    Protograph::from_parts(Some(params.clone()), chains, grid, vpos, cpos)
}

/// Builds `C(J, K, L, w)`: VN position `t` spreads its edges over CN positions `t..=t+w`.
pub fn build_single_chain(params: &SingleChainParams) -> Result<Protograph> {
    chain_union(params, 1)
}

/// Adds connection edges to a chain union; only CN overflow (constraint 1) is checked.
fn attach(
    params: &SingleChainParams,
    num_chains: u32,
    edges: &[ConnectionEdge],
) -> Result<Protograph> {
    let mut g = chain_union(params, num_chains)?;
    let vpc = params.vns_per_chain();
    let cpc = params.cns_per_chain();
    let left = terminal_slots(params, ChainEnd::Left);
    let right = terminal_slots(params, ChainEnd::Right);
    for e in edges {
        if e.source_chain >= num_chains || e.target_chain >= num_chains {
            return Err(Error::InvalidParams(format!(
                "edge {e:?} names a missing chain"
            )));
        }
        if e.target_vn >= vpc {
            return Err(Error::InvalidParams(format!(
                "edge {e:?} targets a missing VN"
            )));
        }
        if e.multiplicity == 0 {
            return Err(Error::InvalidParams(format!(
                "edge {e:?} has zero multiplicity"
            )));
        }
        let slots = match e.source_end {
            ChainEnd::Left => &left,
            ChainEnd::Right => &right,
        };
        let slot = slots
            .get(e.slot as usize)
            .ok_or_else(|| Error::Constraint {
                id: 2,
                detail: format!("slot {} is not a terminal CN with spare sockets", e.slot),
            })?;
        let cn = (e.source_chain * cpc + slot.cn) as usize;
        let vn = (e.target_chain * vpc + e.target_vn) as usize;
        g.multiplicity[cn][vn] += e.multiplicity;
    }
    for k in 0..g.cn_count {
        let deg = g.cn_degree(k);
        if deg > params.k {
            return Err(Error::Constraint {
                id: 1,
                detail: format!(
                    "CN {k} at {:?} reaches degree {deg} > K = {}",
                    g.position_of_cn[k], params.k
                ),
            });
        }
    }
    Ok(g)
}

/// Builds a connected-chain ensemble and enforces constraints 1-4.
pub fn build_connected(params: &SingleChainParams, spec: &ConnectionSpec) -> Result<Protograph> {
    let m = spec.num_chains;
    if m < 2 {
        return Err(Error::InvalidParams(
            "a connection needs at least two chains".into(),
        ));
    }
    if spec.connecting_end.len() != m as usize {
        return Err(Error::InvalidParams(format!(
            "{} connecting ends given for {m} chains",
            spec.connecting_end.len()
        )));
    }
    for e in &spec.edges {
        if e.source_chain >= m || e.target_chain >= m {
            return Err(Error::InvalidParams(format!(
                "edge {e:?} names a missing chain"
            )));
        }
        if e.source_chain == e.target_chain {
            return Err(Error::Constraint {
                id: 2,
                detail: format!("chain {} connects to itself", e.source_chain),
            });
        }
        if e.source_end != spec.connecting_end[e.source_chain as usize] {
            return Err(Error::Constraint {
                id: 2,
                detail: format!(
                    "chain {} connects from its {:?} end but declared {:?}",
                    e.source_chain, e.source_end, spec.connecting_end[e.source_chain as usize]
                ),
            });
        }
    }
    if spec.connecting_end.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Constraint {
            id: 3,
            detail: "chains connect from different ends".into(),
        });
    }
    // Per-chain pattern keyed by (slot, target chain offset, target VN).
    let pattern = |c: u32| {
        let mut p: BTreeMap<(u32, u32, u32), u32> = BTreeMap::new();
        for e in spec.edges.iter().filter(|e| e.source_chain == c) {
            let offset = (e.target_chain + m - c) % m;
            *p.entry((e.slot, offset, e.target_vn)).or_default() += e.multiplicity;
        }
        p
    };
    let first = pattern(0);
    for c in 1..m {
        if pattern(c) != first {
            return Err(Error::Constraint {
                id: 3,
                detail: format!("chain {c} connects differently from chain 0"),
            });
        }
    }
    let g = attach(params, m, &spec.edges)?;
    if g.design_rate() != design_rate(params) {
        return Err(Error::Constraint {
            id: 4,
            detail: "design rate differs from the single chain".into(),
        });
    }
    Ok(g)
}

/// Builds an ensemble from an arbitrary edge list; only CN overflow is enforced.
pub fn build_custom(
    params: &SingleChainParams,
    num_chains: u32,
    edges: &[ConnectionEdge],
) -> Result<Protograph> {
    attach(params, num_chains, edges)
}

/// Pairs the sockets of `slots` (innermost CN first) with `increments`
/// (ascending VN order) and aggregates them into edges.
fn fill_sockets(
    slots: &[TerminalSlot],
    increments: &[u32],
    source_chain: u32,
    source_end: ChainEnd,
    target_chain: u32,
) -> Result<Vec<ConnectionEdge>> {
    let spare: u32 = slots.iter().map(|s| s.deficit).sum();
    let demanded: u32 = increments.iter().sum();
    if spare != demanded {
        return Err(Error::BudgetMismatch { spare, demanded });
    }
    let sockets = slots
        .iter()
        .rev()
        .flat_map(|s| std::iter::repeat_n(s.slot, s.deficit as usize));
    let targets = increments
        .iter()
        .enumerate()
        .flat_map(|(v, &n)| std::iter::repeat_n(v as u32, n as usize));
    let mut agg: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for (slot, vn) in sockets.zip(targets) {
        *agg.entry((slot, vn)).or_default() += 1;
    }
    Ok(agg
        .into_iter()
        .map(|((slot, target_vn), multiplicity)| ConnectionEdge {
            source_chain,
            source_end,
            slot,
            target_chain,
            target_vn,
            multiplicity,
        })
        .collect())
}

/// Ring connection: chain `c` fills its right-end sockets into chain
/// `c + 1 mod M` with the given per-VN increments.
pub fn ring_spec(
    params: &SingleChainParams,
    num_chains: u32,
    increments: &[u32],
) -> Result<ConnectionSpec> {
    let slots = terminal_slots(params, ChainEnd::Right);
    let mut edges = Vec::new();
    for c in 0..num_chains {
        edges.extend(fill_sockets(
            &slots,
            increments,
            c,
            ChainEnd::Right,
            (c + 1) % num_chains,
        )?);
    }
    Ok(ConnectionSpec {
        num_chains,
        connecting_end: vec![ChainEnd::Right; num_chains as usize],
        edges,
    })
}

/// Default loop-connection positions: the three positions starting at `w`,
/// clipped to `1..=L`. For `C(3,6,10,2)` these are positions 2 to 4.
pub fn default_loop_positions(params: &SingleChainParams) -> Vec<u32> {
    let first = params.w.max(1);
    (first..=first + 2).filter(|&p| p <= params.l).collect()
}

/// Loop-connected pair: each chain's right-end spare sockets are spread
/// uniformly over the other chain's VNs at `connect_positions`.
pub fn build_loop_connected(
    params: &SingleChainParams,
    connect_positions: &[u32],
) -> Result<Protograph> {
    let spec = loop_spec(params, connect_positions)?;
    build_connected(params, &spec)
}

pub fn loop_spec(params: &SingleChainParams, connect_positions: &[u32]) -> Result<ConnectionSpec> {
    params.validate()?;
    let spare = spare_budget(params, ChainEnd::Right);
    let mut positions = connect_positions.to_vec();
    positions.sort_unstable();
    positions.dedup();
    if positions.iter().any(|&p| p < 1 || p > params.l) {
        return Err(Error::InvalidParams(format!(
            "connect positions {positions:?} outside 1..={}",
            params.l
        )));
    }
    let targets = positions.len() as u32 * params.bv;
    if targets == 0 || !spare.is_multiple_of(targets) {
        return Err(Error::BudgetMismatch {
            spare,
            demanded: targets,
        });
    }
    let mut inc = vec![0; params.vns_per_chain() as usize];
    for &p in &positions {
        for v in 0..params.bv {
            inc[((p - 1) * params.bv + v) as usize] = spare / targets;
        }
    }
    ring_spec(params, 2, &inc)
}

/// Edges that close `end` of a chain onto another chain as if the chain
/// continued into consecutive positions starting at `base`.
fn continuation_edges(
    params: &SingleChainParams,
    end: ChainEnd,
    base: u32,
    source_chain: u32,
    target_chain: u32,
) -> Vec<ConnectionEdge> {
    let mut edges = Vec::new();
    for s in terminal_slots(params, end) {
        let c_local = s.cn % params.bc;
        for i in 0..=params.w {
            // virtual VN position feeding this CN through offset i
            let t = i64::from(s.position) - i64::from(i);
            let target_pos = match end {
                ChainEnd::Right if t > i64::from(params.l) => {
                    i64::from(base) + t - i64::from(params.l) - 1
                }
                ChainEnd::Left if t < 1 => i64::from(base) + t + i64::from(params.w) - 1,
                _ => continue,
            };
            for v in 0..params.bv {
                let mult = params.spread(i, c_local, v);
                if mult > 0 {
                    edges.push(ConnectionEdge {
                        source_chain,
                        source_end: end,
                        slot: s.slot,
                        target_chain,
                        target_vn: (target_pos as u32 - 1) * params.bv + v,
                        multiplicity: mult,
                    });
                }
            }
        }
    }
    edges
}

/// Continuous-chain pair: both ends of chain 0 close onto chain 1 at
/// chain-positions 5-8 (left end onto 5-6, right end onto 7-8 for w = 2).
pub fn continuous_edges(params: &SingleChainParams) -> Result<Vec<ConnectionEdge>> {
    params.validate()?;
    if params.l < 8 || 4 + 2 * params.w > params.l {
        return Err(Error::InvalidParams(format!(
            "continuous connection needs L >= max(8, 4 + 2w), got L = {}",
            params.l
        )));
    }
    let mut edges = continuation_edges(params, ChainEnd::Left, 5, 0, 1);
    edges.extend(continuation_edges(
        params,
        ChainEnd::Right,
        5 + params.w,
        0,
        1,
    ));
    Ok(edges)
}

pub fn build_continuous_connected(params: &SingleChainParams) -> Result<Protograph> {
    build_custom(params, 2, &continuous_edges(params)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    /// Largest number of consecutive chain-positions the sockets may cover.
    pub max_window: u32,
    /// Largest number of extra edges any one VN may receive.
    pub max_increment: u32,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            max_window: 4,
            max_increment: 2,
        }
    }
}

/// All ring connections whose right-end sockets are fully spent on a window
/// of consecutive positions in the next chain.
///
/// Left-end designs are mirror images and VNs of one position are
/// interchangeable, so the list keeps one representative per class:
/// right ends only and nonincreasing increments within each position. The
/// window's first and last positions must both receive edges.
pub fn enumerate_connections(
    params: &SingleChainParams,
    num_chains: u32,
    opts: &EnumerationOptions,
) -> Result<Vec<ConnectionSpec>> {
    params.validate()?;
    if num_chains < 2 {
        return Ok(Vec::new());
    }
    let budget = spare_budget(params, ChainEnd::Right);
    let bv = params.bv as usize;
    let mut out = Vec::new();
    for width in 1..=opts.max_window.min(params.l) {
        let mut patterns = Vec::new();
        let mut cur = vec![0u32; width as usize * bv];
        window_patterns(&mut cur, 0, budget, opts.max_increment, bv, &mut patterns);
        for start in 1..=params.l - width + 1 {
            for pat in &patterns {
                let mut inc = vec![0u32; params.vns_per_chain() as usize];
                let off = (start as usize - 1) * bv;
                inc[off..off + pat.len()].copy_from_slice(pat);
                out.push(ring_spec(params, num_chains, &inc)?);
            }
        }
    }
    Ok(out)
}

fn window_patterns(
    cur: &mut Vec<u32>,
    idx: usize,
    remaining: u32,
    max_inc: u32,
    bv: usize,
    out: &mut Vec<Vec<u32>>,
) {
    if idx == cur.len() {
        let first_used = cur[..bv].iter().any(|&x| x > 0);
        let last_used = cur[cur.len() - bv..].iter().any(|&x| x > 0);
        if remaining == 0 && first_used && last_used {
            out.push(cur.clone());
        }
        return;
    }
    let cap = if idx.is_multiple_of(bv) {
        max_inc
    } else {
        cur[idx - 1]
    };
    let slots_left = (cur.len() - idx - 1) as u32;
    for x in (0..=cap.min(remaining)).rev() {
        if remaining - x > slots_left * max_inc {
            continue;
        }
        cur[idx] = x;
        window_patterns(cur, idx + 1, remaining - x, max_inc, bv, out);
    }
    cur[idx] = 0;
}

/// Ensemble family named in a description file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Single,
    Loop,
    Continuous,
    Custom,
}

/// JSON ensemble description consumed by `ensemble build`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnsembleDescription {
    pub family: Family,
    #[serde(rename = "J")]
    pub j: u32,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub w: u32,
    #[serde(rename = "M", default = "one")]
    pub m: u32,
    #[serde(default)]
    pub connecting_end: Vec<ChainEnd>,
    #[serde(default)]
    pub edges: Vec<ConnectionEdge>,
    /// Loop family only; defaults to [`default_loop_positions`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect_positions: Option<Vec<u32>>,
}

fn one() -> u32 {
    1
}

impl EnsembleDescription {
    pub fn params(&self) -> Result<SingleChainParams> {
        SingleChainParams::new(self.j, self.k, self.l, self.w)
    }

    pub fn build(&self) -> Result<Protograph> {
        let params = self.params()?;
        match self.family {
            Family::Single => build_single_chain(&params),
            Family::Loop => {
                let pos = self
                    .connect_positions
                    .clone()
                    .unwrap_or_else(|| default_loop_positions(&params));
                build_loop_connected(&params, &pos)
            }
            Family::Continuous => build_continuous_connected(&params),
            Family::Custom => {
                if self.connecting_end.is_empty() {
                    build_custom(&params, self.m, &self.edges)
                } else {
                    build_connected(
                        &params,
                        &ConnectionSpec {
                            num_chains: self.m,
                            connecting_end: self.connecting_end.clone(),
                            edges: self.edges.clone(),
                        },
                    )
                }
            }
        }
    }
}
