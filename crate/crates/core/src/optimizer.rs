//! Joint design of chain connections and bit mappings.
//!
//! The outer loop raises the design point `avg` one threshold at a time. At
//! each point the inner search minimizes the number of density-evolution
//! iterations needed to converge, using rand/1/bin differential evolution on
//! the mapping genes and plain enumeration over connection candidates.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitmap::BitMapping;
use crate::channel::ErasureProfile;
use crate::density::{threshold, DeOptions, DensityEvolution, EdgeGraph, Threshold};
use crate::error::{Error, Result};
use crate::protograph::{
    build_connected, build_single_chain, enumerate_connections, ConnectionSpec, EnumerationOptions,
    Protograph, SingleChainParams,
};

/// Search point: a connection candidate plus per-VN fractions on channel group 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub connection_index: usize,
    pub mapping_params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeHyperParams {
    pub population: usize,
    /// Differential weight `F`.
    pub weight: f64,
    /// Crossover probability `CR`.
    pub crossover: f64,
    pub generations: usize,
    pub seed: u64,
    /// Connection candidates that get a full mapping search per outer step,
    /// picked by their uniform-mapping objective.
    pub candidate_limit: usize,
    /// Hard cap on outer (threshold-raising) steps.
    pub max_outer: usize,
    pub enumeration: EnumerationOptions,
}

impl Default for DeHyperParams {
    fn default() -> Self {
        Self {
            population: 60,
            weight: 0.7,
            crossover: 0.9,
            generations: 300,
            seed: 1,
            candidate_limit: 8,
            max_outer: 20,
            enumeration: EnumerationOptions::default(),
        }
    }
}

impl DeHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4
            || !(self.weight > 0.0 && self.weight <= 2.0)
            || !(0.0..=1.0).contains(&self.crossover)
            || self.candidate_limit == 0
            || self.max_outer == 0
        {
            return Err(Error::InvalidParams(format!(
                "bad DE hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Channel groups with identical erasure curves, detected from the profile.
/// Group 0 is the most reliable (lowest erasure).
pub fn capacity_groups(profile: &ErasureProfile) -> Vec<Vec<usize>> {
    let m = profile.m();
    let n = profile.snr_grid().len();
    let same = |a: usize, b: usize| {
        (0..n).all(|i| (profile.sample(i).0[a] - profile.sample(i).0[b]).abs() < 1e-9)
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 0..m {
        match groups.iter_mut().find(|g| same(g[0], c)) {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    let mid = n / 2;
    groups.sort_by(|a, b| {
        let ea = profile.sample(mid).0[a[0]];
        let eb = profile.sample(mid).0[b[0]];
        ea.total_cmp(&eb)
    });
    groups
}

/// Maps genome genes to a feasible bit mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingCodec {
    m: usize,
    v: usize,
    groups: Vec<Vec<usize>>,
}

impl MappingCodec {
    pub fn new(m: usize, v: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() || groups.len() > 2 {
            return Err(Error::InvalidParams(format!(
                "mapping genes need one or two capacity groups, got {}",
                groups.len()
            )));
        }
        Ok(Self { m, v, groups })
    }

    pub fn for_profile(profile: &ErasureProfile, v: usize) -> Result<Self> {
        Self::new(profile.m(), v, capacity_groups(profile))
    }

    pub fn v(&self) -> usize {
        self.v
    }

    /// Share of all VN mass that group 0 must carry.
    fn group0_total(&self) -> f64 {
        self.v as f64 * self.groups[0].len() as f64 / self.m as f64
    }

    /// Clamps to `[0, 1]` and projects onto `sum = V |G0| / m` by a common
    /// shift with clipping, so the row-sum constraint holds exactly.
    pub fn repair(&self, params: &[f64]) -> Vec<f64> {
        assert_eq!(params.len(), self.v);
        let x: Vec<f64> = params.iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let target = self.group0_total();
        let total = |shift: f64| x.iter().map(|&p| (p + shift).clamp(0.0, 1.0)).sum::<f64>();
        if (total(0.0) - target).abs() <= 1e-12 * self.v as f64 {
            return x;
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-17 {
                break;
            }
        }
        let shift = 0.5 * (lo + hi);
        x.iter().map(|&p| (p + shift).clamp(0.0, 1.0)).collect()
    }

    pub fn decode(&self, repaired: &[f64]) -> BitMapping {
        if self.groups.len() == 1 {
            return BitMapping::uniform(self.m, self.v);
        }
        let fractions: Vec<Vec<f64>> = repaired.iter().map(|&f| vec![f, 1.0 - f]).collect();
        BitMapping::from_group_fractions(self.m, &self.groups, &fractions)
            .expect("groups partition the channels")
    }

    /// Genes for an existing mapping (group-0 share per VN).
    pub fn encode(&self, map: &BitMapping) -> Vec<f64> {
        (0..self.v)
            .map(|j| self.groups[0].iter().map(|&c| map.get(c, j)).sum())
            .collect()
    }

    pub fn uniform_genes(&self) -> Vec<f64> {
        vec![self.groups[0].len() as f64 / self.m as f64; self.v]
    }
}

/// Builds `repair(params)` as a mapping; convenience for callers holding raw genes.
pub fn repair(codec: &MappingCodec, params: &[f64]) -> BitMapping {
    codec.decode(&codec.repair(params))
}

/// `l_s` when density evolution converges, otherwise
/// `max_iters + 100 * mean residual`.
pub fn objective_value(
    edges: &EdgeGraph,
    map: &BitMapping,
    channel_eps: &[f64],
    opts: &DeOptions,
) -> f64 {
    let eps = map.effective_erasures(channel_eps);
    let r = DensityEvolution::new(edges, &eps).run(opts);
    if r.converged {
        r.iterations as f64
    } else {
        opts.max_iters as f64 + 100.0 * r.mean_residual()
    }
}

/// Objective of a genome against the graph it indexes, at average erasure `avg`.
pub fn objective(
    graph: &Protograph,
    codec: &MappingCodec,
    genome: &Genome,
    avg: f64,
    profile: &ErasureProfile,
    opts: &DeOptions,
) -> Result<f64> {
    let eps = profile.erasures_at(profile.snr_for_avg_erasure(avg)?)?;
    let map = repair(codec, &genome.mapping_params);
    Ok(objective_value(&EdgeGraph::new(graph), &map, &eps, opts))
}

/// A connection candidate ready for evaluation.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub spec: Option<ConnectionSpec>,
    pub graph: Protograph,
    edges: EdgeGraph,
}

impl Candidate {
    pub fn new(spec: Option<ConnectionSpec>, graph: Protograph) -> Self {
        let edges = EdgeGraph::new(&graph);
        Self { spec, graph, edges }
    }
}

/// Outcome of one differential-evolution search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub genome: Genome,
    pub objective: f64,
    /// Best objective after initialization and after each generation.
    pub history: Vec<f64>,
}

fn rng_for(seed: u64, outer: u64, candidate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ outer.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(candidate);
    rng
}

/// rand/1/bin over the mapping genes of one candidate. The first individual
/// is the uniform mapping; `seeds` adds further fixed starting points.
#[allow(clippy::too_many_arguments)]
fn search_candidate(
    cand: &Candidate,
    index: usize,
    codec: &MappingCodec,
    channel_eps: &[f64],
    hyper: &DeHyperParams,
    opts: &DeOptions,
    seeds: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> SearchResult {
    let dim = codec.v();
    let eval =
        |genes: &[f64]| objective_value(&cand.edges, &codec.decode(genes), channel_eps, opts);
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(hyper.population);
    pop.push(codec.repair(&codec.uniform_genes()));
    for s in seeds.iter().take(hyper.population - 1) {
        pop.push(codec.repair(s));
    }
    while pop.len() < hyper.population {
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        pop.push(codec.repair(&raw));
    }
    let mut fit: Vec<f64> = pop.iter().map(|g| eval(g)).collect();
    let best_of = |fit: &[f64]| {
        fit.iter().enumerate().fold(
            (0, f64::INFINITY),
            |b, (i, &f)| if f < b.1 { (i, f) } else { b },
        )
    };
    let mut history = vec![best_of(&fit).1];
    let np = hyper.population;
    for generation in 0..hyper.generations {
        let mut next = pop.clone();
        let mut next_fit = fit.clone();
        for i in 0..np {
            let mut pick = |avoid: &[usize]| loop {
                let r = rng.gen_range(0..np);
                if !avoid.contains(&r) {
                    break r;
                }
            };
            let r1 = pick(&[i]);
            let r2 = pick(&[i, r1]);
            let r3 = pick(&[i, r1, r2]);
            let jrand = rng.gen_range(0..dim);
            let trial: Vec<f64> = (0..dim)
                .map(|d| {
                    if d == jrand || rng.gen::<f64>() < hyper.crossover {
                        pop[r1][d] + hyper.weight * (pop[r2][d] - pop[r3][d])
                    } else {
                        pop[i][d]
                    }
                })
                .collect();
            let trial = codec.repair(&trial);
            let f = eval(&trial);
            if f <= fit[i] {
                next[i] = trial;
                next_fit[i] = f;
            }
        }
        pop = next;
        fit = next_fit;
        let best = best_of(&fit).1;
        history.push(best);
        debug!("candidate {index} generation {generation} best {best}");
    }
    let (bi, bf) = best_of(&fit);
    SearchResult {
        genome: Genome {
            connection_index: index,
            mapping_params: pop[bi].clone(),
        },
        objective: bf,
        history,
    }
}

/// Runs the mapping search for every candidate and returns the overall best
/// (ties go to the lower candidate index).
pub fn differential_evolution(
    avg: f64,
    candidates: &[Candidate],
    hyper: &DeHyperParams,
    profile: &ErasureProfile,
    opts: &DeOptions,
) -> Result<SearchResult> {
    run_search(avg, candidates, &[], hyper, profile, opts, 0)
}

fn run_search(
    avg: f64,
    candidates: &[Candidate],
    seeds: &[(usize, Vec<f64>)],
    hyper: &DeHyperParams,
    profile: &ErasureProfile,
    opts: &DeOptions,
    outer: u64,
) -> Result<SearchResult> {
    hyper.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidParams("no connection candidates".into()));
    }
    let v = candidates[0].graph.vn_count();
    let codec = MappingCodec::for_profile(profile, v)?;
    let eps = profile.erasures_at(profile.snr_for_avg_erasure(avg)?)?;
    let mut best: Option<SearchResult> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let own: Vec<Vec<f64>> = seeds
            .iter()
            .filter(|(c, _)| *c == i)
            .map(|(_, g)| g.clone())
            .collect();
        let mut rng = rng_for(hyper.seed, outer, i as u64);
        let r = search_candidate(cand, i, &codec, &eps, hyper, opts, &own, &mut rng);
        info!(
            "avg {avg:.5} candidate {i}/{} best objective {}",
            candidates.len(),
            r.objective
        );
        if best.as_ref().is_none_or(|b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// One pass of the outer loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub design_point: f64,
    pub objective: f64,
    pub candidates: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct Design {
    pub spec: Option<ConnectionSpec>,
    pub graph: Protograph,
    pub mapping: BitMapping,
    pub threshold: Threshold,
    /// Threshold of the starting point (uniform mapping).
    pub initial_threshold: f64,
    pub steps: Vec<OuterStep>,
    /// Set when an inner search found no converging genome.
    pub warning: Option<String>,
}

/// Picks the `limit` candidates with the best uniform-mapping objective at `avg`,
/// always keeping `keep` if given.
fn screen(
    all: Vec<Candidate>,
    avg: f64,
    limit: usize,
    keep: Option<usize>,
    profile: &ErasureProfile,
    opts: &DeOptions,
) -> Result<(Vec<Candidate>, Vec<usize>)> {
    let eps = profile.erasures_at(profile.snr_for_avg_erasure(avg)?)?;
    let uniform = BitMapping::uniform(profile.m(), all[0].graph.vn_count());
    let mut scored: Vec<(f64, usize)> = all
        .iter()
        .enumerate()
        .map(|(i, c)| (objective_value(&c.edges, &uniform, &eps, opts), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = scored.iter().take(limit).map(|s| s.1).collect();
    if let Some(k) = keep {
        if !chosen.contains(&k) {
            chosen.push(k);
        }
    }
    let mut slots: Vec<Option<Candidate>> = all.into_iter().map(Some).collect();
    let picked = chosen.iter().map(|&i| slots[i].take().unwrap()).collect();
    Ok((picked, chosen))
}

fn design_loop(
    all: Vec<Candidate>,
    start: f64,
    initial_threshold: f64,
    profile: &ErasureProfile,
    hyper: &DeHyperParams,
    opts: &DeOptions,
) -> Result<Design> {
    hyper.validate()?;
    let v = all[0].graph.vn_count();
    let codec = MappingCodec::for_profile(profile, v)?;
    let mut avg = start;
    let mut steps = Vec::new();
    let mut best: Option<(usize, BitMapping, Threshold)> = None;
    let mut seed_genes: Option<(usize, Vec<f64>)> = None;
    let mut warning = None;

    for outer in 0..hyper.max_outer {
        let keep = seed_genes.as_ref().map(|s| s.0);
        let (cands, index_map) =
            screen(all.clone(), avg, hyper.candidate_limit, keep, profile, opts)?;
        let seeds: Vec<(usize, Vec<f64>)> = seed_genes
            .iter()
            .filter_map(|(ci, g)| {
                index_map
                    .iter()
                    .position(|x| x == ci)
                    .map(|p| (p, g.clone()))
            })
            .collect();
        let found = run_search(avg, &cands, &seeds, hyper, profile, opts, outer as u64)?;
        let global = index_map[found.genome.connection_index];
        let map = codec.decode(&found.genome.mapping_params);
        if found.objective >= opts.max_iters as f64 {
            warning = Some(format!(
                "no converging design at avg erasure {avg:.5}; keeping best so far"
            ));
        }
        let th = threshold(&all[global].graph, &map, profile, opts)?;
        info!(
            "outer step {outer}: avg {avg:.5} objective {} threshold {:.5}",
            found.objective, th.avg_erasure
        );
        steps.push(OuterStep {
            design_point: avg,
            objective: found.objective,
            candidates: cands.len(),
            threshold: th.avg_erasure,
        });
        if best
            .as_ref()
            .is_none_or(|b| th.avg_erasure > b.2.avg_erasure)
        {
            best = Some((global, map, th));
        }
        seed_genes = Some((global, found.genome.mapping_params));
        if th.avg_erasure > avg {
            avg = th.avg_erasure;
        } else {
            break;
        }
    }
    let (gi, mapping, th) = best.expect("at least one outer step");
    let cand = &all[gi];
    Ok(Design {
        spec: cand.spec.clone(),
        graph: cand.graph.clone(),
        mapping,
        threshold: th,
        initial_threshold,
        steps,
        warning,
    })
}

/// Connection and mapping design for `M` chains of `C(J, K, L, w)`, starting
/// from the uniform-mapping threshold of the single chain. `M = 1` reduces to
/// a mapping-only design of the single chain.
pub fn joint_design(
    params: &SingleChainParams,
    num_chains: u32,
    profile: &ErasureProfile,
    hyper: &DeHyperParams,
    opts: &DeOptions,
) -> Result<Design> {
    let single = build_single_chain(params)?;
    let start = threshold(
        &single,
        &BitMapping::uniform(profile.m(), single.vn_count()),
        profile,
        opts,
    )?
    .avg_erasure;
    let candidates: Vec<Candidate> = if num_chains <= 1 {
        vec![Candidate::new(None, single)]
    } else {
        enumerate_connections(params, num_chains, &hyper.enumeration)?
            .into_iter()
            .map(|s| build_connected(params, &s).map(|g| Candidate::new(Some(s), g)))
            .collect::<Result<_>>()?
    };
    info!(
        "joint design {params} x{num_chains}: {} candidates, start {start:.5}",
        candidates.len()
    );
    design_loop(candidates, start, start, profile, hyper, opts)
}

/// Mapping-only design for a fixed graph, starting from its own uniform threshold.
pub fn optimize_mapping_only(
    graph: &Protograph,
    profile: &ErasureProfile,
    hyper: &DeHyperParams,
    opts: &DeOptions,
) -> Result<Design> {
    let start = threshold(
        graph,
        &BitMapping::uniform(profile.m(), graph.vn_count()),
        profile,
        opts,
    )?
    .avg_erasure;
    let hyper = DeHyperParams {
        candidate_limit: 1,
        ..hyper.clone()
    };
    design_loop(
        vec![Candidate::new(None, graph.clone())],
        start,
        start,
        profile,
        &hyper,
        opts,
    )
}
