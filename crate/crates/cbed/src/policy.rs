//! Intervention-selection policies: a random baseline, greedy batch
//! construction by repeated information-gain argmax, stochastic soft top-k
//! batching over a candidate pool, and a variance-ratio scored variant.

use crate::error::{Error, Result};
use crate::infogain::{ait_score, mi_single, MiConfig};
use crate::posterior::{categorical_draw, Dataset, PosteriorParticles};
use crate::scm::Intervention;
use crate::valueopt::{optimize_objective, optimize_value, SearchDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Batch-construction strategies selectable from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Random,
    Cbed,
    GreedyCbed,
    SoftCbed,
    SoftAit,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PolicyKind> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "cbed" => Ok(PolicyKind::Cbed),
            "greedy-cbed" => Ok(PolicyKind::GreedyCbed),
            "soft-cbed" => Ok(PolicyKind::SoftCbed),
            "soft-ait" => Ok(PolicyKind::SoftAit),
            other => Err(Error::invalid(format!("unknown policy '{other}'"))),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PolicyKind::Random => "random",
            PolicyKind::Cbed => "cbed",
            PolicyKind::GreedyCbed => "greedy-cbed",
            PolicyKind::SoftCbed => "soft-cbed",
            PolicyKind::SoftAit => "soft-ait",
        };
        f.write_str(name)
    }
}

/// How a policy assigns the numeric value of each chosen intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueStrategy {
    /// Always intervene at 0.
    Fixed,
    /// Draw from the empirical marginal of the target in observational data.
    SampleDist,
    /// Bayesian-optimize the value per target.
    GpUcb,
}

impl std::str::FromStr for ValueStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<ValueStrategy> {
        match s {
            "fixed" => Ok(ValueStrategy::Fixed),
            "sample-dist" => Ok(ValueStrategy::SampleDist),
            "gp-ucb" => Ok(ValueStrategy::GpUcb),
            other => Err(Error::invalid(format!("unknown value strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for ValueStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ValueStrategy::Fixed => "fixed",
            ValueStrategy::SampleDist => "sample-dist",
            ValueStrategy::GpUcb => "gp-ucb",
        };
        f.write_str(name)
    }
}

/// The experiments one acquisition round commits to, with the utility each
/// element was selected under.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBatch {
    pub interventions: Vec<Intervention>,
    pub scores: Vec<f64>,
}

impl DesignBatch {
    fn new(interventions: Vec<Intervention>, scores: Vec<f64>) -> DesignBatch {
        assert_eq!(interventions.len(), scores.len());
        DesignBatch { interventions, scores }
    }

    pub fn len(&self) -> usize {
        self.interventions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interventions.is_empty()
    }
}

/// One scored candidate design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub target: usize,
    pub value: f64,
    pub utility: f64,
}

/// Everything the soft top-k sampler may pick from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidatePool {
    pub entries: Vec<PoolEntry>,
}

/// Knobs of the per-target value optimization shared by the CBED policies.
#[derive(Debug, Clone, Copy)]
pub struct BoParams {
    pub domain: SearchDomain,
    pub t_steps: usize,
    pub beta: f64,
}

fn sample_dist_value<R: Rng>(data: &Dataset, target: usize, rng: &mut R) -> Result<f64> {
    let values = data.observational_values(target);
    if values.is_empty() {
        return Err(Error::invalid(
            "sample-dist value strategy needs observational data for the target",
        ));
    }
    Ok(values[rng.gen_range(0..values.len())])
}

/// Uniform targets with replacement; values follow the strategy (fixed 0,
/// an observational-marginal draw, or uniform on the domain since there is
/// no utility to optimize).
pub fn policy_random<R: Rng>(
    d: usize,
    batch_size: usize,
    strategy: ValueStrategy,
    data: &Dataset,
    domain: &SearchDomain,
    rng: &mut R,
) -> Result<DesignBatch> {
    assert!(d >= 1);
    let mut interventions = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let target = rng.gen_range(0..d);
        let value = match strategy {
            ValueStrategy::Fixed => 0.0,
            ValueStrategy::SampleDist => sample_dist_value(data, target, rng)?,
            ValueStrategy::GpUcb => rng.gen_range(-domain.bound()..=domain.bound()),
        };
        interventions.push(Intervention { target, value });
    }
    let scores = vec![0.0; batch_size];
    Ok(DesignBatch::new(interventions, scores))
}

/// Scored (value, utility) candidates per node for one acquisition round.
/// With gp-ucb every node contributes its whole optimization trace; fixed
/// and sample-dist contribute a single evaluation each. Sub-stream seeds
/// are drawn in node order before the parallel fan-out so results are
/// reproducible and identical across the policies sharing this layout.
fn node_candidates<R: Rng>(
    post: &PosteriorParticles,
    strategy: ValueStrategy,
    data: &Dataset,
    bo: &BoParams,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let d = post.particle(0).node_count();
    match strategy {
        ValueStrategy::GpUcb => {
            let seeds: Vec<u64> = (0..d).map(|_| rng.next_u64()).collect();
            seeds
                .into_par_iter()
                .enumerate()
                .map(|(j, seed)| {
                    let mut sub = ChaCha8Rng::seed_from_u64(seed);
                    optimize_value(post, j, &bo.domain, bo.t_steps, bo.beta, mi, &mut sub)
                        .map(|t| t.trace)
                })
                .collect()
        }
        ValueStrategy::Fixed | ValueStrategy::SampleDist => {
            let mut jobs = Vec::with_capacity(d);
            for target in 0..d {
                let value = match strategy {
                    ValueStrategy::Fixed => 0.0,
                    _ => sample_dist_value(data, target, rng)?,
                };
                jobs.push((target, value, rng.next_u64()));
            }
            Ok(jobs
                .into_par_iter()
                .map(|(target, value, seed)| {
                    let mut sub = ChaCha8Rng::seed_from_u64(seed);
                    let est = mi_single(post, Intervention { target, value }, mi, &mut sub);
                    vec![(value, est.value)]
                })
                .collect())
        }
    }
}

/// Argmax over the per-node bests; earlier candidates and lower node
/// indices win ties.
fn best_node(candidates: &[Vec<(f64, f64)>]) -> (usize, f64, f64) {
    let mut pick: Option<(usize, f64, f64)> = None;
    for (j, list) in candidates.iter().enumerate() {
        let mut best: Option<(f64, f64)> = None;
        for &(v, u) in list {
            match best {
                Some((_, bu)) if bu >= u => {}
                _ => best = Some((v, u)),
            }
        }
        let (v, u) = best.expect("every node has at least one candidate");
        match pick {
            Some((_, _, pu)) if pu >= u => {}
            _ => pick = Some((j, v, u)),
        }
    }
    pick.expect("at least one node")
}

/// Repeated argmax batch construction: each round scores every node on
/// fresh MC draws and keeps the best (target, value). Rounds are
/// independent, so duplicate designs are possible and act as replicates.
pub fn greedy_cbed<R: Rng>(
    post: &PosteriorParticles,
    batch_size: usize,
    strategy: ValueStrategy,
    data: &Dataset,
    bo: &BoParams,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<DesignBatch> {
    let mut interventions = Vec::with_capacity(batch_size);
    let mut scores = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let candidates = node_candidates(post, strategy, data, bo, mi, rng)?;
        let (target, value, utility) = best_node(&candidates);
        interventions.push(Intervention { target, value });
        scores.push(utility);
    }
    Ok(DesignBatch::new(interventions, scores))
}

/// Non-batch baseline: one argmax round, its design applied for the whole
/// batch. Matches greedy_cbed's first element on a shared stream.
pub fn policy_cbed<R: Rng>(
    post: &PosteriorParticles,
    batch_size: usize,
    strategy: ValueStrategy,
    data: &Dataset,
    bo: &BoParams,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<DesignBatch> {
    let candidates = node_candidates(post, strategy, data, bo, mi, rng)?;
    let (target, value, utility) = best_node(&candidates);
    Ok(DesignBatch::new(
        vec![Intervention { target, value }; batch_size],
        vec![utility; batch_size],
    ))
}

/// Sequential sampling without replacement, each step proportional to
/// exp(max(utility, 0) / zeta) over the remaining entries. Clamping keeps
/// small negative MC noise from acting like strong down-weighting.
pub fn soft_topk_sample<R: Rng>(
    pool: &CandidatePool,
    batch_size: usize,
    zeta: f64,
    rng: &mut R,
) -> Result<DesignBatch> {
    assert!(zeta > 0.0, "softmax temperature must be positive");
    let n = pool.entries.len();
    if batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} exceeds candidate pool size {n}"
        )));
    }
    let logits: Vec<f64> = pool.entries.iter().map(|e| e.utility.max(0.0) / zeta).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut interventions = Vec::with_capacity(batch_size);
    let mut scores = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        // max-shift so exp never overflows regardless of zeta
        let shift = remaining.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (logits[i] - shift).exp()).collect();
        let k = categorical_draw(&weights, rng);
        let entry = pool.entries[remaining.swap_remove(k)];
        interventions.push(Intervention { target: entry.target, value: entry.value });
        scores.push(entry.utility);
    }
    Ok(DesignBatch::new(interventions, scores))
}

/// Soft batch construction over every candidate the per-node scoring pass
/// produced: with gp-ucb the pool holds all t_steps points per node, so
/// one optimization pass prices d * t_steps candidates.
pub fn soft_cbed<R: Rng>(
    post: &PosteriorParticles,
    batch_size: usize,
    strategy: ValueStrategy,
    data: &Dataset,
    bo: &BoParams,
    zeta: f64,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<DesignBatch> {
    let candidates = node_candidates(post, strategy, data, bo, mi, rng)?;
    let mut entries = Vec::with_capacity(candidates.iter().map(Vec::len).sum());
    for (target, list) in candidates.iter().enumerate() {
        for &(value, utility) in list {
            entries.push(PoolEntry { target, value, utility });
        }
    }
    soft_topk_sample(&CandidatePool { entries }, batch_size, zeta, rng)
}

/// Soft batching on the variance-ratio score instead of mutual information.
/// Candidate values follow the strategy; with gp-ucb the per-node traces
/// use the variance ratio as the optimization objective (group count from
/// the outer-particle setting, m draws per group). Entries whose score hit
/// the infinity sentinel are excluded; if nothing informative remains the
/// batch falls back to a uniform draw over all candidates with a warning.
pub fn soft_ait<R: Rng>(
    post: &PosteriorParticles,
    batch_size: usize,
    strategy: ValueStrategy,
    data: &Dataset,
    bo: &BoParams,
    zeta: f64,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<DesignBatch> {
    let d = post.particle(0).node_count();
    let mut entries = Vec::new();
    match strategy {
        ValueStrategy::Fixed | ValueStrategy::SampleDist => {
            let mut jobs = Vec::with_capacity(d);
            for target in 0..d {
                let value = match strategy {
                    ValueStrategy::Fixed => 0.0,
                    _ => sample_dist_value(data, target, rng)?,
                };
                jobs.push((target, value, rng.next_u64()));
            }
            entries = jobs
                .into_par_iter()
                .map(|(target, value, seed)| {
                    let mut sub = ChaCha8Rng::seed_from_u64(seed);
                    let score = ait_score(
                        post,
                        Intervention { target, value },
                        mi.n_outer,
                        mi.m,
                        &mut sub,
                    );
                    PoolEntry { target, value, utility: score.value }
                })
                .collect();
        }
        ValueStrategy::GpUcb => {
            let seeds: Vec<u64> = (0..d).map(|_| rng.next_u64()).collect();
            let per_node: Vec<Result<Vec<PoolEntry>>> = seeds
                .into_par_iter()
                .enumerate()
                .map(|(target, seed)| {
                    let mut sub = ChaCha8Rng::seed_from_u64(seed);
                    let mut raw_scores = Vec::with_capacity(bo.t_steps);
                    let trace = optimize_objective(
                        |v, r| {
                            let score =
                                ait_score(post, Intervention { target, value: v }, mi.n_outer, mi.m, r);
                            raw_scores.push(score.value);
                            // the surrogate needs finite inputs; the raw
                            // score still decides pool membership below
                            if score.value.is_finite() {
                                score.value
                            } else {
                                0.0
                            }
                        },
                        &bo.domain,
                        bo.t_steps,
                        bo.beta,
                        &mut sub,
                    )?;
                    Ok(trace
                        .trace
                        .iter()
                        .zip(raw_scores)
                        .map(|(&(value, _), utility)| PoolEntry { target, value, utility })
                        .collect())
                })
                .collect();
            for node_entries in per_node {
                entries.extend(node_entries?);
            }
        }
    }
    let kept: Vec<PoolEntry> =
        entries.iter().copied().filter(|e| e.utility.is_finite()).collect();
    if kept.is_empty() || kept.iter().all(|e| e.utility == 0.0) {
        eprintln!("warning: no informative variance-ratio scores; sampling candidates uniformly");
        let flat = entries
            .iter()
            .map(|e| PoolEntry { utility: 0.0, ..*e })
            .collect();
        return soft_topk_sample(&CandidatePool { entries: flat }, batch_size, zeta, rng);
    }
    soft_topk_sample(&CandidatePool { entries: kept }, batch_size, zeta, rng)
}
