//! Structure-recovery metrics against the true graph: expected structural
//! Hamming distance under the posterior, and AUROC / AUPRC over per-edge
//! posterior marginals.

use crate::error::{Error, Result};
use crate::graphs::Dag;
use crate::posterior::PosteriorParticles;

/// Posterior probability of each directed edge, as a dense row-major
/// matrix. The diagonal is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMarginals {
    d: usize,
    probs: Vec<f64>,
}

impl EdgeMarginals {
    pub fn new(d: usize, probs: Vec<f64>) -> Result<EdgeMarginals> {
        if probs.len() != d * d {
            return Err(Error::invalid("marginal matrix must be d x d"));
        }
        for i in 0..d {
            for j in 0..d {
                let p = probs[i * d + j];
                if i == j && p != 0.0 {
                    return Err(Error::invalid("marginal diagonal must be zero"));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid("marginals must lie in [0, 1]"));
                }
            }
        }
        Ok(EdgeMarginals { d, probs })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.d + j]
    }
}

/// Posterior-weighted frequency of every directed edge.
pub fn edge_marginals(post: &PosteriorParticles) -> EdgeMarginals {
    let d = post.particle(0).node_count();
    let mut probs = vec![0.0; d * d];
    for (scm, &w) in post.particles().iter().zip(post.weights()) {
        debug_assert_eq!(scm.node_count(), d);
        for (i, j) in scm.dag().edges() {
            probs[i * d + j] += w;
        }
    }
    // weights sum to one but clamp away any accumulation overshoot
    for p in &mut probs {
        *p = p.min(1.0);
    }
    EdgeMarginals { d, probs }
}

fn pair_config(g: &Dag, i: usize, j: usize) -> (bool, bool) {
    (g.has_edge(i, j), g.has_edge(j, i))
}

/// Edits (insertions, deletions, reversals) separating two graphs, with a
/// reversal counting a single edit: one per unordered pair whose edge
/// configuration differs.
fn shd(a: &Dag, b: &Dag) -> usize {
    let d = a.node_count();
    let mut edits = 0;
    for i in 0..d {
        for j in i + 1..d {
            if pair_config(a, i, j) != pair_config(b, i, j) {
                edits += 1;
            }
        }
    }
    edits
}

/// Posterior expectation of the structural Hamming distance to the truth.
pub fn expected_shd(post: &PosteriorParticles, truth: &Dag) -> Result<f64> {
    let d = truth.node_count();
    if post.particles().iter().any(|scm| scm.node_count() != d) {
        return Err(Error::invalid("posterior and truth dimensions differ"));
    }
    Ok(post
        .particles()
        .iter()
        .zip(post.weights())
        .map(|(scm, &w)| w * shd(scm.dag(), truth) as f64)
        .sum())
}

/// Off-diagonal (score, label) pairs in row-major slot order.
fn slot_pairs(marginals: &EdgeMarginals, truth: &Dag) -> Result<Vec<(f64, bool)>> {
    let d = truth.node_count();
    if marginals.d() != d {
        return Err(Error::invalid("marginal and truth dimensions differ"));
    }
    let mut pairs = Vec::with_capacity(d.saturating_sub(1) * d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                pairs.push((marginals.prob(i, j), truth.has_edge(i, j)));
            }
        }
    }
    Ok(pairs)
}

/// Rank-sum AUROC over raw (score, label) pairs, average ranks on ties.
fn rank_auroc(pairs: &[(f64, bool)]) -> Result<f64> {
    let n_pos = pairs.iter().filter(|(_, l)| *l).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both label classes".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut rank_pos_sum = 0.0;
    let mut lo = 0;
    while lo < order.len() {
        let mut hi = lo + 1;
        while hi < order.len() && pairs[order[hi]].0 == pairs[order[lo]].0 {
            hi += 1;
        }
        // ranks are 1-based; a tie run shares its average rank
        let avg_rank = (lo + 1 + hi) as f64 / 2.0;
        for &k in &order[lo..hi] {
            if pairs[k].1 {
                rank_pos_sum += avg_rank;
            }
        }
        lo = hi;
    }
    let np = n_pos as f64;
    Ok((rank_pos_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Area under the ROC curve for predicting edge presence from the
/// marginals, via the rank-sum statistic.
pub fn auroc(marginals: &EdgeMarginals, truth: &Dag) -> Result<f64> {
    rank_auroc(&slot_pairs(marginals, truth)?)
}

/// Step-interpolated PR area over raw (score, label) pairs: precision is
/// held constant to the right of each threshold and tied scores enter as
/// one block, so the curve only has points at distinct thresholds.
fn step_auprc(pairs: &[(f64, bool)]) -> Result<f64> {
    let n_pos = pairs.iter().filter(|(_, l)| *l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one true edge".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].0.total_cmp(&pairs[a].0));
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut lo = 0;
    while lo < order.len() {
        let mut hi = lo + 1;
        while hi < order.len() && pairs[order[hi]].0 == pairs[order[lo]].0 {
            hi += 1;
        }
        let block_pos = order[lo..hi].iter().filter(|&&k| pairs[k].1).count();
        tp += block_pos;
        fp += hi - lo - block_pos;
        if block_pos > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            area += block_pos as f64 / n_pos as f64 * precision;
        }
        lo = hi;
    }
    Ok(area)
}

/// Area under the precision-recall curve over the same slots and scores.
pub fn auprc(marginals: &EdgeMarginals, truth: &Dag) -> Result<f64> {
    step_auprc(&slot_pairs(marginals, truth)?)
}
