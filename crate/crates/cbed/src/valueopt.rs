//! One-dimensional Bayesian optimization of the intervention value for a
//! fixed target node: a Matern-5/2 GP surrogate with unit observation noise,
//! upper-confidence-bound selection over a dense grid, and the MI estimator
//! as the expensive objective.

use crate::error::{Error, Result};
use crate::infogain::{mi_single, MiConfig};
use crate::linalg::Chol;
use crate::posterior::PosteriorParticles;
use crate::scm::Intervention;
use rand::Rng;

/// Symmetric search interval [-k, k] for intervention values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchDomain {
    k: f64,
}

/// Grid resolution of the inner UCB maximization.
pub const UCB_GRID: usize = 256;

impl SearchDomain {
    pub fn new(k: f64) -> Result<SearchDomain> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid("domain bound must be a positive real"));
        }
        Ok(SearchDomain { k })
    }

    pub fn bound(&self) -> f64 {
        self.k
    }

    pub fn contains(&self, v: f64) -> bool {
        (-self.k..=self.k).contains(&v)
    }

    /// n uniformly spaced points spanning the domain, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2);
        (0..n).map(|i| -self.k + 2.0 * self.k * i as f64 / (n - 1) as f64).collect()
    }
}

/// Matern kernel with smoothness 5/2 and unit length scale, plus 1e-6 on
/// coincident inputs (the surrogate's diagonal jitter).
fn kernel(a: f64, b: f64) -> f64 {
    let s = 5.0_f64.sqrt() * (a - b).abs();
    let base = (1.0 + s + s * s / 3.0) * (-s).exp();
    if a == b {
        base + 1e-6
    } else {
        base
    }
}

/// GP over (value, utility) observations. The identity added to the kernel
/// matrix is the fixed unit observation noise; predictions therefore smooth
/// rather than interpolate.
#[derive(Debug, Clone, Default)]
pub struct GpSurrogate {
    xs: Vec<f64>,
    us: Vec<f64>,
}

impl GpSurrogate {
    pub fn new() -> GpSurrogate {
        GpSurrogate::default()
    }

    pub fn observe(&mut self, v: f64, u: f64) {
        self.xs.push(v);
        self.us.push(u);
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Closed-form Gaussian predictive at `v`: mean k'(K+I)^{-1}u and variance
/// k(v,v) - k'(K+I)^{-1}k. An empty surrogate returns the prior.
pub fn gp_predict(gp: &GpSurrogate, v: f64) -> Result<(f64, f64)> {
    let n = gp.len();
    if n == 0 {
        return Ok((0.0, kernel(v, v)));
    }
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            kmat[i * n + j] = kernel(gp.xs[i], gp.xs[j]);
        }
        kmat[i * n + i] += 1.0;
    }
    let chol = Chol::new(&kmat, n)
        .ok_or_else(|| Error::Degenerate("GP kernel matrix is not positive definite".into()))?;
    let kvec: Vec<f64> = gp.xs.iter().map(|&x| kernel(v, x)).collect();
    let alpha = chol.solve(&gp.us);
    let mean = crate::linalg::dot(&kvec, &alpha);
    let var = kernel(v, v) - crate::linalg::dot(&kvec, &chol.solve(&kvec));
    debug_assert!(var > -1e-9, "predictive variance went negative: {var}");
    Ok((mean, var.max(0.0)))
}

/// Grid point maximizing mean + sqrt(beta) * sd. Ties go to the smallest
/// value, so an empty surrogate deterministically picks the lowest point.
pub fn ucb_select(gp: &GpSurrogate, beta: f64, grid: &[f64]) -> Result<f64> {
    assert!(beta > 0.0, "beta must be positive");
    assert!(!grid.is_empty(), "candidate grid must be non-empty");
    let mut best: Option<(f64, f64)> = None;
    for &v in grid {
        let (mean, var) = gp_predict(gp, v)?;
        let ucb = mean + beta.sqrt() * var.sqrt();
        let better = match best {
            None => true,
            Some((b_ucb, b_v)) => ucb > b_ucb || (ucb == b_ucb && v < b_v),
        };
        if better {
            best = Some((ucb, v));
        }
    }
    Ok(best.expect("non-empty grid").1)
}

/// The (value, utility) trace of one BO run plus its best pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BoTrace {
    /// All T evaluations in query order.
    pub trace: Vec<(f64, f64)>,
    /// Highest-utility pair of the trace (earliest on ties).
    pub best: (f64, f64),
}

/// GP-UCB loop over an arbitrary objective. Utilities are standardized
/// (subtract mean, divide by max(std, 1e-8)) before each surrogate fit so
/// the unit observation noise of (K+I) does not swamp small utility scales;
/// the returned trace holds raw values. Standardizing is a monotone affine
/// map, so the UCB argmax is unchanged in spirit but the mean/variance
/// trade-off respects the data scale.
pub(crate) fn optimize_objective<R: Rng, F>(
    mut objective: F,
    domain: &SearchDomain,
    t_steps: usize,
    beta: f64,
    rng: &mut R,
) -> Result<BoTrace>
where
    F: FnMut(f64, &mut R) -> f64,
{
    assert!(t_steps >= 1, "need at least one BO step");
    let grid = domain.grid(UCB_GRID);
    let mut raw = GpSurrogate::new();
    let mut trace = Vec::with_capacity(t_steps);
    for _ in 0..t_steps {
        let fit = standardized(&raw);
        let v = ucb_select(&fit, beta, &grid)?;
        let u = objective(v, rng);
        raw.observe(v, u);
        trace.push((v, u));
    }
    let best = trace
        .iter()
        .copied()
        .fold(None::<(f64, f64)>, |acc, (v, u)| match acc {
            Some((_, bu)) if bu >= u => acc,
            _ => Some((v, u)),
        })
        .expect("at least one step");
    Ok(BoTrace { trace, best })
}

fn standardized(gp: &GpSurrogate) -> GpSurrogate {
    if gp.is_empty() {
        return GpSurrogate::new();
    }
    let n = gp.us.len() as f64;
    let mean = gp.us.iter().sum::<f64>() / n;
    let std = (gp.us.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
    GpSurrogate { xs: gp.xs.clone(), us: gp.us.iter().map(|u| (u - mean) / std).collect() }
}

/// Optimize the MI of intervening on `target` over the value domain.
/// Deterministic given the stream; each step costs one mi_single call.
pub fn optimize_value<R: Rng>(
    post: &PosteriorParticles,
    target: usize,
    domain: &SearchDomain,
    t_steps: usize,
    beta: f64,
    mi: &MiConfig,
    rng: &mut R,
) -> Result<BoTrace> {
    optimize_objective(
        |v, rng| mi_single(post, Intervention { target, value: v }, mi, rng).value,
        domain,
        t_steps,
        beta,
        rng,
    )
}
