//! The intervention-inference-design loop: configuration, seed fan-out,
//! batch execution against the simulated ground truth, posterior refresh,
//! metric logging, and the MI sweep / benchmark exports behind the CLI.

use crate::error::{Error, Result};
use crate::graphs::GraphFamily;
use crate::infogain::{mi_single, MiConfig};
use crate::metrics::{auprc, auroc, edge_marginals, expected_shd};
use crate::policy::{
    greedy_cbed, policy_cbed, policy_random, soft_ait, soft_cbed, BoParams, DesignBatch,
    PolicyKind, ValueStrategy,
};
use crate::posterior::{
    bootstrap_posterior, exact_posterior, Dataset, PosteriorParticles, PriorConfig,
};
use crate::scm::{generate_ground_truth, sample, MechanismKind, Regime, Scm};
use crate::seeds::{stream, stream_id};
use crate::valueopt::SearchDomain;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Random-graph family selector for the flat config file; the edge density
/// lives in its own `edges_per_vertex` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    ErdosRenyi,
    ScaleFree,
}

/// Posterior representation to fit each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorKind {
    Exact,
    Bootstrap,
}

/// Everything one experiment run needs, as a flat JSON object. Unknown
/// keys are rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub graph_family: FamilyKind,
    pub edges_per_vertex: f64,
    pub mechanism: MechanismKind,
    pub n_obs_init: usize,
    pub batch_size: usize,
    pub n_batches: usize,
    pub policy: PolicyKind,
    pub value_strategy: ValueStrategy,
    pub posterior: PosteriorKind,
    pub n_particles: usize,
    /// Outer particle count of the MI estimator (also the variance-ratio
    /// group count).
    pub c_outer: usize,
    /// Inner particle count of the MI estimator.
    pub c_inner: usize,
    /// Outcome draws per outer particle.
    pub m: usize,
    /// Half-width of the intervention-value search interval.
    pub k: f64,
    /// Value-optimization budget per node.
    pub t_steps: usize,
    /// Exploration weight of the UCB rule.
    pub beta: f64,
    /// Softmax temperature of the soft batch samplers.
    pub zeta: f64,
    /// Per-edge log-prior penalty of the structure posterior.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            d: 5,
            graph_family: FamilyKind::ErdosRenyi,
            edges_per_vertex: 1.0,
            mechanism: MechanismKind::Linear,
            n_obs_init: 30,
            batch_size: 10,
            n_batches: 10,
            policy: PolicyKind::SoftCbed,
            value_strategy: ValueStrategy::GpUcb,
            posterior: PosteriorKind::Exact,
            n_particles: 20,
            c_outer: 20,
            c_inner: 20,
            m: 32,
            k: 5.0,
            t_steps: 8,
            beta: 2.0,
            zeta: 1.0,
            lambda: 0.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn family(&self) -> GraphFamily {
        match self.graph_family {
            FamilyKind::ErdosRenyi => {
                GraphFamily::ErdosRenyi { expected_edges_per_vertex: self.edges_per_vertex }
            }
            FamilyKind::ScaleFree => {
                GraphFamily::ScaleFree { expected_edges_per_vertex: self.edges_per_vertex }
            }
        }
    }

    /// The candidate pool size the configured policy samples from.
    fn pool_size(&self) -> usize {
        match self.value_strategy {
            ValueStrategy::GpUcb => self.d * self.t_steps,
            _ => self.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn need(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        }
        need(self.d >= 2, "d must be at least 2")?;
        need(self.edges_per_vertex > 0.0, "edges_per_vertex must be positive")?;
        need(self.n_obs_init >= 1, "n_obs_init must be positive")?;
        need(self.batch_size >= 1, "batch_size must be positive")?;
        need(self.n_particles >= 1, "n_particles must be positive")?;
        need(self.c_outer >= 1 && self.c_inner >= 1, "particle counts must be positive")?;
        need(self.m >= 1, "m must be positive")?;
        need(self.t_steps >= 1, "t_steps must be positive")?;
        need(self.k > 0.0 && self.k.is_finite(), "k must be a positive real")?;
        need(self.beta > 0.0, "beta must be positive")?;
        need(self.zeta > 0.0, "zeta must be positive")?;
        need(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be nonnegative")?;
        need(
            self.posterior != PosteriorKind::Exact || self.d <= 5,
            "exact posterior enumeration is limited to d <= 5",
        )?;
        if matches!(self.policy, PolicyKind::SoftCbed | PolicyKind::SoftAit) {
            need(
                self.batch_size <= self.pool_size(),
                "batch_size exceeds the soft sampler's candidate pool",
            )?;
        }
        Ok(())
    }
}

/// One row of the run log. Metrics describe the posterior BEFORE the
/// batch's acquisition, so record 0 is the observational-only posterior
/// and the final record (with no acquisition cost) closes the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub batch: usize,
    /// Cumulative interventional samples at metric time.
    pub samples: usize,
    pub e_shd: f64,
    /// NaN when the truth has a single label class.
    pub auroc: f64,
    /// NaN when the truth has no edges.
    pub auprc: f64,
    /// Wall-clock cost of this batch's policy call; 0 for the final record.
    pub acq_seconds: f64,
}

fn with_batch<T>(batch: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Batch { batch, source: Box::new(e) })
}

fn fit_posterior(
    cfg: &ExperimentConfig,
    data: &Dataset,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<PosteriorParticles> {
    let prior = PriorConfig {
        edge_penalty: cfg.lambda,
        mechanism: cfg.mechanism,
        ..PriorConfig::default()
    };
    match cfg.posterior {
        PosteriorKind::Exact => exact_posterior(data, cfg.d, &prior, cfg.n_particles, rng),
        PosteriorKind::Bootstrap => bootstrap_posterior(data, cfg.n_particles, &prior, rng),
    }
}

/// E-SHD plus the ranking metrics, with undefined metrics recorded as NaN
/// rather than aborting the run.
fn posterior_metrics(post: &PosteriorParticles, truth: &Scm) -> Result<(f64, f64, f64)> {
    let e_shd = expected_shd(post, truth.dag())?;
    let marginals = edge_marginals(post);
    let roc = match auroc(&marginals, truth.dag()) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let prc = match auprc(&marginals, truth.dag()) {
        Ok(v) => v,
        Err(Error::UndefinedMetric(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok((e_shd, roc, prc))
}

fn mi_config(cfg: &ExperimentConfig) -> MiConfig {
    MiConfig { n_outer: cfg.c_outer, n_inner: cfg.c_inner, m: cfg.m, ..MiConfig::default() }
}

fn acquire(
    cfg: &ExperimentConfig,
    post: &PosteriorParticles,
    data: &Dataset,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<DesignBatch> {
    let bo = BoParams {
        domain: SearchDomain::new(cfg.k)?,
        t_steps: cfg.t_steps,
        beta: cfg.beta,
    };
    let mi = mi_config(cfg);
    match cfg.policy {
        PolicyKind::Random => {
            policy_random(cfg.d, cfg.batch_size, cfg.value_strategy, data, &bo.domain, rng)
        }
        PolicyKind::Cbed => {
            policy_cbed(post, cfg.batch_size, cfg.value_strategy, data, &bo, &mi, rng)
        }
        PolicyKind::GreedyCbed => {
            greedy_cbed(post, cfg.batch_size, cfg.value_strategy, data, &bo, &mi, rng)
        }
        PolicyKind::SoftCbed => {
            soft_cbed(post, cfg.batch_size, cfg.value_strategy, data, &bo, cfg.zeta, &mi, rng)
        }
        PolicyKind::SoftAit => {
            soft_ait(post, cfg.batch_size, cfg.value_strategy, data, &bo, cfg.zeta, &mi, rng)
        }
    }
}

/// Instrumented experiment loop: returns the metric records together with
/// the accumulated dataset and the ground truth for inspection.
pub fn run_experiment_full(
    cfg: &ExperimentConfig,
) -> Result<(Vec<MetricRecord>, Dataset, Scm)> {
    cfg.validate()?;
    let truth = generate_ground_truth(
        &cfg.family(),
        cfg.d,
        cfg.mechanism,
        &mut stream(cfg.seed, stream_id::GROUND_TRUTH),
    )?;
    let mut data = Dataset::from_samples(sample(
        &truth,
        Regime::Observational,
        cfg.n_obs_init,
        &mut stream(cfg.seed, stream_id::INIT_DATA),
    ))?;
    let mut records = Vec::with_capacity(cfg.n_batches + 1);
    for b in 0..cfg.n_batches {
        let mut post_rng = stream(cfg.seed, stream_id::posterior(b));
        let post = with_batch(b, fit_posterior(cfg, &data, &mut post_rng))?;
        let (e_shd, roc, prc) = with_batch(b, posterior_metrics(&post, &truth))?;
        let mut policy_rng = stream(cfg.seed, stream_id::policy(b));
        let started = Instant::now();
        let batch = with_batch(b, acquire(cfg, &post, &data, &mut policy_rng))?;
        let acq_seconds = started.elapsed().as_secs_f64();
        let mut exec_rng = stream(cfg.seed, stream_id::execute(b));
        for xi in &batch.interventions {
            let drawn = sample(&truth, Regime::Interventional(*xi), 1, &mut exec_rng);
            with_batch(b, data.extend(drawn))?;
        }
        records.push(MetricRecord {
            batch: b,
            samples: b * cfg.batch_size,
            e_shd,
            auroc: roc,
            auprc: prc,
            acq_seconds,
        });
    }
    let b = cfg.n_batches;
    let mut post_rng = stream(cfg.seed, stream_id::posterior(b));
    let post = with_batch(b, fit_posterior(cfg, &data, &mut post_rng))?;
    let (e_shd, roc, prc) = with_batch(b, posterior_metrics(&post, &truth))?;
    records.push(MetricRecord {
        batch: b,
        samples: b * cfg.batch_size,
        e_shd,
        auroc: roc,
        auprc: prc,
        acq_seconds: 0.0,
    });
    Ok((records, data, truth))
}

/// Run the full loop and keep only the metric log.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    run_experiment_full(cfg).map(|(records, _, _)| records)
}

/// One point of the value-sweep export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub target: usize,
    pub value: f64,
    pub mi: f64,
}

/// MI of every (target, value) pair on a given posterior, one seed stream
/// per target, rows sorted by (target, value).
pub fn sweep_rows(
    post: &PosteriorParticles,
    targets: &[usize],
    grid: &[f64],
    mi: &MiConfig,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    let d = post.particle(0).node_count();
    if targets.is_empty() || grid.is_empty() {
        return Err(Error::invalid("sweep needs at least one target and one grid value"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= d) {
        return Err(Error::invalid(format!("sweep target {t} out of range for d = {d}")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sweep grid values must be finite"));
    }
    let mut targets = targets.to_vec();
    targets.sort_unstable();
    targets.dedup();
    let mut values = grid.to_vec();
    values.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(targets.len() * values.len());
    for &target in &targets {
        let mut rng = stream(master_seed, stream_id::sweep(target));
        for &value in &values {
            let est = mi_single(post, crate::scm::Intervention { target, value }, mi, &mut rng);
            rows.push(SweepRow { target, value, mi: est.value });
        }
    }
    Ok(rows)
}

/// Build the run's initial posterior (ground truth, observational data,
/// batch-0 refresh) and sweep the MI landscape over the grid.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    targets: &[usize],
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let truth = generate_ground_truth(
        &cfg.family(),
        cfg.d,
        cfg.mechanism,
        &mut stream(cfg.seed, stream_id::GROUND_TRUTH),
    )?;
    let data = Dataset::from_samples(sample(
        &truth,
        Regime::Observational,
        cfg.n_obs_init,
        &mut stream(cfg.seed, stream_id::INIT_DATA),
    ))?;
    let post = fit_posterior(cfg, &data, &mut stream(cfg.seed, stream_id::posterior(0)))?;
    sweep_rows(&post, targets, grid, &mi_config(cfg), cfg.seed)
}

/// Seed-aggregated trajectory point of one benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub batch: usize,
    pub samples: usize,
    pub e_shd_mean: f64,
    pub e_shd_stderr: Option<f64>,
    pub auroc_mean: f64,
    pub auroc_stderr: Option<f64>,
    pub auprc_mean: f64,
    pub auprc_stderr: Option<f64>,
}

/// One (config x seeds) cell of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub config: ExperimentConfig,
    pub rows: Vec<BenchRow>,
    /// Mean wall-clock seconds per acquisition call.
    pub mean_acq_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    /// Human-readable descriptions of expected runtime orderings that did
    /// not hold (soft < greedy per value strategy, fixed < gp-ucb per
    /// batching mode, comparing configs that differ in nothing else).
    pub ordering_violations: Vec<String>,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

fn aggregate_cell(cfg: &ExperimentConfig, runs: &[Vec<MetricRecord>]) -> BenchCell {
    let n_rows = runs[0].len();
    let mut rows = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let grab = |f: fn(&MetricRecord) -> f64| -> Vec<f64> {
            runs.iter().map(|r| f(&r[i])).collect()
        };
        let (e_mean, e_se) = mean_and_stderr(&grab(|r| r.e_shd));
        let (roc_mean, roc_se) = mean_and_stderr(&grab(|r| r.auroc));
        let (prc_mean, prc_se) = mean_and_stderr(&grab(|r| r.auprc));
        rows.push(BenchRow {
            batch: runs[0][i].batch,
            samples: runs[0][i].samples,
            e_shd_mean: e_mean,
            e_shd_stderr: e_se,
            auroc_mean: roc_mean,
            auroc_stderr: roc_se,
            auprc_mean: prc_mean,
            auprc_stderr: prc_se,
        });
    }
    let acq: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.iter().take(r.len() - 1).map(|rec| rec.acq_seconds))
        .collect();
    let mean_acq_seconds =
        if acq.is_empty() { 0.0 } else { acq.iter().sum::<f64>() / acq.len() as f64 };
    BenchCell { config: cfg.clone(), rows, mean_acq_seconds }
}

/// True when the configs differ only in the fields `patch` rewrites.
fn same_except(a: &ExperimentConfig, b: &ExperimentConfig, patch: fn(&mut ExperimentConfig)) -> bool {
    let mut a2 = a.clone();
    let mut b2 = b.clone();
    patch(&mut a2);
    patch(&mut b2);
    a2 == b2
}

fn check_orderings(cells: &[BenchCell]) -> Vec<String> {
    let mut violations = Vec::new();
    for x in cells {
        for y in cells {
            let (cx, cy) = (&x.config, &y.config);
            // soft batching must acquire faster than greedy, all else equal
            if cx.policy == PolicyKind::SoftCbed
                && cy.policy == PolicyKind::GreedyCbed
                && same_except(cx, cy, |c| c.policy = PolicyKind::Random)
                && x.mean_acq_seconds >= y.mean_acq_seconds
            {
                violations.push(format!(
                    "soft-cbed ({}, {:.3}s) not faster than greedy-cbed ({:.3}s)",
                    cx.value_strategy, x.mean_acq_seconds, y.mean_acq_seconds
                ));
            }
            // a fixed value must acquire faster than running the optimizer
            if cx.value_strategy == ValueStrategy::Fixed
                && cy.value_strategy == ValueStrategy::GpUcb
                && same_except(cx, cy, |c| c.value_strategy = ValueStrategy::Fixed)
                && x.mean_acq_seconds >= y.mean_acq_seconds
            {
                violations.push(format!(
                    "fixed ({}, {:.3}s) not faster than gp-ucb ({:.3}s)",
                    cx.policy, x.mean_acq_seconds, y.mean_acq_seconds
                ));
            }
        }
    }
    violations
}

/// Run every config over `n_seeds` paired master seeds (config seed + s)
/// and aggregate the metric trajectories. Seeds execute concurrently.
pub fn run_benchmark(configs: &[ExperimentConfig], n_seeds: usize) -> Result<BenchReport> {
    if configs.is_empty() || n_seeds == 0 {
        return Err(Error::invalid("benchmark needs at least one config and one seed"));
    }
    let mut cells = Vec::with_capacity(configs.len());
    for cfg in configs {
        cfg.validate()?;
        let runs: Vec<Vec<MetricRecord>> = (0..n_seeds)
            .into_par_iter()
            .map(|s| {
                let mut c = cfg.clone();
                c.seed = cfg.seed + s as u64;
                run_experiment(&c)
            })
            .collect::<Result<_>>()?;
        cells.push(aggregate_cell(cfg, &runs));
    }
    let ordering_violations = check_orderings(&cells);
    Ok(BenchReport { cells, ordering_violations })
}

/// `metrics.csv` bytes for a run log.
pub fn render_metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from("batch,samples,e_shd,auroc,auprc,acq_seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.batch, r.samples, r.e_shd, r.auroc, r.auprc, r.acq_seconds
        ));
    }
    out
}

/// `sweep.csv` bytes for a sweep.
pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("target,value,mi\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.target, r.value, r.mi));
    }
    out
}

fn opt_column(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Aggregate benchmark trajectories, one row per (cell, batch).
pub fn render_bench_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "policy,value_strategy,batch,samples,e_shd_mean,e_shd_stderr,auroc_mean,auroc_stderr,auprc_mean,auprc_stderr\n",
    );
    for cell in &report.cells {
        for r in &cell.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                cell.config.policy,
                cell.config.value_strategy,
                r.batch,
                r.samples,
                r.e_shd_mean,
                opt_column(r.e_shd_stderr),
                r.auroc_mean,
                opt_column(r.auroc_stderr),
                r.auprc_mean,
                opt_column(r.auprc_stderr),
            ));
        }
    }
    out
}

/// Mean acquisition seconds per benchmark cell.
pub fn render_timing_csv(report: &BenchReport) -> String {
    let mut out = String::from("policy,value_strategy,mean_acq_seconds\n");
    for cell in &report.cells {
        out.push_str(&format!(
            "{},{},{}\n",
            cell.config.policy, cell.config.value_strategy, cell.mean_acq_seconds
        ));
    }
    out
}
