//! Structural causal models: mechanism parameterization, ancestral sampling
//! under observational and interventional regimes, and exact log-likelihood
//! under the truncated factorization.

use crate::error::{Error, Result};
use crate::graphs::{generate_dag, Dag, GraphFamily};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Feature count of random-feature ground-truth mechanisms.
pub const GROUND_TRUTH_N_FEATURES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Linear,
    RandomFeature,
}

/// Structural equation for one node: either a linear map of the parents or a
/// fixed random-feature expansion (tanh features, linear readout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mechanism {
    Linear {
        weights: Vec<f64>,
    },
    RandomFeature {
        /// parents x n_features
        feature_weights: Vec<Vec<f64>>,
        feature_bias: Vec<f64>,
        output_weights: Vec<f64>,
    },
}

impl Mechanism {
    /// Number of parents this mechanism expects.
    pub fn arity(&self) -> usize {
        match self {
            Mechanism::Linear { weights } => weights.len(),
            Mechanism::RandomFeature { feature_weights, .. } => feature_weights.len(),
        }
    }

    /// Noise-free value given parent values. Roots evaluate to 0 (Linear) or
    /// to the bias-only feature map (RandomFeature).
    pub fn mean(&self, parent_values: &[f64]) -> f64 {
        match self {
            Mechanism::Linear { weights } => {
                debug_assert_eq!(weights.len(), parent_values.len());
                crate::linalg::dot(weights, parent_values)
            }
            Mechanism::RandomFeature { feature_weights, feature_bias, output_weights } => {
                debug_assert_eq!(feature_weights.len(), parent_values.len());
                let mut out = 0.0;
                for (k, (&b, &w_out)) in feature_bias.iter().zip(output_weights).enumerate() {
                    let mut z = b;
                    for (p, &x) in parent_values.iter().enumerate() {
                        z += feature_weights[p][k] * x;
                    }
                    out += w_out * z.tanh();
                }
                out
            }
        }
    }
}

/// A perfect intervention do(X_target = value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub target: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Observational,
    Interventional(Intervention),
}

impl Regime {
    pub fn intervened_node(&self) -> Option<usize> {
        match self {
            Regime::Observational => None,
            Regime::Interventional(iv) => Some(iv.target),
        }
    }
}

/// One draw from an SCM. If the regime is interventional, the clamped
/// coordinate holds the intervention value exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub regime: Regime,
}

/// DAG, one mechanism per node, and per-node noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmRepr", into = "ScmRepr")]
pub struct Scm {
    dag: Dag,
    mechanisms: Vec<Mechanism>,
    noise_vars: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct ScmRepr {
    dag: Dag,
    mechanisms: Vec<Mechanism>,
    noise_vars: Vec<f64>,
}

impl From<Scm> for ScmRepr {
    fn from(s: Scm) -> ScmRepr {
        ScmRepr { dag: s.dag, mechanisms: s.mechanisms, noise_vars: s.noise_vars }
    }
}

impl TryFrom<ScmRepr> for Scm {
    type Error = Error;
    fn try_from(r: ScmRepr) -> Result<Scm> {
        Scm::new(r.dag, r.mechanisms, r.noise_vars)
    }
}

impl Scm {
    pub fn new(dag: Dag, mechanisms: Vec<Mechanism>, noise_vars: Vec<f64>) -> Result<Scm> {
        let d = dag.node_count();
        if mechanisms.len() != d || noise_vars.len() != d {
            return Err(Error::invalid("mechanism/noise arrays must have one entry per node"));
        }
        for (i, m) in mechanisms.iter().enumerate() {
            if m.arity() != dag.parents(i).len() {
                return Err(Error::invalid(format!(
                    "node {i}: mechanism arity {} != parent count {}",
                    m.arity(),
                    dag.parents(i).len()
                )));
            }
            if let Mechanism::RandomFeature { feature_bias, output_weights, feature_weights } = m {
                let f = feature_bias.len();
                if f == 0 {
                    return Err(Error::invalid(format!("node {i}: n_features must be >= 1")));
                }
                if output_weights.len() != f || feature_weights.iter().any(|row| row.len() != f) {
                    return Err(Error::invalid(format!("node {i}: inconsistent feature arrays")));
                }
            }
        }
        for (i, &v) in noise_vars.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("node {i}: noise variance must be finite and positive")));
            }
        }
        Ok(Scm { dag, mechanisms, noise_vars })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn node_count(&self) -> usize {
        self.dag.node_count()
    }

    pub fn mechanism(&self, node: usize) -> &Mechanism {
        &self.mechanisms[node]
    }

    pub fn noise_var(&self, node: usize) -> f64 {
        self.noise_vars[node]
    }

    fn mean_at(&self, node: usize, values: &[f64]) -> f64 {
        let pa = self.dag.parents(node);
        let pv: Vec<f64> = pa.iter().map(|&p| values[p]).collect();
        self.mechanisms[node].mean(&pv)
    }

    /// Noise-free forward pass: every node evaluates its mechanism on its
    /// parents' noise-free values; an intervened node is clamped. For linear
    /// mechanisms this is exactly the interventional mean vector.
    pub fn forward_means(&self, regime: Regime) -> Vec<f64> {
        let d = self.node_count();
        let mut vals = vec![0.0; d];
        let order = self.dag.topological_order().expect("Dag invariant");
        for &node in &order {
            vals[node] = match regime {
                Regime::Interventional(iv) if iv.target == node => iv.value,
                _ => self.mean_at(node, &vals),
            };
        }
        vals
    }
}

/// Ancestral sampling. Under an interventional regime the target node is
/// clamped to the intervention value; its mechanism and noise are not
/// consulted at all.
pub fn sample<R: Rng>(scm: &Scm, regime: Regime, n: usize, rng: &mut R) -> Vec<Sample> {
    assert!(n >= 1, "sample count must be positive");
    if let Regime::Interventional(iv) = regime {
        assert!(iv.target < scm.node_count(), "intervention target out of range");
    }
    let d = scm.node_count();
    let order = scm.dag.topological_order().expect("Dag invariant");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = vec![0.0; d];
        for &node in &order {
            if let Regime::Interventional(iv) = regime {
                if iv.target == node {
                    values[node] = iv.value;
                    continue;
                }
            }
            let eps: f64 = rng.sample(StandardNormal);
            values[node] = scm.mean_at(node, &values) + scm.noise_vars[node].sqrt() * eps;
        }
        out.push(Sample { values, regime });
    }
    out
}

/// Log density of a sample under the truncated factorization: the Gaussian
/// term of every node except the intervened one, which contributes zero.
pub fn log_likelihood(scm: &Scm, sample: &Sample) -> f64 {
    assert_eq!(sample.values.len(), scm.node_count(), "sample dimension mismatch");
    let skip = sample.regime.intervened_node();
    let mut ll = 0.0;
    for node in 0..scm.node_count() {
        if Some(node) == skip {
            continue;
        }
        let mu = scm.mean_at(node, &sample.values);
        let var = scm.noise_vars[node];
        let r = sample.values[node] - mu;
        ll += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - r * r / (2.0 * var);
    }
    ll
}

/// Draw a ground-truth SCM: random DAG from the family, linear weights
/// uniform on [-2, -0.5] u [0.5, 2] (magnitudes bounded away from zero) or
/// standard-normal random-feature parameters, noise variance 0.1 everywhere.
pub fn generate_ground_truth<R: Rng>(
    family: &GraphFamily,
    d: usize,
    kind: MechanismKind,
    rng: &mut R,
) -> Result<Scm> {
    let dag = generate_dag(family, d, rng)?;
    let mut mechanisms = Vec::with_capacity(d);
    for node in 0..d {
        let n_pa = dag.parents(node).len();
        let m = match kind {
            MechanismKind::Linear => {
                let weights = (0..n_pa)
                    .map(|_| {
                        let mag = rng.gen_range(0.5..=2.0);
                        if rng.gen_bool(0.5) {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect();
                Mechanism::Linear { weights }
            }
            MechanismKind::RandomFeature => {
                let f = GROUND_TRUTH_N_FEATURES;
                let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
                Mechanism::RandomFeature {
                    feature_weights: (0..n_pa)
                        .map(|_| (0..f).map(|_| normal(rng)).collect())
                        .collect(),
                    feature_bias: (0..f).map(|_| normal(rng)).collect(),
                    output_weights: (0..f).map(|_| normal(rng)).collect(),
                }
            }
        };
        mechanisms.push(m);
    }
    Scm::new(dag, mechanisms, vec![0.1; d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn chain2(w: f64, var0: f64, var1: f64) -> Scm {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        Scm::new(
            dag,
            vec![Mechanism::Linear { weights: vec![] }, Mechanism::Linear { weights: vec![w] }],
            vec![var0, var1],
        )
        .unwrap()
    }

    #[test]
    fn validation_catches_mismatches() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        // arity mismatch on node 1
        assert!(Scm::new(
            dag.clone(),
            vec![Mechanism::Linear { weights: vec![] }, Mechanism::Linear { weights: vec![] }],
            vec![1.0, 1.0],
        )
        .is_err());
        // nonpositive noise
        assert!(Scm::new(
            dag,
            vec![Mechanism::Linear { weights: vec![] }, Mechanism::Linear { weights: vec![1.0] }],
            vec![1.0, 0.0],
        )
        .is_err());
    }

    #[test]
    fn observational_variance_matches_noise() {
        let dag = Dag::empty(1).unwrap();
        let scm = Scm::new(dag, vec![Mechanism::Linear { weights: vec![] }], vec![0.1]).unwrap();
        let n = 200_000;
        let xs = sample(&scm, Regime::Observational, n, &mut rng(0));
        let mean: f64 = xs.iter().map(|s| s.values[0]).sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|s| (s.values[0] - mean).powi(2)).sum::<f64>() / n as f64;
        // sampling se of the variance is sigma^2 * sqrt(2/n)
        let se = 0.1 * (2.0 / n as f64).sqrt();
        assert!((var - 0.1).abs() < 3.0 * se, "var {var}");
    }

    #[test]
    fn intervention_clamps_exactly() {
        let scm = chain2(1.0, 1.0, 1.0);
        let iv = Intervention { target: 0, value: 5.0 };
        for s in sample(&scm, Regime::Interventional(iv), 100, &mut rng(1)) {
            assert_eq!(s.values[0], 5.0);
        }
    }

    #[test]
    fn interventional_mean_is_weight_times_value() {
        let scm = chain2(2.0, 1.0, 1.0);
        let iv = Intervention { target: 0, value: 3.0 };
        let n = 100_000;
        let xs = sample(&scm, Regime::Interventional(iv), n, &mut rng(2));
        let mean: f64 = xs.iter().map(|s| s.values[1]).sum::<f64>() / n as f64;
        assert!((mean - 6.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn forward_means_propagate() {
        let scm = chain2(2.0, 1.0, 1.0);
        assert_eq!(scm.forward_means(Regime::Observational), vec![0.0, 0.0]);
        let iv = Intervention { target: 0, value: 3.0 };
        assert_eq!(scm.forward_means(Regime::Interventional(iv)), vec![3.0, 6.0]);
    }

    #[test]
    fn log_likelihood_hand_values() {
        let dag = Dag::empty(1).unwrap();
        let single = Scm::new(dag, vec![Mechanism::Linear { weights: vec![] }], vec![1.0]).unwrap();
        let s = Sample { values: vec![0.0], regime: Regime::Observational };
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((log_likelihood(&single, &s) + 0.5 * two_pi.ln()).abs() < 1e-12);

        // observational 2-node, w=1, sigma^2=1, sample (1, 1):
        // node 0 term -(1/2)log(2pi) - 1/2, node 1 residual 0
        let scm = chain2(1.0, 1.0, 1.0);
        let s = Sample { values: vec![1.0, 1.0], regime: Regime::Observational };
        assert!((log_likelihood(&scm, &s) + two_pi.ln() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn truncation_drops_intervened_factor() {
        let scm = chain2(1.0, 1.0, 1.0);
        let iv = Intervention { target: 0, value: 7.0 };
        let s = Sample { values: vec![7.0, 7.5], regime: Regime::Interventional(iv) };
        // only node 1's Gaussian term: mean 7, residual 0.5
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.125;
        assert!((log_likelihood(&scm, &s) - expect).abs() < 1e-12);
    }

    #[test]
    fn likelihood_ignores_intervened_mechanism() {
        let a = chain2(1.0, 1.0, 1.0);
        let b = chain2(-3.0, 1.0, 0.25); // same graph, different node-1 mechanism/noise
        let iv = Intervention { target: 1, value: 2.0 };
        for s in sample(&a, Regime::Interventional(iv), 50, &mut rng(3)) {
            assert_eq!(log_likelihood(&a, &s), log_likelihood(&b, &s));
        }
    }

    #[test]
    fn density_normalizes_1d() {
        let dag = Dag::empty(1).unwrap();
        let scm = Scm::new(dag, vec![Mechanism::Linear { weights: vec![] }], vec![0.5]).unwrap();
        // Simpson's rule over [-6, 6]
        let n = 600;
        let h = 12.0 / n as f64;
        let f = |x: f64| {
            log_likelihood(&scm, &Sample { values: vec![x], regime: Regime::Observational }).exp()
        };
        let mut acc = f(-6.0) + f(6.0);
        for k in 1..n {
            let x = -6.0 + k as f64 * h;
            acc += f(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn density_normalizes_2d() {
        let scm = chain2(1.0, 0.5, 0.5);
        let n = 240;
        let h = 12.0 / n as f64;
        let w1 = |k: usize| if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let mut acc = 0.0;
        for kx in 0..=n {
            let x = -6.0 + kx as f64 * h;
            for ky in 0..=n {
                let y = -6.0 + ky as f64 * h;
                let s = Sample { values: vec![x, y], regime: Regime::Observational };
                acc += w1(kx) * w1(ky) * log_likelihood(&scm, &s).exp();
            }
        }
        assert!((acc * h * h / 9.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn intervening_matches_mutilated_model() {
        // chain 0 -> 1, do(X0 = 2): X1 should be N(w*2, var); and do(X1 = v)
        // severs the edge so X0 stays N(0, var0).
        let scm = chain2(1.5, 0.3, 0.2);
        let n = 4000;
        let crit = 1.949 * (2.0 / n as f64).sqrt(); // two-sample KS at alpha ~ 0.001

        let iv = Intervention { target: 0, value: 2.0 };
        let mut a: Vec<f64> = sample(&scm, Regime::Interventional(iv), n, &mut rng(4))
            .iter()
            .map(|s| s.values[1])
            .collect();
        let mut b: Vec<f64> =
            normal_vec(&mut rng(5), n).iter().map(|z| 3.0 + 0.2f64.sqrt() * z).collect();
        assert!(ks_stat(&mut a, &mut b) < crit);

        let iv1 = Intervention { target: 1, value: -4.0 };
        let mut c: Vec<f64> = sample(&scm, Regime::Interventional(iv1), n, &mut rng(6))
            .iter()
            .map(|s| s.values[0])
            .collect();
        let mut d: Vec<f64> = sample(&scm, Regime::Observational, n, &mut rng(7))
            .iter()
            .map(|s| s.values[0])
            .collect();
        assert!(ks_stat(&mut c, &mut d) < crit);
    }

    fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    fn ks_stat(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let diff = (i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs();
            d = d.max(diff);
        }
        d
    }

    #[test]
    fn ground_truth_respects_parameter_ranges() {
        let fam = GraphFamily::ErdosRenyi { expected_edges_per_vertex: 1.0 };
        let scm = generate_ground_truth(&fam, 5, MechanismKind::Linear, &mut rng(8)).unwrap();
        for node in 0..5 {
            assert_eq!(scm.noise_var(node), 0.1);
            if let Mechanism::Linear { weights } = scm.mechanism(node) {
                for w in weights {
                    assert!((0.5..=2.0).contains(&w.abs()), "weight {w}");
                }
            }
        }
    }

    #[test]
    fn ground_truth_forced_edge() {
        // epv = 0.5 at d=2 makes the single pair certain: p = 0.5*2/1 = 1
        let fam = GraphFamily::ErdosRenyi { expected_edges_per_vertex: 0.5 };
        let scm = generate_ground_truth(&fam, 2, MechanismKind::Linear, &mut rng(9)).unwrap();
        assert_eq!(scm.dag().edge_count(), 1);
        let child = scm.dag().edges()[0].1;
        if let Mechanism::Linear { weights } = scm.mechanism(child) {
            assert_eq!(weights.len(), 1);
            assert!(weights[0] != 0.0);
        }
    }

    #[test]
    fn random_feature_root_mean_is_bias_readout() {
        let fam = GraphFamily::ErdosRenyi { expected_edges_per_vertex: 1.0 };
        let scm = generate_ground_truth(&fam, 3, MechanismKind::RandomFeature, &mut rng(10)).unwrap();
        let root = scm
            .dag()
            .topological_order()
            .unwrap()
            .into_iter()
            .find(|&n| scm.dag().parents(n).is_empty())
            .unwrap();
        if let Mechanism::RandomFeature { feature_bias, output_weights, .. } = scm.mechanism(root) {
            let by_hand: f64 =
                feature_bias.iter().zip(output_weights).map(|(b, w)| w * b.tanh()).sum();
            assert!((scm.mechanism(root).mean(&[]) - by_hand).abs() < 1e-15);
        } else {
            panic!("expected random-feature mechanism");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let fam = GraphFamily::ErdosRenyi { expected_edges_per_vertex: 1.5 };
        let mut scm = generate_ground_truth(&fam, 4, MechanismKind::Linear, &mut rng(11)).unwrap();
        // splice in doubles with awkward binary expansions
        if let Mechanism::Linear { weights } = &mut scm.mechanisms[scm.dag.edges()[0].1] {
            weights[0] = 0.1 + 0.2;
        }
        scm.noise_vars[0] = 1e-300;
        let json = serde_json::to_string(&scm).unwrap();
        let back: Scm = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dag(), scm.dag());
        for i in 0..4 {
            assert_eq!(back.noise_var(i).to_bits(), scm.noise_var(i).to_bits());
            assert_eq!(back.mechanism(i), scm.mechanism(i));
        }
        // deserialization still validates
        let bad = json.replace("1e-300", "-1.0");
        assert!(serde_json::from_str::<Scm>(&bad).is_err());
    }
}
