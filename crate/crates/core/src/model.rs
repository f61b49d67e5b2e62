//! Experiment configuration, second-layer vocabulary and validation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::Pointwise;
use crate::error::{Error, Result};
use crate::quadrature::{
    CoefficientTable, GaussianIntegrator, QuadratureRule, DEFAULT_INNER_NODES,
};

/// Tolerance on `Σ π_q = 1`.
const PI_SUM_TOL: f64 = 1e-9;

/// Finite support of the second-layer initialization.
///
/// Entry `q` has value `zeta[q]` and probability `pi[q]`. Repeated values are
/// allowed here (splitting an entry is a useful consistency check) and are
/// reported by [`check_nondegeneracy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularySpec {
    pub zeta: Vec<f64>,
    pub pi: Vec<f64>,
}

impl VocabularySpec {
    /// Validates and builds a vocabulary.
    pub fn new(zeta: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let v = Self { zeta, pi };
        v.validate()?;
        Ok(v)
    }

    /// The single-entry vocabulary `{ζ}` with probability one.
    pub fn single(zeta: f64) -> Self {
        Self {
            zeta: vec![zeta],
            pi: vec![1.0],
        }
    }

    /// Number of entries `k`.
    pub fn k(&self) -> usize {
        self.zeta.len()
    }

    /// Checks lengths, finiteness, positivity and normalization.
    pub fn validate(&self) -> Result<()> {
        if self.zeta.is_empty() {
            return Err(Error::Config(
                "vocabulary must have at least one entry".into(),
            ));
        }
        if self.zeta.len() != self.pi.len() {
            return Err(Error::Config(format!(
                "vocabulary has {} values but {} probabilities",
                self.zeta.len(),
                self.pi.len()
            )));
        }
        if self.zeta.iter().any(|z| !z.is_finite()) {
            return Err(Error::Config("vocabulary values must be finite".into()));
        }
        if self.pi.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Config(
                "vocabulary probabilities must lie in (0, 1]".into(),
            ));
        }
        let s: f64 = self.pi.iter().sum();
        if (s - 1.0).abs() > PI_SUM_TOL {
            return Err(Error::Config(format!(
                "vocabulary probabilities sum to {s}, expected 1"
            )));
        }
        Ok(())
    }

    /// Group sizes `p_q` summing to `p`, by largest remainder of `π_q p`.
    pub fn group_sizes(&self, p: usize) -> Vec<usize> {
        let raw: Vec<f64> = self.pi.iter().map(|&x| x * p as f64).collect();
        let mut sizes: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| {
            let ra = raw[a] - raw[a].floor();
            let rb = raw[b] - raw[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &q in order.iter().cycle().take(p.saturating_sub(assigned)) {
            sizes[q] += 1;
        }
        sizes
    }

    /// Scales every value by `factor`, keeping the probabilities.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            zeta: self.zeta.iter().map(|z| z * factor).collect(),
            pi: self.pi.clone(),
        }
    }
}

/// Full specification of one experiment.
///
/// The JSON form has exactly the keys
/// `d, p, n, n0, eta_tilde, lambda, seed, activation, link, vocab`;
/// unknown keys are rejected and `n0` may be omitted or `null`, in which case
/// `⌈d^{1.2}⌉` is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    #[serde(default)]
    pub n0: Option<usize>,
    pub eta_tilde: f64,
    pub lambda: f64,
    pub seed: u64,
    pub activation: Pointwise,
    pub link: Pointwise,
    pub vocab: VocabularySpec,
}

impl ExperimentConfig {
    /// Parses a configuration from JSON text and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("cannot parse configuration: {e}")))?;
        validate_config(&cfg)?;
        Ok(cfg)
    }

    /// Reads and validates a configuration file.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Sample ratio `α = n / d`.
    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.d as f64
    }

    /// Width ratio `β = p / d`.
    pub fn beta(&self) -> f64 {
        self.p as f64 / self.d as f64
    }

    /// First-batch size, defaulting to `⌈d^{1.2}⌉`.
    pub fn n0_effective(&self) -> usize {
        self.n0
            .unwrap_or_else(|| (self.d as f64).powf(1.2).ceil() as usize)
    }

    /// Learning rate `η = η̃ d`.
    pub fn eta(&self) -> f64 {
        self.eta_tilde * self.d as f64
    }

    /// Stable content hash (hex SHA-256 prefix) of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// A copy with `n` replaced so that `n / d` is as close as possible to `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut c = self.clone();
        c.n = ((alpha * self.d as f64).round() as usize).max(1);
        c
    }

    /// A copy with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// A non-fatal observation about a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigWarning(pub String);

/// Checks structural constraints and returns warnings for legal but unusual settings.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<Vec<ConfigWarning>> {
    if cfg.d == 0 || cfg.p == 0 || cfg.n == 0 {
        return Err(Error::Config("d, p and n must be positive".into()));
    }
    if cfg.n0 == Some(0) {
        return Err(Error::Config("n0 must be positive when given".into()));
    }
    if !(cfg.eta_tilde.is_finite() && cfg.eta_tilde >= 0.0) {
        return Err(Error::Config(
            "eta_tilde must be finite and non-negative".into(),
        ));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(Error::Config(
            "lambda must be finite and non-negative".into(),
        ));
    }
    cfg.vocab.validate()?;
    if cfg.vocab.group_sizes(cfg.p).contains(&0) {
        return Err(Error::Config(format!(
            "p = {} leaves an empty neuron group for vocabulary {:?}",
            cfg.p, cfg.vocab.pi
        )));
    }
    let mut warnings = Vec::new();
    if has_duplicates(&cfg.vocab.zeta) {
        warnings.push(ConfigWarning(
            "vocabulary contains repeated values; mean features are collinear".into(),
        ));
    }
    if cfg.lambda == 0.0 {
        warnings.push(ConfigWarning(
            "lambda = 0 gives the minimum-norm interpolator, which may be ill-conditioned".into(),
        ));
    }
    if !cfg.activation.is_odd() {
        warnings.push(ConfigWarning(format!(
            "activation {} is not odd",
            cfg.activation
        )));
    }
    let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES)?;
    let link_mean = integ.expect_shifted(cfg.link, 0.0, |_| 1.0);
    if link_mean.abs() > 1e-10 {
        warnings.push(ConfigWarning(format!(
            "link {} has nonzero mean E[g] = {link_mean:.3e}",
            cfg.link
        )));
    }
    // E[g'(ξ)] = E[g(ξ) ξ] by Gaussian integration by parts.
    if first_hermite(cfg.link, &integ).abs() < 1e-10 {
        warnings.push(ConfigWarning(format!(
            "link {} has E[g'] = 0, so one gradient step carries no signal",
            cfg.link
        )));
    }
    if let Some(n0) = cfg.n0 {
        if cfg.d > 1 && (n0 as f64).ln() / (cfg.d as f64).ln() < 1.05 {
            warnings.push(ConfigWarning(format!(
                "n0 = {n0} grows no faster than d = {}; the spike approximation needs n0 ≫ d",
                cfg.d
            )));
        }
    }
    if cfg.d < 32 {
        warnings.push(ConfigWarning(format!(
            "d = {} is far from the proportional regime",
            cfg.d
        )));
    }
    Ok(warnings)
}

fn has_duplicates(values: &[f64]) -> bool {
    let mut seen = BTreeMap::new();
    values
        .iter()
        .any(|v| seen.insert(v.to_bits(), ()).is_some())
}

/// Checks that the vocabulary yields linearly independent mean features.
///
/// Returns `false` when two entries coincide, when `c_1(κ, ζ_q)` vanishes for
/// every `κ`, or when the functions `κ ↦ c_0(κ, ζ_q)` are numerically collinear.
pub fn check_nondegeneracy(
    vocab: &VocabularySpec,
    sigma: Pointwise,
    outer: &QuadratureRule,
    integrator: &GaussianIntegrator,
) -> bool {
    if vocab.validate().is_err() || has_duplicates(&vocab.zeta) {
        return false;
    }
    let table = CoefficientTable::new(sigma, &vocab.zeta, outer, integrator);
    let k = vocab.k();
    let mut gram = vec![0.0; k * k];
    let mut c1_energy = vec![0.0; k];
    for (i, &w) in outer.weights().iter().enumerate() {
        let c0 = table.c0(i);
        let c1 = table.c1(i);
        for a in 0..k {
            c1_energy[a] += w * c1[a] * c1[a];
            for b in 0..k {
                gram[a * k + b] += w * c0[a] * c0[b];
            }
        }
    }
    if c1_energy.iter().any(|&e| e < 1e-14) {
        return false;
    }
    let m = faer::Mat::<f64>::from_fn(k, k, |a, b| gram[a * k + b]);
    match m.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(ev) => {
            let max = ev.iter().copied().fold(0.0, f64::max);
            ev[0] > 1e-10 * max.max(1e-300)
        }
        Err(_) => false,
    }
}

/// Second-layer initialization with its neuron-to-entry assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondLayer {
    /// `a⁰_j = ζ_{q(j)} / √p`.
    pub a0: Vec<f64>,
    /// Vocabulary index `q(j)` of each neuron.
    pub groups: Vec<usize>,
    /// Number of neurons per entry.
    pub sizes: Vec<usize>,
}

impl SecondLayer {
    /// Neurons are assigned in contiguous blocks with exact group sizes
    /// from [`VocabularySpec::group_sizes`]; the draw order is then shuffled
    /// with `rng` so that no layout artifact depends on the block structure.
    pub fn sample<R: Rng + ?Sized>(vocab: &VocabularySpec, p: usize, rng: &mut R) -> Self {
        let sizes = vocab.group_sizes(p);
        let mut groups: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(q, &s)| std::iter::repeat_n(q, s))
            .collect();
        for i in (1..groups.len()).rev() {
            let j = rng.random_range(0..=i);
            groups.swap(i, j);
        }
        let scale = 1.0 / (p as f64).sqrt();
        let a0 = groups.iter().map(|&q| vocab.zeta[q] * scale).collect();
        Self { a0, groups, sizes }
    }

    /// Number of vocabulary entries.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Empirical proportions `p_q / p`.
    pub fn proportions(&self) -> Vec<f64> {
        let p = self.groups.len() as f64;
        self.sizes.iter().map(|&s| s as f64 / p).collect()
    }
}

/// Draws the second layer; a thin wrapper over [`SecondLayer::sample`].
pub fn sample_second_layer<R: Rng + ?Sized>(
    vocab: &VocabularySpec,
    p: usize,
    rng: &mut R,
) -> SecondLayer {
    SecondLayer::sample(vocab, p, rng)
}

/// `c_1 = E[σ(ξ) ξ]` for a standard normal `ξ`.
pub fn first_hermite(map: Pointwise, integrator: &GaussianIntegrator) -> f64 {
    integrator.expect_shifted(map, 0.0, |z| z)
}

/// Vocabulary of the spike coefficients `u_j = η c_1 c_1* a⁰_j / √p`.
///
/// With `a⁰_j = ζ_q / √p` and `η = η̃ d`, the spike entry of a neuron in group
/// `q` is `η̃ c_1 c_1* ζ_q / β`, which is order one as `d → ∞`.
pub fn spike_vocabulary(cfg: &ExperimentConfig, integrator: &GaussianIntegrator) -> VocabularySpec {
    let c1 = first_hermite(cfg.activation, integrator);
    let c1_star = first_hermite(cfg.link, integrator);
    cfg.vocab.scaled(cfg.eta_tilde * c1 * c1_star / cfg.beta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            d: 100,
            p: 150,
            n: 80,
            n0: None,
            eta_tilde: 1.0,
            lambda: 0.01,
            seed: 1,
            activation: Pointwise::Relu,
            link: Pointwise::Tanh,
            vocab: VocabularySpec::single(1.0),
        }
    }

    #[test]
    fn group_sizes_sum_to_p() {
        let v = VocabularySpec::new(vec![1.0, -0.5, 1.5, -2.0], vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        for p in [10, 97, 2048] {
            let s = v.group_sizes(p);
            assert_eq!(s.iter().sum::<usize>(), p);
        }
        assert_eq!(v.group_sizes(2048), vec![1433, 205, 205, 205]);
    }

    #[test]
    fn single_entry_layer_is_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let v = VocabularySpec::single(1.0);
        let layer = sample_second_layer(&v, 64, &mut rng);
        assert!(layer.a0.iter().all(|&a| (a - 0.125).abs() < 1e-15));
    }

    #[test]
    fn default_n0_and_ratios() {
        let c = base();
        assert_eq!(c.n0_effective(), (100f64).powf(1.2).ceil() as usize);
        assert!((c.beta() - 1.5).abs() < 1e-15);
        assert!((c.alpha() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn bad_vocabularies_are_rejected() {
        assert!(VocabularySpec::new(vec![1.0, 2.0], vec![0.5]).is_err());
        assert!(VocabularySpec::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(VocabularySpec::new(vec![], vec![]).is_err());
        assert!(VocabularySpec::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = base();
        let b = a.with_seed(2);
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), base().config_hash());
    }
}
