//! Gaussian expectations: Gauss–Hermite rules, normalized Hermite polynomials
//! and the shifted Hermite coefficients of an activation.
//!
//! All rules integrate against the standard normal density, so the weights of
//! a rule sum to one and `rule.expect(f)` approximates `E[f(z)]`, `z ~ N(0, 1)`.

use faer::{Mat, Side};

use crate::activation::Pointwise;
use crate::error::{Error, Result};

/// Default number of nodes for expectations over the spike coordinate `κ`.
pub const DEFAULT_OUTER_NODES: usize = 201;
/// Default number of nodes for the inner Hermite projections.
pub const DEFAULT_INNER_NODES: usize = 127;

/// Half-width of the truncated domain used by the piecewise integrator.
const PIECEWISE_HALF_WIDTH: f64 = 13.0;
/// Gauss–Legendre nodes per unit-length panel of the piecewise integrator.
const PANEL_NODES: usize = 20;

/// Nodes and weights of a quadrature rule for the standard normal measure.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from explicit nodes and weights.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::Quadrature(
                "nodes and weights must be non-empty and of equal length".into(),
            ));
        }
        Ok(Self { nodes, weights })
    }

    /// The `n`-point Gauss–Hermite rule for the probabilists' weight.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        gauss_hermite_rule(n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Approximates `E[f(z)]` for `z ~ N(0, 1)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Evaluates the normalized probabilists' Hermite polynomial `h_l(x)`.
///
/// The family is orthonormal under the standard normal measure:
/// `h_0 = 1`, `h_1 = x`, `h_2 = (x² - 1)/√2`, and
/// `h_{l+1} = (x h_l - √l h_{l-1}) / √(l+1)`.
pub fn hermite_polynomial(l: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..l {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[l] = h_l(x)` for `l = 0..out.len()`.
pub fn hermite_polynomials_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for l in 1..out.len().saturating_sub(1) {
        out[l + 1] = (x * out[l] - (l as f64).sqrt() * out[l - 1]) / ((l + 1) as f64).sqrt();
    }
}

/// Returns `(h_n(x), h_{n-1}(x), s)` with both values scaled by `e^{-s}`,
/// which keeps the recurrence finite for large `n` and `|x|`.
fn scaled_hermite_pair(n: usize, x: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            cur /= BIG;
            prev /= BIG;
            log_scale += BIG.ln();
        }
    }
    (cur, prev, log_scale)
}

/// Builds the `n`-point Gauss–Hermite rule for the standard normal measure.
///
/// Nodes start from the eigenvalues of the symmetric Jacobi matrix and are
/// polished by Newton steps on `h_n`; weights use `w_i = 1 / (n h_{n-1}(x_i)²)`
/// evaluated in scaled arithmetic, so rules with several hundred nodes keep
/// full relative accuracy on every weight that is representable.
pub fn gauss_hermite_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::Quadrature("a rule needs at least one node".into()));
    }
    let jacobi = Mat::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j {
            (j as f64).sqrt()
        } else if j + 1 == i {
            (i as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes = jacobi
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Quadrature(format!("Jacobi eigenvalues failed: {e:?}")))?;
    let sqrt_n = (n as f64).sqrt();
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (hn, hm, _) = scaled_hermite_pair(n, *x);
            if hm == 0.0 {
                break;
            }
            let step = hn / (sqrt_n * hm);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // Enforce exact symmetry of the rule about the origin.
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (_, hm, s) = scaled_hermite_pair(n, x);
            (-(n as f64).ln() - 2.0 * (hm.abs().ln() + s)).exp()
        })
        .collect::<Vec<_>>();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Quadrature(format!(
            "non-finite weight in the {n}-point rule"
        )));
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Computes Gaussian expectations of activation-dependent integrands.
///
/// Smooth maps use a Gauss–Hermite rule. Maps with kinks or jumps are
/// integrated panel by panel with Gauss–Legendre rules whose panel edges
/// include the discontinuities, which keeps the error at round-off level.
#[derive(Clone, Debug)]
pub struct GaussianIntegrator {
    hermite: QuadratureRule,
    legendre_nodes: Vec<f64>,
    legendre_weights: Vec<f64>,
}

impl GaussianIntegrator {
    /// Integrator using an `inner_nodes`-point Gauss–Hermite rule for smooth maps.
    pub fn new(inner_nodes: usize) -> Result<Self> {
        let (legendre_nodes, legendre_weights) = gauss_legendre(PANEL_NODES);
        Ok(Self {
            hermite: gauss_hermite_rule(inner_nodes)?,
            legendre_nodes,
            legendre_weights,
        })
    }

    pub fn hermite_rule(&self) -> &QuadratureRule {
        &self.hermite
    }

    /// Approximates `E[f(z)]`; `breaks` lists points where `f` is not smooth.
    pub fn expect(&self, breaks: &[f64], f: impl FnMut(f64) -> f64) -> f64 {
        if breaks.is_empty() {
            self.hermite.expect(f)
        } else {
            self.expect_piecewise(breaks, f)
        }
    }

    /// Piecewise Gauss–Legendre approximation of `E[f(z)]` on a truncated line.
    pub fn expect_piecewise(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let l = PIECEWISE_HALF_WIDTH;
        let mut edges: Vec<f64> = (0..=(2.0 * l) as usize).map(|i| -l + i as f64).collect();
        edges.extend(breaks.iter().copied().filter(|b| b.abs() < l));
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&t, &w) in self.legendre_nodes.iter().zip(&self.legendre_weights) {
                let x = mid + half * t;
                total += w * half * norm * (-0.5 * x * x).exp() * f(x);
            }
        }
        total
    }

    /// Approximates `E[σ(z + s) q(z)]`, splitting at the shifted kinks of `σ`.
    pub fn expect_shifted(&self, sigma: Pointwise, s: f64, mut q: impl FnMut(f64) -> f64) -> f64 {
        let breaks: Vec<f64> = sigma.breakpoints().iter().map(|b| b - s).collect();
        self.expect(&breaks, |z| sigma.eval(z + s) * q(z))
    }
}

/// Shifted Hermite coefficient `c_l(κ, ζ) = E_z[σ(z + κζ) h_l(z)]`.
pub fn shifted_hermite_coeff(
    sigma: Pointwise,
    l: usize,
    kappa: f64,
    zeta: f64,
    integrator: &GaussianIntegrator,
) -> f64 {
    integrator.expect_shifted(sigma, kappa * zeta, |z| hermite_polynomial(l, z))
}

/// First moments of the shifted activation at one point `(κ, ζ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftedMoments {
    /// `c_0(κ, ζ)`, the conditional mean.
    pub c0: f64,
    /// `c_1(κ, ζ)`, the linear coefficient.
    pub c1: f64,
    /// `E[σ(z + κζ)²]`.
    pub second_moment: f64,
}

impl ShiftedMoments {
    /// Computes the moments with one pass over the integrator nodes.
    pub fn compute(
        sigma: Pointwise,
        kappa: f64,
        zeta: f64,
        integrator: &GaussianIntegrator,
    ) -> Self {
        let s = kappa * zeta;
        let c0 = integrator.expect_shifted(sigma, s, |_| 1.0);
        let c1 = integrator.expect_shifted(sigma, s, |z| z);
        let breaks: Vec<f64> = sigma.breakpoints().iter().map(|b| b - s).collect();
        let second_moment = integrator.expect(&breaks, |z| {
            let v = sigma.eval(z + s);
            v * v
        });
        Self {
            c0,
            c1,
            second_moment,
        }
    }

    /// Residual `r = E[σ²] - c_0² - c_1²`, clamped at zero against round-off.
    pub fn residual(&self) -> f64 {
        (self.second_moment - self.c0 * self.c0 - self.c1 * self.c1).max(0.0)
    }
}

/// Residual second moment `r(κ, ζ) = E[σ(z + κζ)²] - c_0² - c_1²`.
pub fn residual_second_moment(
    sigma: Pointwise,
    kappa: f64,
    zeta: f64,
    integrator: &GaussianIntegrator,
) -> f64 {
    ShiftedMoments::compute(sigma, kappa, zeta, integrator).residual()
}

/// Outcome of comparing the truncated Hermite series with the residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailReport {
    /// `Σ_{l=2}^{l_max} c_l²`.
    pub truncated_sum: f64,
    /// `r(κ, ζ)` from the second moment.
    pub residual: f64,
    /// `residual - truncated_sum`, the energy beyond `l_max`.
    pub tail: f64,
}

/// Compares `Σ_{l=2}^{l_max} c_l(κ, ζ)²` with `r(κ, ζ)`.
///
/// For smooth activations the tail is at round-off level once `l_max` is a
/// few dozen; for kinked or discontinuous maps it decays only polynomially,
/// which the report makes visible instead of hiding.
pub fn hermite_tail_check(
    sigma: Pointwise,
    kappa: f64,
    zeta: f64,
    l_max: usize,
    integrator: &GaussianIntegrator,
) -> TailReport {
    let s = kappa * zeta;
    let mut h = vec![0.0; l_max + 1];
    let mut coeffs = vec![0.0; l_max + 1];
    let breaks: Vec<f64> = sigma.breakpoints().iter().map(|b| b - s).collect();
    for (l, c) in coeffs.iter_mut().enumerate().skip(2) {
        *c = integrator.expect(&breaks, |z| {
            hermite_polynomials_into(z, &mut h[..=l]);
            sigma.eval(z + s) * h[l]
        });
    }
    let truncated_sum = coeffs.iter().skip(2).map(|c| c * c).sum::<f64>();
    let residual = residual_second_moment(sigma, kappa, zeta, integrator);
    TailReport {
        truncated_sum,
        residual,
        tail: residual - truncated_sum,
    }
}

/// `c_0`, `c_1` and `r` tabulated on the outer `κ` nodes for each vocabulary entry.
///
/// Entries are stored row-major as `[node * k + q]`.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    rule: QuadratureRule,
    k: usize,
    c0: Vec<f64>,
    c1: Vec<f64>,
    r: Vec<f64>,
}

impl CoefficientTable {
    /// Tabulates the moments of `σ(z + κ ζ_q)` on every node of `outer`.
    pub fn new(
        sigma: Pointwise,
        zetas: &[f64],
        outer: &QuadratureRule,
        integrator: &GaussianIntegrator,
    ) -> Self {
        let k = zetas.len();
        let n = outer.len();
        let mut c0 = vec![0.0; n * k];
        let mut c1 = vec![0.0; n * k];
        let mut r = vec![0.0; n * k];
        for (i, &kappa) in outer.nodes().iter().enumerate() {
            for (q, &zeta) in zetas.iter().enumerate() {
                let m = ShiftedMoments::compute(sigma, kappa, zeta, integrator);
                c0[i * k + q] = m.c0;
                c1[i * k + q] = m.c1;
                r[i * k + q] = m.residual();
            }
        }
        Self {
            rule: outer.clone(),
            k,
            c0,
            c1,
            r,
        }
    }

    /// Builds the default table: 201 outer nodes and 127 inner nodes.
    pub fn with_defaults(sigma: Pointwise, zetas: &[f64]) -> Result<Self> {
        let outer = gauss_hermite_rule(DEFAULT_OUTER_NODES)?;
        let inner = GaussianIntegrator::new(DEFAULT_INNER_NODES)?;
        Ok(Self::new(sigma, zetas, &outer, &inner))
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    pub fn weights(&self) -> &[f64] {
        self.rule.weights()
    }

    /// `c_0(κ_i, ζ_q)` for all `q` at outer node `i`.
    pub fn c0(&self, i: usize) -> &[f64] {
        &self.c0[i * self.k..(i + 1) * self.k]
    }

    /// `c_1(κ_i, ζ_q)` for all `q` at outer node `i`.
    pub fn c1(&self, i: usize) -> &[f64] {
        &self.c1[i * self.k..(i + 1) * self.k]
    }

    /// `r(κ_i, ζ_q)` for all `q` at outer node `i`.
    pub fn r(&self, i: usize) -> &[f64] {
        &self.r[i * self.k..(i + 1) * self.k]
    }

    /// `E_κ[c_1(κ, ζ_q) c_1(κ, ζ_q')]` as a row-major `k × k` matrix.
    pub fn mean_c1_outer(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k * k];
        for (i, &w) in self.weights().iter().enumerate() {
            let c1 = self.c1(i);
            for a in 0..k {
                for b in 0..k {
                    out[a * k + b] += w * c1[a] * c1[b];
                }
            }
        }
        out
    }

    /// `E_κ[r(κ, ζ_q)]` for each `q`.
    pub fn mean_r(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &w) in self.weights().iter().enumerate() {
            for (o, r) in out.iter_mut().zip(self.r(i)) {
                *o += w * r;
            }
        }
        out
    }

    /// `E_κ[Var(σ(z + κζ_q) | κ)] = E_κ[c_1² + r]` for each `q`.
    pub fn mean_conditional_variance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &w) in self.weights().iter().enumerate() {
            for q in 0..self.k {
                let c1 = self.c1(i)[q];
                out[q] += w * (c1 * c1 + self.r(i)[q]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_gives_expected_low_orders() {
        for &x in &[-2.0, -0.3, 0.0, 1.5] {
            assert_eq!(hermite_polynomial(0, x), 1.0);
            assert_eq!(hermite_polynomial(1, x), x);
            assert!((hermite_polynomial(2, x) - (x * x - 1.0) / 2f64.sqrt()).abs() < 1e-15);
            let h3 = (x * x * x - 3.0 * x) / 6f64.sqrt();
            assert!((hermite_polynomial(3, x) - h3).abs() < 1e-14);
        }
    }

    #[test]
    fn rule_weights_sum_to_one_and_are_symmetric() {
        for n in [1, 2, 5, 20, 127, 201] {
            let rule = gauss_hermite_rule(n).unwrap();
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n = {n}: {s}");
            for i in 0..n {
                assert_eq!(rule.nodes()[i], -rule.nodes()[n - 1 - i]);
            }
        }
    }

    #[test]
    fn five_point_rule_integrates_polynomials_exactly() {
        let rule = gauss_hermite_rule(5).unwrap();
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, &m) in moments.iter().enumerate() {
            let est = rule.expect(|x| x.powi(k as i32));
            assert!((est - m).abs() < 1e-12 * m.max(1.0), "x^{k}: {est}");
        }
    }

    #[test]
    fn legendre_rule_is_exact_for_low_degree() {
        let (x, w) = gauss_legendre(7);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((int - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_nodes_is_an_error() {
        assert!(gauss_hermite_rule(0).is_err());
    }

    #[test]
    fn relu_moments_match_closed_forms() {
        let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES).unwrap();
        for &s in &[-1.7, -0.2, 0.0, 0.6, 2.3] {
            let m = ShiftedMoments::compute(Pointwise::Relu, s, 1.0, &integ);
            let pdf = (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cdf = 0.5 * libm::erfc(-s / 2f64.sqrt());
            assert!((m.c0 - (s * cdf + pdf)).abs() < 1e-12);
            assert!((m.c1 - cdf).abs() < 1e-12);
            assert!((m.second_moment - ((s * s + 1.0) * cdf + s * pdf)).abs() < 1e-12);
        }
    }
}
