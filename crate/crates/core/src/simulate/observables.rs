use faer::{c64, Mat, Side};
use rand::Rng;

use crate::activation::Pointwise;
use crate::error::{Error, Result};
use crate::generror::{TauProvenance, TauSet};
use crate::linalg;

use super::data::{gaussian_matrix, mat_vec};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Test points processed per batch by [`empirical_generror`].
const TEST_BATCH: usize = 2000;

/// Monte Carlo test error `E[(g(xᵀw*) − f(x))²]` of the readout `a` on the
/// first layer `w`, with `f(x) = aᵀ σ(W x) / √p`.
pub fn empirical_generror<R: Rng + ?Sized>(
    a: &[f64],
    w: &Mat<f64>,
    sigma: Pointwise,
    link: Pointwise,
    w_star: &[f64],
    n_test: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_test < 2 {
        return Err(Error::Config(
            "at least two test points are required".into(),
        ));
    }
    let p = w.nrows();
    let d = w.ncols();
    if a.len() != p || w_star.len() != d {
        return Err(Error::Config("test error: inconsistent shapes".into()));
    }
    let sp = (p as f64).sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut done = 0;
    while done < n_test {
        let m = TEST_BATCH.min(n_test - done);
        let x = gaussian_matrix(m, d, rng);
        let kappa = mat_vec(&x, w_star);
        let pre = &x * w.transpose();
        let mut f = vec![0.0; m];
        for j in 0..p {
            let aj = a[j];
            if aj == 0.0 {
                continue;
            }
            for (fi, &v) in f.iter_mut().zip(pre.col_as_slice(j)) {
                *fi += aj * sigma.eval(v);
            }
        }
        for (fi, &k) in f.iter().zip(&kappa) {
            let e = link.eval(k) - fi / sp;
            sum += e * e;
            sum_sq += e * e * e * e;
        }
        done += m;
    }
    let n = n_test as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(Estimate {
        mean,
        stderr: (var / n).sqrt(),
    })
}

/// Order parameters measured on a trained readout.
///
/// With `b = (a − group means of a) / √p`:
/// `τ₀,q = Σ_{j∈q} a_j / √p`, `τ₁,q = Σ_{j∈q} b_j θ_j`,
/// `τ₂ = Σ_{q,q′} C̄_{qq′} g_qᵀ g_{q′}` with `g_q = Σ_{j∈q} b_j w_j`, and
/// `τ₃ = Σ_j b_j² r̄_{q(j)}`. `C̄` (row-major `k × k`) and `r̄` are the
/// `κ`-averages of `c₁ c₁ᵀ` and `r` at the spike vocabulary.
pub fn empirical_tau(
    a: &[f64],
    groups: &[usize],
    theta: &[f64],
    w: &Mat<f64>,
    c1_bar: &[f64],
    r_bar: &[f64],
) -> Result<TauSet> {
    let p = a.len();
    let k = r_bar.len();
    if groups.len() != p || theta.len() != p || w.nrows() != p || c1_bar.len() != k * k {
        return Err(Error::Config("empirical τ: inconsistent shapes".into()));
    }
    let sp = (p as f64).sqrt();
    let mut sizes = vec![0usize; k];
    let mut sums = vec![0.0; k];
    for (&g, &aj) in groups.iter().zip(a) {
        if g >= k {
            return Err(Error::Config(format!(
                "group index {g} out of range for k = {k}"
            )));
        }
        sizes[g] += 1;
        sums[g] += aj;
    }
    let tau0: Vec<f64> = sums.iter().map(|s| s / sp).collect();
    let b: Vec<f64> = groups
        .iter()
        .zip(a)
        .map(|(&g, &aj)| (aj - sums[g] / sizes[g].max(1) as f64) / sp)
        .collect();
    let mut tau1 = vec![0.0; k];
    let mut tau3 = 0.0;
    for j in 0..p {
        tau1[groups[j]] += b[j] * theta[j];
        tau3 += b[j] * b[j] * r_bar[groups[j]];
    }
    let d = w.ncols();
    let mut gq = vec![vec![0.0; d]; k];
    for i in 0..d {
        let col = w.col_as_slice(i);
        for j in 0..p {
            gq[groups[j]][i] += b[j] * col[j];
        }
    }
    let mut tau2 = 0.0;
    for q in 0..k {
        for r in 0..k {
            let dot: f64 = gq[q].iter().zip(&gq[r]).map(|(x, y)| x * y).sum();
            tau2 += c1_bar[q * k + r] * dot;
        }
    }
    Ok(TauSet {
        tau0,
        tau1,
        tau2,
        tau3,
        provenance: TauProvenance::Empirical,
    })
}

/// All `p` eigenvalues of `φ̃ᵀ φ̃ / p`, ascending.
///
/// The smaller of the two Gram matrices is diagonalized and the remaining
/// eigenvalues are exact zeros.
pub fn bulk_spectrum(centered: &Mat<f64>) -> Result<Vec<f64>> {
    let (n, p) = (centered.nrows(), centered.ncols());
    let scale = 1.0 / p as f64;
    let gram = if n < p {
        centered * centered.transpose()
    } else {
        centered.transpose() * centered
    };
    let gram = Mat::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] * scale);
    let mut eig = linalg::symmetric_eigenvalues(gram.as_ref())?;
    if n < p {
        eig.extend(std::iter::repeat_n(0.0, p - n));
    }
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig)
}

/// Eigenvalues of the bulk with the structural zeros removed.
///
/// `φ̃` has rank at most `min(n, p − k)`, so only the top
/// `min(n, p − k)` eigenvalues carry the continuous part.
pub fn nonzero_bulk(eigenvalues: &[f64], n: usize, k: usize) -> Vec<f64> {
    let p = eigenvalues.len();
    let rank = n.min(p.saturating_sub(k));
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted[p - rank..].to_vec()
}

/// `m̂(z) = (1/N) Σ_i 1 / (λ_i − z)`.
pub fn empirical_stieltjes(eigenvalues: &[f64], z: c64) -> c64 {
    let n = eigenvalues.len() as f64;
    eigenvalues
        .iter()
        .map(|&l| c64::new(1.0, 0.0) / (c64::new(l, 0.0) - z))
        .sum::<c64>()
        / n
}

/// Spectral decomposition of `(Φᵉ)ᵀ Φᵉ / p` for resolvent functionals.
#[derive(Clone, Debug)]
pub struct ExtendedResolvent {
    eigenvalues: Vec<f64>,
    vectors: Mat<f64>,
}

/// Weight matrix `A` in `Tr(A G(z))`.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceWeight {
    /// Unit mass on one coordinate, `A = e_i e_iᵀ`.
    Coordinate(usize),
    /// `A = I / dim`.
    NormalizedTrace,
    /// Sparse entries `(i, j, A_ij)`.
    Entries(Vec<(usize, usize, f64)>),
}

impl ExtendedResolvent {
    /// Diagonalizes `(Φᵉ)ᵀ Φᵉ / p` with `p` the number of neurons.
    pub fn new(assembled: &Mat<f64>, p: usize) -> Result<Self> {
        let gram = assembled.transpose() * assembled;
        let scale = 1.0 / p as f64;
        let gram = Mat::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] * scale);
        let eig = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("extended Gram eigendecomposition: {e:?}")))?;
        let eigenvalues = eig.S().column_vector().iter().copied().collect();
        let vectors = eig.U().to_owned();
        Ok(Self {
            eigenvalues,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `G(z)_{ij}`.
    pub fn entry(&self, i: usize, j: usize, z: c64) -> c64 {
        let ri = self.vectors.row(i);
        let rj = self.vectors.row(j);
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(m, &l)| c64::new(ri[m] * rj[m], 0.0) / (c64::new(l, 0.0) - z))
            .sum()
    }

    /// `Tr(A G(z))`.
    pub fn trace(&self, weight: &TraceWeight, z: c64) -> Result<c64> {
        let dim = self.dim();
        match weight {
            TraceWeight::Coordinate(i) => {
                if *i >= dim {
                    return Err(Error::Config(format!("coordinate {i} out of range {dim}")));
                }
                Ok(self.entry(*i, *i, z))
            }
            TraceWeight::NormalizedTrace => Ok(empirical_stieltjes(&self.eigenvalues, z)),
            TraceWeight::Entries(entries) => {
                let mut acc = c64::new(0.0, 0.0);
                for &(i, j, a) in entries {
                    if i >= dim || j >= dim {
                        return Err(Error::Config(format!(
                            "entry ({i}, {j}) out of range {dim}"
                        )));
                    }
                    acc += self.entry(j, i, z) * a;
                }
                Ok(acc)
            }
        }
    }
}

/// Trace diagnostic of the within-layer noise left after removing the spike.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BulkCovarianceReport {
    /// Mean over rows of `‖w_j¹ − u_j v‖²`.
    pub empirical: f64,
    /// `1 + E[σ′_{>1}(ξ)²] (η̃/β)² (d/n₀) E[g(ξ)²]`.
    pub predicted: f64,
    /// `|empirical − predicted| / predicted`.
    pub gap: f64,
}

/// Compares the row covariance of `W¹ − u vᵀ` against its prediction.
///
/// Here `v = X₀ᵀ y₀ / (c₁* n₀)` and `u_j = η c₁ c₁* a⁰_j / √p`. Rows of `W⁰`
/// have unit norm, so the trace per row is one plus the contribution of the
/// higher-order Hermite part of `σ′`. Requires an odd activation and a
/// uniform second layer.
pub fn bulk_covariance_diagnostic(
    w1: &Mat<f64>,
    a0: &[f64],
    x0: &Mat<f64>,
    y0: &[f64],
    eta_tilde: f64,
    sigma: Pointwise,
    moments: &DiagnosticMoments,
) -> Result<BulkCovarianceReport> {
    if !sigma.is_odd() {
        return Err(Error::Config(format!(
            "the trace diagnostic needs an odd activation, got {sigma}"
        )));
    }
    let p = w1.nrows();
    let d = w1.ncols();
    let sp = (p as f64).sqrt();
    if a0.iter().any(|a| (a * sp - 1.0).abs() > 1e-12) {
        return Err(Error::Config(
            "the trace diagnostic needs a uniform second layer".into(),
        ));
    }
    let n0 = y0.len();
    let beta = p as f64 / d as f64;
    let v: Vec<f64> = super::data::mat_t_vec(x0, y0)
        .iter()
        .map(|x| x / (moments.c1_star * n0 as f64))
        .collect();
    let eta = eta_tilde * d as f64;
    let u: Vec<f64> = a0
        .iter()
        .map(|a| eta * moments.c1 * moments.c1_star * a / sp)
        .collect();
    let mut total = 0.0;
    for i in 0..d {
        let col = w1.col_as_slice(i);
        for j in 0..p {
            let b = col[j] - u[j] * v[i];
            total += b * b;
        }
    }
    let empirical = total / p as f64;
    let predicted = 1.0
        + moments.derivative_tail
            * (eta_tilde / beta).powi(2)
            * (d as f64 / n0 as f64)
            * moments.link_second_moment;
    Ok(BulkCovarianceReport {
        empirical,
        predicted,
        gap: (empirical - predicted).abs() / predicted,
    })
}

/// Gaussian moments entering [`bulk_covariance_diagnostic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticMoments {
    /// `E[σ(ξ) ξ]`.
    pub c1: f64,
    /// `E[g(ξ) ξ]`.
    pub c1_star: f64,
    /// `E[σ′(ξ)²] − c₁² − 2c₂²`: the mass of `σ′` beyond its first two
    /// Hermite components.
    pub derivative_tail: f64,
    /// `E[g(ξ)²]`.
    pub link_second_moment: f64,
}

impl DiagnosticMoments {
    pub fn compute(
        sigma: Pointwise,
        link: Pointwise,
        integrator: &crate::quadrature::GaussianIntegrator,
    ) -> Self {
        let c1 = integrator.expect_shifted(sigma, 0.0, |z| z);
        let c2 =
            integrator.expect_shifted(sigma, 0.0, |z| crate::quadrature::hermite_polynomial(2, z));
        let c1_star = integrator.expect_shifted(link, 0.0, |z| z);
        let breaks: Vec<f64> = sigma.breakpoints().to_vec();
        let dd = integrator.expect(&breaks, |z| sigma.derivative(z).powi(2));
        let link_breaks: Vec<f64> = link.breakpoints().to_vec();
        let g2 = integrator.expect(&link_breaks, |z| link.eval(z).powi(2));
        Self {
            c1,
            c1_star,
            derivative_tail: (dd - c1 * c1 - 2.0 * c2 * c2).max(0.0),
            link_second_moment: g2,
        }
    }
}
