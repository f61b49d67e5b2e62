use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::activation::Pointwise;
use crate::error::{Error, Result};
use crate::linalg;

/// Gaussian inputs with single-index labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// `n × d`, i.i.d. standard normal entries.
    pub x: Mat<f64>,
    /// `y_μ = g(κ_μ)`.
    pub y: Vec<f64>,
    /// `κ_μ = x_μᵀ w*`.
    pub kappa: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `n × d` matrix of standard normal entries, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Mat<f64> {
    let mut m = Mat::zeros(n, d);
    for j in 0..d {
        for v in m.col_as_slice_mut(j) {
            *v = rng.sample(StandardNormal);
        }
    }
    m
}

/// Uniform unit vector in `ℝ^d`.
pub fn sample_target<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= norm);
    w
}

/// `p × d` matrix with rows uniform on the unit sphere.
pub fn sample_weights<R: Rng + ?Sized>(p: usize, d: usize, rng: &mut R) -> Mat<f64> {
    let mut w = gaussian_matrix(p, d, rng);
    for i in 0..p {
        let norm = (0..d).map(|j| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt();
        for j in 0..d {
            w[(i, j)] /= norm;
        }
    }
    w
}

/// Draws `n` inputs and labels `y = g(xᵀ w*)`.
pub fn sample_data<R: Rng + ?Sized>(
    n: usize,
    w_star: &[f64],
    link: Pointwise,
    rng: &mut R,
) -> Result<Dataset> {
    let norm = w_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Config(format!(
            "target must have unit norm, got {norm}"
        )));
    }
    let d = w_star.len();
    let x = gaussian_matrix(n, d, rng);
    let kappa = mat_vec(&x, w_star);
    let y = kappa.iter().map(|&k| link.eval(k)).collect();
    Ok(Dataset { x, y, kappa })
}

/// `m v` for a dense matrix and a slice.
pub fn mat_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.col_as_slice(j)) {
            *o += mij * vj;
        }
    }
    out
}

/// `mᵀ v` for a dense matrix and a slice.
pub fn mat_t_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| m.col_as_slice(j).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Applies `σ` entrywise.
pub fn apply(m: &Mat<f64>, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        for v in out.col_as_slice_mut(j) {
            *v = f(*v);
        }
    }
    out
}

/// One full-batch gradient step on the first layer of
/// `f(x) = Σ_j a_j σ(w_jᵀ x) / √p` under the square loss:
/// `w_j¹ = w_j⁰ − η g_j` with
/// `g_j = (1 / (n₀ √p)) Σ_μ (f(x_μ) − y_μ) a_j σ′(w_jᵀ x_μ) x_μ`.
pub fn gradient_step(
    w0: &Mat<f64>,
    a0: &[f64],
    batch: &Dataset,
    eta: f64,
    sigma: Pointwise,
) -> Result<Mat<f64>> {
    let (p, d) = (w0.nrows(), w0.ncols());
    if a0.len() != p || batch.x.ncols() != d {
        return Err(Error::Config("gradient step: inconsistent shapes".into()));
    }
    let n0 = batch.len();
    let sqrt_p = (p as f64).sqrt();
    let pre = &batch.x * w0.transpose();
    let act = apply(&pre, |v| sigma.eval(v));
    let f: Vec<f64> = mat_vec(&act, a0).iter().map(|v| v / sqrt_p).collect();
    let resid: Vec<f64> = f.iter().zip(&batch.y).map(|(f, y)| f - y).collect();
    // D[μ, j] = (f_μ − y_μ) σ′(w_jᵀ x_μ)
    let mut dmat = apply(&pre, |v| sigma.derivative(v));
    for j in 0..p {
        for (v, r) in dmat.col_as_slice_mut(j).iter_mut().zip(&resid) {
            *v *= r;
        }
    }
    let grad = dmat.transpose() * &batch.x;
    let scale = eta / (n0 as f64 * sqrt_p);
    Ok(Mat::from_fn(p, d, |j, i| {
        w0[(j, i)] - scale * a0[j] * grad[(j, i)]
    }))
}

/// Spike coefficients `u_j = η c₁ c₁* a⁰_j / √p`.
pub fn spike_vector(a0: &[f64], eta: f64, c1: f64, c1_star: f64) -> Vec<f64> {
    let sqrt_p = (a0.len() as f64).sqrt();
    a0.iter().map(|a| eta * c1 * c1_star * a / sqrt_p).collect()
}

/// `W̃ = W⁰ + u w*ᵀ`.
pub fn spiked_approximation(w0: &Mat<f64>, u: &[f64], w_star: &[f64]) -> Mat<f64> {
    Mat::from_fn(w0.nrows(), w0.ncols(), |j, i| w0[(j, i)] + u[j] * w_star[i])
}

/// Operator norm `‖W¹ − W̃‖₂` by power iteration (tolerance 1e-8, 500 iterations).
pub fn spike_deviation(w1: &Mat<f64>, w_tilde: &Mat<f64>) -> Result<f64> {
    if w1.nrows() != w_tilde.nrows() || w1.ncols() != w_tilde.ncols() {
        return Err(Error::Config("spike deviation: shapes differ".into()));
    }
    let diff = w1 - w_tilde;
    Ok(linalg::operator_norm(diff.as_ref(), 1e-8, 500)?.0)
}

/// `Φ = σ(X Wᵀ)`, `n × p`.
pub fn features(w: &Mat<f64>, x: &Mat<f64>, sigma: Pointwise) -> Mat<f64> {
    let pre = x * w.transpose();
    apply(&pre, |v| sigma.eval(v))
}
