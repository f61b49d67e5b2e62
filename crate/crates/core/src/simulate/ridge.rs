use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

use super::data::{mat_t_vec, mat_vec};

/// Which normal equations a ridge solve used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RidgePath {
    /// `(ΦᵀΦ/p + λI_p) a = Φᵀy/√p`.
    Primal,
    /// `a = Φᵀ (ΦΦᵀ/p + λI_n)⁻¹ y / √p`.
    Dual,
}

/// Minimizer of `Σ_μ (y_μ − φ_μᵀ a / √p)² + λ ‖a‖²`, through the smaller
/// of the two equivalent normal equations.
pub fn ridge_fit(phi: &Mat<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let path = if phi.ncols() <= phi.nrows() {
        RidgePath::Primal
    } else {
        RidgePath::Dual
    };
    ridge_fit_with(phi, y, lambda, path)
}

/// Ridge solve through a chosen path.
pub fn ridge_fit_with(phi: &Mat<f64>, y: &[f64], lambda: f64, path: RidgePath) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "ridge penalty must be positive, got {lambda}"
        )));
    }
    if y.len() != phi.nrows() {
        return Err(Error::Config(
            "ridge: label count differs from feature rows".into(),
        ));
    }
    let p = phi.ncols() as f64;
    let sp = p.sqrt();
    match path {
        RidgePath::Primal => {
            let mut gram = phi.transpose() * phi;
            scale_add_identity(&mut gram, 1.0 / p, lambda);
            let rhs: Vec<f64> = mat_t_vec(phi, y).iter().map(|v| v / sp).collect();
            spd_solve(&gram, &rhs)
        }
        RidgePath::Dual => {
            let mut gram = phi * phi.transpose();
            scale_add_identity(&mut gram, 1.0 / p, lambda);
            let alpha = spd_solve(&gram, y)?;
            Ok(mat_t_vec(phi, &alpha).iter().map(|v| v / sp).collect())
        }
    }
}

/// Gradient of the ridge objective at `a`.
pub fn ridge_gradient(phi: &Mat<f64>, y: &[f64], lambda: f64, a: &[f64]) -> Vec<f64> {
    let sp = (phi.ncols() as f64).sqrt();
    let pred = mat_vec(phi, a);
    let resid: Vec<f64> = pred.iter().zip(y).map(|(f, y)| y - f / sp).collect();
    mat_t_vec(phi, &resid)
        .iter()
        .zip(a)
        .map(|(g, a)| -2.0 * g / sp + 2.0 * lambda * a)
        .collect()
}

fn scale_add_identity(m: &mut Mat<f64>, scale: f64, shift: f64) {
    let n = m.nrows();
    for j in 0..n {
        for v in m.col_as_slice_mut(j) {
            *v *= scale;
        }
        m[(j, j)] += shift;
    }
}

fn spd_solve(m: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let llt = m.llt(Side::Lower).map_err(|e| {
        let diag_min = (0..m.nrows()).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
        Error::Linalg(format!(
            "ridge normal equations are not positive definite ({e:?}); smallest diagonal entry {diag_min:.3e}"
        ))
    })?;
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    let out = x.col_as_slice(0).to_vec();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Linalg(
            "ridge solve produced non-finite coefficients".into(),
        ))
    }
}
