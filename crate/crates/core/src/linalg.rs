//! Dense linear-algebra helpers shared by the theory engine and the simulator.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Inverse of a small square complex matrix by LU with partial pivoting.
pub fn inverse(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    check_square(a.nrows(), a.ncols())?;
    let inv = a.partial_piv_lu().inverse();
    if inv
        .col_iter()
        .all(|c| c.iter().all(|x| x.re.is_finite() && x.im.is_finite()))
    {
        Ok(inv)
    } else {
        Err(Error::Singular(format!(
            "{0}×{0} complex matrix",
            a.nrows()
        )))
    }
}

/// Inverse of a square real matrix by LU with partial pivoting.
pub fn inverse_real(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_square(a.nrows(), a.ncols())?;
    let inv = a.partial_piv_lu().inverse();
    if inv.col_iter().all(|c| c.iter().all(|x| x.is_finite())) {
        Ok(inv)
    } else {
        Err(Error::Singular(format!("{0}×{0} real matrix", a.nrows())))
    }
}

/// Moore–Penrose pseudo-inverse of a real symmetric matrix.
///
/// Eigenvalues below `rcond · max|λ|` are treated as zero.
pub fn pinv_symmetric(a: MatRef<'_, f64>, rcond: f64) -> Result<Mat<f64>> {
    check_square(a.nrows(), a.ncols())?;
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigendecomposition: {e:?}")))?;
    let u = eig.U();
    let s = eig.S().column_vector();
    let top = s.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cut = rcond * top;
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let lam = s[k];
        if lam.abs() <= cut || lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let ui = u[(i, k)] / lam;
            for j in 0..n {
                out[(i, j)] += ui * u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Eigenvalues (ascending) of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_square(a.nrows(), a.ncols())?;
    let mut vals = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigenvalues: {e:?}")))?;
    vals.sort_by(|x, y| x.total_cmp(y));
    Ok(vals)
}

/// Spectral norm of `a` by power iteration on `aᵀa`.
///
/// Returns the estimate and the number of iterations used; fails when the
/// relative change does not drop below `tol` within `max_iter` iterations.
pub fn operator_norm(a: MatRef<'_, f64>, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return Ok((0.0, 0));
    }
    // A fixed, dense starting vector avoids accidental orthogonality to the top
    // singular vector without consuming randomness.
    let mut x = Mat::from_fn(n, 1, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    normalize(&mut x);
    let mut sigma = 0.0;
    for it in 1..=max_iter {
        let y = a * &x;
        let norm_y = y.norm_l2();
        if norm_y == 0.0 {
            return Ok((0.0, it));
        }
        let mut z = a.transpose() * &y;
        normalize(&mut z);
        x = z;
        if (norm_y - sigma).abs() <= tol * norm_y.max(1e-300) {
            return Ok((norm_y, it));
        }
        sigma = norm_y;
    }
    Err(Error::Linalg(format!(
        "power iteration did not converge in {max_iter} iterations (estimate {sigma:.6e})"
    )))
}

fn normalize(x: &mut Mat<f64>) {
    let n = x.norm_l2();
    if n > 0.0 {
        for v in x.col_mut(0).iter_mut() {
            *v /= n;
        }
    }
}

fn check_square(r: usize, c: usize) -> Result<()> {
    if r == c {
        Ok(())
    } else {
        Err(Error::Linalg(format!(
            "expected a square matrix, got {r}×{c}"
        )))
    }
}

/// Complex scalar from real and imaginary parts.
pub fn cplx(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}
