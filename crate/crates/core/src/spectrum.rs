//! Bulk spectral density from the Stieltjes transform of the deterministic
//! equivalent, and comparisons against empirical eigenvalues.

use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::FixedPointCache;
use crate::detequiv::{solve_fixed_point, FixedPointState, SolverOptions, TheoryProblem};
use crate::error::{Error, Result};

/// Default `ε` schedule for the inversion `ρ(λ) ≈ Im m(λ + iε) / π`.
pub const DEFAULT_EPS_SCHEDULE: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Bulk density on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    /// Density of the continuous part, clipped at zero.
    pub density: Vec<f64>,
    /// Smallest `ε` used at each point.
    pub eps_used: Vec<f64>,
    /// Whether every solve at the point converged.
    pub converged: Vec<bool>,
    pub eps_schedule: Vec<f64>,
    /// Mass of the atom at the origin, `(1 − α/β)₊`.
    pub atom: f64,
    /// Trapezoidal mass of the continuous part plus the atom.
    pub mass: f64,
}

/// Stieltjes transform `m(z)` of the bulk and the state it came from.
pub fn stieltjes(
    problem: &TheoryProblem,
    z: c64,
    warm: Option<&FixedPointState>,
    opts: &SolverOptions,
) -> Result<(c64, FixedPointState)> {
    let state = solve_fixed_point(problem, z, [0.0, 0.0], warm, opts)?;
    Ok((problem.stieltjes(&state), state))
}

/// Mass of the rank-deficiency atom at zero: at least `p − n` of the `p`
/// eigenvalues vanish when `n < p`.
pub fn atom_mass(problem: &TheoryProblem) -> f64 {
    (1.0 - problem.alpha() / problem.beta()).max(0.0)
}

/// Evenly spaced grid of `points` values from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Parses a grid specification `"min:max:points"`.
pub fn parse_grid(spec: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("grid must look like min:max:points, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || n < 2 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

/// Density on `points` grid values in `[lo, hi]`.
///
/// At each `λ` the solve descends the `ε` schedule, each step warm-started
/// from the previous one, and the first step is warm-started from the
/// neighbouring grid point. The atom's Lorentzian `a ε / (π(λ² + ε²))` is
/// removed analytically before a linear (Richardson) extrapolation to
/// `ε = 0` from the last two values. The grid is split into `jobs`
/// contiguous ladders evaluated in parallel; output order is the grid order.
pub fn density_grid(
    problem: &TheoryProblem,
    lo: f64,
    hi: f64,
    points: usize,
    eps_schedule: &[f64],
    opts: &SolverOptions,
    jobs: usize,
) -> Result<DensityCurve> {
    density_grid_cached(problem, lo, hi, points, eps_schedule, opts, jobs, None)
}

/// As [`density_grid`], reusing and recording converged states in `cache`.
#[allow(clippy::too_many_arguments)]
pub fn density_grid_cached(
    problem: &TheoryProblem,
    lo: f64,
    hi: f64,
    points: usize,
    eps_schedule: &[f64],
    opts: &SolverOptions,
    jobs: usize,
    cache: Option<&FixedPointCache>,
) -> Result<DensityCurve> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || points < 2 {
        return Err(Error::Config(format!(
            "density grid needs lo < hi and at least two points, got [{lo}, {hi}] with {points}"
        )));
    }
    validate_schedule(eps_schedule)?;
    let grid = linear_grid(lo, hi, points);
    let atom = atom_mass(problem);
    let chunks = jobs.max(1).min(points);
    let chunk_len = points.div_ceil(chunks);
    let pieces: Vec<Vec<(f64, f64, bool)>> = grid
        .par_chunks(chunk_len)
        .map(|chunk| ladder_density(problem, chunk, eps_schedule, atom, opts, cache))
        .collect();
    let mut density = Vec::with_capacity(points);
    let mut eps_used = Vec::with_capacity(points);
    let mut converged = Vec::with_capacity(points);
    for (d, e, c) in pieces.into_iter().flatten() {
        density.push(d.max(0.0));
        eps_used.push(e);
        converged.push(c);
    }
    let mass = trapezoid(&grid, &density) + atom;
    Ok(DensityCurve {
        grid,
        density,
        eps_used,
        converged,
        eps_schedule: eps_schedule.to_vec(),
        atom,
        mass,
    })
}

fn validate_schedule(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::Config("ε schedule must not be empty".into()));
    }
    if eps.iter().any(|&e| !(e >= 1e-4 && e.is_finite())) {
        return Err(Error::Config(
            "ε schedule entries must be at least 1e-4".into(),
        ));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(
            "ε schedule must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn ladder_density(
    problem: &TheoryProblem,
    lambdas: &[f64],
    eps: &[f64],
    atom: f64,
    opts: &SolverOptions,
    cache: Option<&FixedPointCache>,
) -> Vec<(f64, f64, bool)> {
    let mut warm: Option<FixedPointState> = None;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let mut local = warm.clone();
        let mut values = Vec::with_capacity(eps.len());
        let mut ok = true;
        for &e in eps {
            let z = c64::new(lam, e);
            let solved = match cache.and_then(|c| c.get(z, [0.0, 0.0])) {
                Some(s) => Ok((problem.stieltjes(&s), s)),
                None => stieltjes(problem, z, local.as_ref(), opts).inspect(|(_, s)| {
                    if let Some(c) = cache {
                        c.insert(s);
                    }
                }),
            };
            match solved {
                Ok((m, s)) => {
                    let lorentz = atom * e / (std::f64::consts::PI * (lam * lam + e * e));
                    values.push(m.im / std::f64::consts::PI - lorentz);
                    local = Some(s);
                }
                Err(_) => {
                    ok = false;
                    local = None;
                    values.push(f64::NAN);
                }
            }
        }
        let n = eps.len();
        let d = if n >= 2 {
            let (ea, eb) = (eps[n - 2], eps[n - 1]);
            let (ra, rb) = (values[n - 2], values[n - 1]);
            (ea * rb - eb * ra) / (ea - eb)
        } else {
            values[0]
        };
        let ok = ok && d.is_finite();
        out.push((if ok { d } else { 0.0 }, eps[n - 1], ok));
        // Restart the next point from the first rung of this one.
        warm = if ok { local } else { None };
    }
    out
}

/// Trapezoidal rule on a sorted grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Maximal intervals of the grid on which the density exceeds `threshold`.
pub fn support_edges(curve: &DensityCurve, threshold: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for (&x, &d) in curve.grid.iter().zip(&curve.density) {
        if d > threshold {
            if start.is_none() {
                start = Some(x);
            }
            last = x;
        } else if let Some(s) = start.take() {
            out.push((s, last));
        }
    }
    if let Some(s) = start {
        out.push((s, last));
    }
    out
}

/// Total length of the intervals returned by [`support_edges`].
pub fn support_width(curve: &DensityCurve, threshold: f64) -> f64 {
    support_edges(curve, threshold)
        .iter()
        .map(|(a, b)| b - a)
        .sum()
}

/// Cumulative distribution of the continuous part, normalized to one.
pub fn bulk_cdf(curve: &DensityCurve) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(curve.grid.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for i in 1..curve.grid.len() {
        acc +=
            0.5 * (curve.grid[i] - curve.grid[i - 1]) * (curve.density[i] + curve.density[i - 1]);
        cdf.push(acc);
    }
    if acc > 0.0 {
        for c in &mut cdf {
            *c /= acc;
        }
    }
    cdf
}

/// Kolmogorov–Smirnov distance between the continuous part of `curve` and
/// the empirical distribution of `eigenvalues` (structural zeros removed by
/// the caller).
pub fn ks_distance(curve: &DensityCurve, eigenvalues: &[f64]) -> f64 {
    if eigenvalues.is_empty() {
        return 1.0;
    }
    let cdf = bulk_cdf(curve);
    let mut eigs = eigenvalues.to_vec();
    eigs.sort_by(|a, b| a.total_cmp(b));
    let n = eigs.len() as f64;
    let theory = |x: f64| -> f64 {
        let g = &curve.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let i = g.partition_point(|&v| v <= x) - 1;
        let t = (x - g[i]) / (g[i + 1] - g[i]);
        cdf[i] + t * (cdf[i + 1] - cdf[i])
    };
    eigs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = theory(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
