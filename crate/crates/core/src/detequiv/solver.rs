use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg;

use super::problem::TheoryProblem;
use super::state::FixedPointState;

/// Tuning of [`solve_fixed_point`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm residual at which a state is accepted.
    pub tol: f64,
    /// Initial damping `γ` in `x ← (1 − γ) x + γ F(x)`.
    pub damping: f64,
    /// Damped iterations per rung before giving up.
    pub max_iter: usize,
    /// Damped iterations run before the Newton polish.
    pub warmup_iter: usize,
    /// Newton iterations per rung.
    pub newton_iter: usize,
    /// Top of the continuation ladder in `Im z`.
    pub ladder_top: f64,
    /// Geometric factor between rungs.
    pub ladder_factor: f64,
    /// Smallest imaginary part visited by the ladder before the final solve.
    pub ladder_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            damping: 0.5,
            max_iter: 10_000,
            warmup_iter: 60,
            newton_iter: 40,
            ladder_top: 10.0,
            ladder_factor: 0.7,
            ladder_floor: 1e-3,
        }
    }
}

/// Solves the fixed point at `(z, ρ)`.
///
/// With a warm start the solve goes directly to `z`. On the negative real
/// axis a cold start is tried next, which keeps every iterate real. If both
/// fail, it walks down the ladder `Im z = T, 0.7T, …` from `T = 10`,
/// warm-starting every rung. Points below the real axis are obtained by
/// conjugation.
pub fn solve_fixed_point(
    problem: &TheoryProblem,
    z: c64,
    rho: [f64; 2],
    warm: Option<&FixedPointState>,
    opts: &SolverOptions,
) -> Result<FixedPointState> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Config(format!(
            "spectral point must be finite, got {z}"
        )));
    }
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::Config(format!(
            "spectral point {z} lies on the non-negative real axis"
        )));
    }
    if z.im < 0.0 {
        let warm_conj = warm.map(FixedPointState::conj);
        return solve_fixed_point(problem, z.conj(), rho, warm_conj.as_ref(), opts)
            .map(|s| s.conj());
    }
    if let Some(w) = warm {
        if w.k() == problem.k() {
            let mut start = w.clone();
            start.z = z;
            start.rho = rho;
            if let Ok(s) = solve_rung(problem, start, opts) {
                return Ok(s);
            }
        }
    }
    if z.im == 0.0 {
        if let Ok(s) = solve_rung(problem, problem.cold_start(z, rho), opts) {
            return Ok(s);
        }
    }
    solve_with_ladder(problem, z, rho, opts)
}

fn solve_with_ladder(
    problem: &TheoryProblem,
    z: c64,
    rho: [f64; 2],
    opts: &SolverOptions,
) -> Result<FixedPointState> {
    let stop = (z.im * 1.0001).max(opts.ladder_floor);
    let mut t = opts.ladder_top;
    let mut current: Option<FixedPointState> = None;
    let mut total = 0;
    while t > stop {
        let zt = c64::new(z.re, t);
        let start = match &current {
            Some(s) => {
                let mut s = s.clone();
                s.z = zt;
                s.rho = rho;
                s
            }
            None => problem.cold_start(zt, rho),
        };
        let s = solve_rung(problem, start, opts)?;
        total += s.iterations;
        current = Some(s);
        t *= opts.ladder_factor;
    }
    let start = match current {
        Some(mut s) => {
            s.z = z;
            s.rho = rho;
            s
        }
        None => problem.cold_start(z, rho),
    };
    let mut s = solve_rung(problem, start, opts)?;
    s.iterations += total;
    Ok(s)
}

/// Damped warm-up, Newton polish, and a damped fallback if Newton fails.
fn solve_rung(
    problem: &TheoryProblem,
    start: FixedPointState,
    opts: &SolverOptions,
) -> Result<FixedPointState> {
    let mut iterations = 0;
    let mut x = start;
    x.iterations = 0;
    let mut gamma = opts.damping;
    let mut last = f64::INFINITY;
    for _ in 0..opts.warmup_iter {
        let fx = problem.map(&x)?;
        let res = fx.distance(&x);
        iterations += 1;
        if res < opts.tol {
            return Ok(finish(fx, res, iterations));
        }
        if res > last {
            gamma = (gamma * 0.5).max(1e-3);
        }
        last = res;
        x = blend(&x, &fx, gamma);
    }
    if let Some((s, used)) = newton(problem, &x, opts) {
        return Ok(finish(s.0, s.1, iterations + used));
    }
    for _ in 0..opts.max_iter {
        let fx = problem.map(&x)?;
        let res = fx.distance(&x);
        iterations += 1;
        if res < opts.tol {
            let s = finish(fx, res, iterations);
            if s.satisfies_sign_conditions(1e-8) {
                return Ok(s);
            }
            break;
        }
        if res > last {
            gamma = (gamma * 0.5).max(1e-3);
        }
        last = res;
        x = blend(&x, &fx, gamma);
    }
    Err(Error::NotConverged {
        re: x.z.re,
        im: x.z.im,
        residual: last,
        iterations,
    })
}

fn finish(mut s: FixedPointState, residual: f64, iterations: usize) -> FixedPointState {
    s.residual = residual;
    s.iterations = iterations;
    s
}

fn blend(x: &FixedPointState, fx: &FixedPointState, gamma: f64) -> FixedPointState {
    let a = x.pack();
    let b = fx.pack();
    let mixed: Vec<c64> = a
        .iter()
        .zip(&b)
        .map(|(u, v)| u * (1.0 - gamma) + v * gamma)
        .collect();
    x.unpack(&mixed)
}

type Accepted = (FixedPointState, f64);

/// Newton's method on `F(x) − x` with a finite-difference Jacobian.
///
/// The map is holomorphic in its complex arguments, so one complex
/// difference per coordinate gives the full Jacobian. Returns `None` when the
/// iteration diverges or lands outside the admissible half-plane.
fn newton(
    problem: &TheoryProblem,
    start: &FixedPointState,
    opts: &SolverOptions,
) -> Option<(Accepted, usize)> {
    let mut x = start.pack();
    let n = x.len();
    let g = |x: &[c64]| -> Option<Vec<c64>> {
        let s = start.unpack(x);
        let fx = problem.map(&s).ok()?.pack();
        Some(fx.iter().zip(x).map(|(a, b)| a - b).collect())
    };
    let mut evals = 0;
    let mut gx = g(&x)?;
    let initial = sup(&gx);
    for _ in 0..opts.newton_iter {
        let res = sup(&gx);
        if !res.is_finite() || res > 1e3 * initial.max(1e-12) {
            return None;
        }
        if res < opts.tol {
            let s = start.unpack(&x);
            let fx = problem.map(&s).ok()?;
            let r = fx.distance(&s);
            if r < opts.tol && fx.satisfies_sign_conditions(1e-8) {
                return Some(((fx, r), evals + 1));
            }
            return None;
        }
        let mut jac = Mat::<c64>::zeros(n, n);
        for i in 0..n {
            let h = 1e-7 * x[i].norm().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let gp = g(&xp)?;
            evals += 1;
            for r in 0..n {
                jac[(r, i)] = (gp[r] - gx[r]) / h;
            }
        }
        let inv = linalg::inverse(jac.as_ref()).ok()?;
        for r in 0..n {
            let mut step = c64::new(0.0, 0.0);
            for c in 0..n {
                step += inv[(r, c)] * gx[c];
            }
            x[r] -= step;
        }
        gx = g(&x)?;
        evals += 1;
    }
    None
}

fn sup(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
