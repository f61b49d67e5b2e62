//! Asymptotic generalization error of the ridge readout.
//!
//! At `z = −λ` the label/mean corner of the equivalent resolvent reduces to
//! the Schur block `C⁻¹`. The readout's overlaps `τ₀` (with the group means)
//! and `τ₁` (with the spike direction) follow from it, and the two variance
//! terms `τ₂`, `τ₃` are derivatives of `C⁻¹` along the perturbations `ρ₁`,
//! `ρ₂` of the fixed point.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::detequiv::{solve_fixed_point, Blocks, FixedPointState, SolverOptions, TheoryProblem};
use crate::error::{Error, Result};
use crate::linalg;

/// Where a [`TauSet`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauProvenance {
    Asymptotic,
    Empirical,
}

/// Scalar order parameters entering the error formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSet {
    pub tau0: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: f64,
    pub tau3: f64,
    pub provenance: TauProvenance,
}

impl TauSet {
    /// All-zero order parameters (the null predictor).
    pub fn zeros(k: usize, provenance: TauProvenance) -> Self {
        Self {
            tau0: vec![0.0; k],
            tau1: vec![0.0; k],
            tau2: 0.0,
            tau3: 0.0,
            provenance,
        }
    }

    pub fn k(&self) -> usize {
        self.tau0.len()
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.tau0.iter().chain(&self.tau1).all(|x| x.is_finite())
            && self.tau2.is_finite()
            && self.tau3.is_finite()
    }
}

/// The `(k+1) × (k+1)` Schur block at `z = −λ`; index 0 is the label row.
#[derive(Clone, Debug)]
pub struct SchurBlock {
    pub cinv: Mat<f64>,
}

impl SchurBlock {
    pub fn k(&self) -> usize {
        self.cinv.nrows() - 1
    }

    /// Largest absolute entry of `C⁻¹ − (C⁻¹)ᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.cinv.nrows();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                m = m.max((self.cinv[(i, j)] - self.cinv[(j, i)]).abs());
            }
        }
        m
    }
}

/// Options for [`asymptotic_generror`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenErrorOptions {
    /// Central-difference step in `ρ`.
    pub rho_step: f64,
    /// Relative eigenvalue cut-off of the pseudo-inverse used for `τ₀`.
    pub pinv_rcond: f64,
    /// When set, adds the `O(1/p)` fluctuation of the empirical group means at
    /// this width (see [`finite_width_variance`]).
    pub finite_width: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for GenErrorOptions {
    fn default() -> Self {
        Self {
            rho_step: 1e-4,
            pinv_rcond: 1e-9,
            finite_width: None,
            solver: SolverOptions::default(),
        }
    }
}

/// Full output of one asymptotic evaluation.
#[derive(Clone, Debug)]
pub struct GenErrorReport {
    pub error: f64,
    pub tau: TauSet,
    pub schur: SchurBlock,
    pub state: FixedPointState,
}

/// Solves the fixed point at `z = −λ`, perturbed by `ρ`.
pub fn solve_at_ridge(
    problem: &TheoryProblem,
    lambda: f64,
    rho: [f64; 2],
    warm: Option<&FixedPointState>,
    solver: &SolverOptions,
) -> Result<FixedPointState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "ridge penalty must be positive, got {lambda}"
        )));
    }
    solve_fixed_point(problem, c64::new(-lambda, 0.0), rho, warm, solver)
}

/// `C⁻¹` at a converged state `z = −λ`.
pub fn schur_c_inverse(
    problem: &TheoryProblem,
    state: &FixedPointState,
) -> Result<(SchurBlock, Blocks)> {
    let blocks = Blocks::new(problem, state)?;
    let c = blocks.c_inverse();
    let cinv = Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].re);
    Ok((SchurBlock { cinv }, blocks))
}

/// `τ₀ = (C⁻¹₁₁ − λI)⁺ C⁻¹₁₀`: the readout mass on each group, as the
/// regression of the label row on the mean rows of `C⁻¹ − λI`.
pub fn tau0(schur: &SchurBlock, lambda: f64, rcond: f64) -> Result<Vec<f64>> {
    let k = schur.k();
    let n11 = Mat::from_fn(k, k, |i, j| {
        schur.cinv[(i + 1, j + 1)] - if i == j { lambda } else { 0.0 }
    });
    let pinv = linalg::pinv_symmetric(n11.as_ref(), rcond)?;
    Ok((0..k)
        .map(|i| (0..k).map(|j| pinv[(i, j)] * schur.cinv[(j + 1, 0)]).sum())
        .collect())
}

/// Contraction vector `(1, −τ₀)`.
pub fn contraction(tau0: &[f64]) -> Vec<f64> {
    std::iter::once(1.0)
        .chain(tau0.iter().map(|t| -t))
        .collect()
}

/// `τ₁ = (ψ⁻¹ + S)⁻¹ Ã₂₁ (1, −τ₀)`.
pub fn tau1(blocks: &Blocks, tau0: &[f64]) -> Vec<f64> {
    let k = blocks.k();
    let v = contraction(tau0);
    let av: Vec<c64> = (0..k)
        .map(|q| (0..=k).map(|a| blocks.a21[(q, a)] * v[a]).sum())
        .collect();
    (0..k)
        .map(|q| (0..k).map(|r| blocks.inner[(q, r)] * av[r]).sum::<c64>().re)
        .collect()
}

/// `(τ₂, τ₃)`: central differences of `vᵀ C⁻¹ v` in `ρ₁` and `ρ₂`.
pub fn tau2_tau3(
    problem: &TheoryProblem,
    lambda: f64,
    base: &FixedPointState,
    tau0: &[f64],
    step: f64,
    solver: &SolverOptions,
) -> Result<(f64, f64)> {
    tau2_tau3_with(problem, lambda, base, tau0, step, solver, None)
}

fn tau2_tau3_with(
    problem: &TheoryProblem,
    lambda: f64,
    base: &FixedPointState,
    tau0: &[f64],
    step: f64,
    solver: &SolverOptions,
    finite_width: Option<usize>,
) -> Result<(f64, f64)> {
    if !(1e-7..=1e-2).contains(&step) {
        return Err(Error::Config(format!("ρ step {step} outside [1e-7, 1e-2]")));
    }
    let v = contraction(tau0);
    let quad = |rho: [f64; 2]| -> Result<f64> {
        let s = solve_at_ridge(problem, lambda, rho, Some(base), solver)?;
        let (schur, _) = corrected_schur(problem, &s, finite_width)?;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += v[i] * schur.cinv[(i, j)] * v[j];
            }
        }
        Ok(acc)
    };
    let d1 = (quad([step, 0.0])? - quad([-step, 0.0])?) / (2.0 * step);
    let d2 = (quad([0.0, step])? - quad([0.0, -step])?) / (2.0 * step);
    Ok((d1, d2))
}

/// `Λ_κ = (g − c₀·τ₀ − κ c₁·τ₁)² − (c₁·τ₁)² + τ₂ + τ₃`.
pub fn lambda_kappa(tau: &TauSet, kappa: f64, g: f64, c0: &[f64], c1: &[f64]) -> f64 {
    let mean: f64 = c0.iter().zip(&tau.tau0).map(|(c, t)| c * t).sum();
    let lin: f64 = c1.iter().zip(&tau.tau1).map(|(c, t)| c * t).sum();
    let bias = g - mean - kappa * lin;
    bias * bias - lin * lin + tau.tau2 + tau.tau3
}

/// `E_κ[Λ_κ]` on the problem's outer quadrature.
pub fn expected_lambda(problem: &TheoryProblem, tau: &TauSet) -> f64 {
    let table = problem.table();
    let link = problem.link_values();
    table
        .weights()
        .iter()
        .zip(table.nodes())
        .enumerate()
        .map(|(i, (&w, &kappa))| w * lambda_kappa(tau, kappa, link[i], table.c0(i), table.c1(i)))
        .sum()
}

/// Variance `(c₁(κ, ζ^u_q)² + r(κ, ζ^u_q)) / (π_q p)` of the empirical
/// group means around `c₀(κ, ζ^u_q)` at width `p`, on the outer nodes
/// (row-major `[node * k + q]`).
pub fn finite_width_variance(problem: &TheoryProblem, p: usize) -> Vec<f64> {
    let table = problem.table();
    let k = problem.k();
    let mut out = Vec::with_capacity(table.nodes().len() * k);
    for i in 0..table.nodes().len() {
        for q in 0..k {
            let c1 = table.c1(i)[q];
            out.push((c1 * c1 + table.r(i)[q]) / (problem.pi()[q] * p as f64));
        }
    }
    out
}

/// Shift of the mean-mean diagonal of `C⁻¹` caused by the group-mean
/// fluctuations at width `p`.
fn mean_fluctuation(problem: &TheoryProblem, blocks: &Blocks, p: usize) -> Vec<f64> {
    let s2 = finite_width_variance(problem, p);
    let k = problem.k();
    let coef = problem.sample_weight();
    let weights = problem.table().weights();
    (0..k)
        .map(|q| {
            weights
                .iter()
                .zip(&blocks.chi)
                .enumerate()
                .map(|(i, (&w, chi))| (c64::new(coef * w * s2[i * k + q], 0.0) / (1.0 + chi)).re)
                .sum()
        })
        .collect()
}

/// `C⁻¹` with the optional finite-width correction applied.
fn corrected_schur(
    problem: &TheoryProblem,
    state: &FixedPointState,
    finite_width: Option<usize>,
) -> Result<(SchurBlock, Blocks)> {
    let (mut schur, blocks) = schur_c_inverse(problem, state)?;
    if let Some(p) = finite_width {
        for (q, d) in mean_fluctuation(problem, &blocks, p).iter().enumerate() {
            schur.cinv[(q + 1, q + 1)] += d;
        }
    }
    Ok((schur, blocks))
}

/// Solves at `z = −λ` and assembles `C⁻¹`, `τ` and `E_κ[Λ_κ]`.
pub fn asymptotic_generror(
    problem: &TheoryProblem,
    lambda: f64,
    opts: &GenErrorOptions,
) -> Result<GenErrorReport> {
    let state = solve_at_ridge(problem, lambda, [0.0, 0.0], None, &opts.solver)?;
    generror_from_state(problem, lambda, state, opts)
}

/// As [`asymptotic_generror`], starting from an already converged state.
pub fn generror_from_state(
    problem: &TheoryProblem,
    lambda: f64,
    state: FixedPointState,
    opts: &GenErrorOptions,
) -> Result<GenErrorReport> {
    let (schur, blocks) = corrected_schur(problem, &state, opts.finite_width)?;
    let t0 = tau0(&schur, lambda, opts.pinv_rcond)?;
    let t1 = tau1(&blocks, &t0);
    let (t2, t3) = tau2_tau3_with(
        problem,
        lambda,
        &state,
        &t0,
        opts.rho_step,
        &opts.solver,
        opts.finite_width,
    )?;
    let tau = TauSet {
        tau0: t0,
        tau1: t1,
        tau2: t2,
        tau3: t3,
        provenance: TauProvenance::Asymptotic,
    };
    let mut error = expected_lambda(problem, &tau);
    if let Some(p) = opts.finite_width {
        let s2 = finite_width_variance(problem, p);
        let k = problem.k();
        for (i, &w) in problem.table().weights().iter().enumerate() {
            for q in 0..k {
                error += w * tau.tau0[q] * tau.tau0[q] * s2[i * k + q];
            }
        }
    }
    if !error.is_finite() || !tau.is_finite() {
        return Err(Error::Linalg("non-finite generalization error".into()));
    }
    Ok(GenErrorReport {
        error,
        tau,
        schur,
        state,
    })
}
