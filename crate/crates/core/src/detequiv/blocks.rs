use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg;

use super::problem::TheoryProblem;
use super::state::FixedPointState;

/// Kernels and blocks of the deterministic equivalent at a converged state.
///
/// The extended coordinate `ι(κ) = (g(κ), c₀(κ, ζ^u_1), …, c₀(κ, ζ^u_k))`
/// indexes the label row and the `k` group-mean rows.
#[derive(Clone, Debug)]
pub struct Blocks {
    pub z: c64,
    /// `L = (V⁻¹ + diag(b))⁻¹`.
    pub l: Mat<c64>,
    /// `ψ = diag(b) − L ⊙ b bᵀ`.
    pub psi: Mat<c64>,
    /// `χ(κ_i)` on the outer nodes.
    pub chi: Vec<c64>,
    /// `A₁₁ = w E[ι ιᵀ / (1 + χ)]`, `(k+1) × (k+1)`.
    pub a11: Mat<c64>,
    /// `Ã₂₁ = w E[κ c₁ ιᵀ / (1 + χ)]`, `k × (k+1)`.
    pub a21: Mat<c64>,
    /// `S = w E[(κ² − 1) c₁ c₁ᵀ / (1 + χ)]`, `k × k`.
    pub s: Mat<c64>,
    /// `(ψ⁻¹ + S)⁻¹ = ψ (I + S ψ)⁻¹`.
    pub inner: Mat<c64>,
}

impl Blocks {
    /// Evaluates all blocks by quadrature over the outer nodes.
    pub fn new(problem: &TheoryProblem, state: &FixedPointState) -> Result<Self> {
        let k = problem.k();
        let table = problem.table();
        let (l, psi) = problem.kernels(&state.v, &state.b)?;
        let chi = problem.chi_nodes(&psi, &state.b);
        let coef = problem.sample_weight();
        let link = problem.link_values();
        let mut a11 = Mat::<c64>::zeros(k + 1, k + 1);
        let mut a21 = Mat::<c64>::zeros(k, k + 1);
        let mut s = Mat::<c64>::zeros(k, k);
        let mut iota = vec![0.0; k + 1];
        for (i, (&wo, &kappa)) in table.weights().iter().zip(table.nodes()).enumerate() {
            let w = c64::new(coef * wo, 0.0) / (c64::new(1.0, 0.0) + chi[i]);
            let c1 = table.c1(i);
            iota[0] = link[i];
            iota[1..].copy_from_slice(table.c0(i));
            for a in 0..=k {
                for b in 0..=k {
                    a11[(a, b)] += w * (iota[a] * iota[b]);
                }
            }
            for q in 0..k {
                for b in 0..=k {
                    a21[(q, b)] += w * (kappa * c1[q] * iota[b]);
                }
                for r in 0..k {
                    s[(q, r)] += w * ((kappa * kappa - 1.0) * c1[q] * c1[r]);
                }
            }
        }
        let sp = &s * &psi;
        let m = Mat::from_fn(k, k, |i, j| {
            let id = if i == j {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            };
            id + sp[(i, j)]
        });
        let inner = &psi * linalg::inverse(m.as_ref())?;
        Ok(Self {
            z: state.z,
            l,
            psi,
            chi,
            a11,
            a21,
            s,
            inner,
        })
    }

    pub fn k(&self) -> usize {
        self.s.nrows()
    }

    /// Schur complement `C⁻¹ = A₁₁ − zI − Ã₂₁ᵀ (ψ⁻¹ + S)⁻¹ Ã₂₁`.
    ///
    /// At `z = −λ` this is the `(k+1) × (k+1)` block whose inverse is the
    /// label/mean corner of the equivalent resolvent.
    pub fn c_inverse(&self) -> Mat<c64> {
        let k = self.k();
        let proj = self.a21.transpose() * &self.inner * &self.a21;
        Mat::from_fn(k + 1, k + 1, |i, j| {
            let diag = if i == j { self.z } else { c64::new(0.0, 0.0) };
            self.a11[(i, j)] - diag - proj[(i, j)]
        })
    }
}

/// Dense `(1 + k + p)`-square matrix whose inverse is the equivalent resolvent.
///
/// Coordinates are ordered (label, group means, neurons). Neuron `j` belongs
/// to group `groups[j]` and carries the target overlap `θ_j = w_jᵀ w*`.
pub fn assemble_extended(
    problem: &TheoryProblem,
    state: &FixedPointState,
    blocks: &Blocks,
    theta: &[f64],
    groups: &[usize],
) -> Result<Mat<c64>> {
    let k = problem.k();
    if theta.len() != groups.len() {
        return Err(Error::Config(
            "θ and the group assignment differ in length".into(),
        ));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= k) {
        return Err(Error::Config(format!(
            "group index {g} out of range for k = {k}"
        )));
    }
    let p = theta.len();
    let dim = 1 + k + p;
    let beta = problem.beta();
    let pi = problem.pi();
    let mut vs = Mat::<c64>::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            vs[(a, b)] = state.v[(a, b)] + blocks.s[(a, b)];
        }
    }
    let mut m = Mat::<c64>::zeros(dim, dim);
    for a in 0..=k {
        for b in 0..=k {
            m[(a, b)] = blocks.a11[(a, b)];
        }
        m[(a, a)] -= state.z;
    }
    for j in 0..p {
        let q = groups[j];
        for a in 0..=k {
            let off = blocks.a21[(q, a)] * theta[j];
            m[(a, 1 + k + j)] = off;
            m[(1 + k + j, a)] = off;
        }
        for l in 0..p {
            m[(1 + k + j, 1 + k + l)] = vs[(q, groups[l])] * (theta[j] * theta[l]);
        }
        m[(1 + k + j, 1 + k + j)] += c64::new(beta * pi[q], 0.0) / state.b[q];
    }
    Ok(m)
}

/// Inverse of [`assemble_extended`].
pub fn extended_equivalent(
    problem: &TheoryProblem,
    state: &FixedPointState,
    blocks: &Blocks,
    theta: &[f64],
    groups: &[usize],
) -> Result<Mat<c64>> {
    let m = assemble_extended(problem, state, blocks, theta, groups)?;
    linalg::inverse(m.as_ref())
}
