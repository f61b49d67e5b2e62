use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converged (or in-progress) order parameters at one spectral point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct FixedPointState {
    pub z: c64,
    /// Perturbation pair `(ρ₁, ρ₂)`.
    pub rho: [f64; 2],
    /// `V`, `k × k`.
    pub v: Mat<c64>,
    pub nu: Vec<c64>,
    pub b: Vec<c64>,
    /// Sup-norm change under one more map application.
    pub residual: f64,
    pub iterations: usize,
}

impl FixedPointState {
    pub fn k(&self) -> usize {
        self.b.len()
    }

    /// Whether every entry is finite.
    pub fn is_finite(&self) -> bool {
        let ok = |x: &c64| x.re.is_finite() && x.im.is_finite();
        self.nu.iter().all(ok)
            && self.b.iter().all(ok)
            && (0..self.k()).all(|i| (0..self.k()).all(|j| ok(&self.v[(i, j)])))
    }

    /// Sup-norm distance over all order parameters.
    pub fn distance(&self, other: &FixedPointState) -> f64 {
        let k = self.k();
        let mut d: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                d = d.max((self.v[(i, j)] - other.v[(i, j)]).norm());
            }
            d = d.max((self.nu[i] - other.nu[i]).norm());
            d = d.max((self.b[i] - other.b[i]).norm());
        }
        d
    }

    /// Flattens `(V, ν, b)` into one vector.
    pub fn pack(&self) -> Vec<c64> {
        let k = self.k();
        let mut x = Vec::with_capacity(k * k + 2 * k);
        for i in 0..k {
            for j in 0..k {
                x.push(self.v[(i, j)]);
            }
        }
        x.extend_from_slice(&self.nu);
        x.extend_from_slice(&self.b);
        x
    }

    /// Inverse of [`Self::pack`], keeping `z`, `ρ` and the counters.
    pub fn unpack(&self, x: &[c64]) -> FixedPointState {
        let k = self.k();
        FixedPointState {
            z: self.z,
            rho: self.rho,
            v: Mat::from_fn(k, k, |i, j| x[i * k + j]),
            nu: x[k * k..k * k + k].to_vec(),
            b: x[k * k + k..].to_vec(),
            residual: self.residual,
            iterations: self.iterations,
        }
    }

    /// Complex conjugate of every order parameter, as at the point `z̄`.
    pub fn conj(&self) -> FixedPointState {
        let k = self.k();
        FixedPointState {
            z: self.z.conj(),
            rho: self.rho,
            v: Mat::from_fn(k, k, |i, j| self.v[(i, j)].conj()),
            nu: self.nu.iter().map(|x| x.conj()).collect(),
            b: self.b.iter().map(|x| x.conj()).collect(),
            residual: self.residual,
            iterations: self.iterations,
        }
    }

    /// Checks the half-plane sign conditions on the diagonal entries.
    ///
    /// For `Im z > 0`: `Im V_qq ≤ 0`, `Im ν_q ≤ 0` and `Im b_q ≥ 0`, each up
    /// to `slack`. Real `z` left of the origin gives real order parameters, so
    /// only the sign of `b` is checked there.
    pub fn satisfies_sign_conditions(&self, slack: f64) -> bool {
        let k = self.k();
        if self.z.im > 0.0 {
            (0..k).all(|q| {
                self.v[(q, q)].im <= slack && self.nu[q].im <= slack && self.b[q].im >= -slack
            })
        } else {
            (0..k).all(|q| self.b[q].re >= -slack)
        }
    }

    /// Largest ratio `|b_q| / (βπ_q / dist(z, ℝ⁺))`; at most one for a valid state.
    pub fn bound_ratio(&self, pi: &[f64], beta: f64) -> f64 {
        let dist = self.z.im.max(-self.z.re);
        if dist <= 0.0 {
            return f64::INFINITY;
        }
        self.b
            .iter()
            .zip(pi)
            .map(|(b, &p)| b.norm() / (beta * p / dist))
            .fold(0.0, f64::max)
    }

    /// Serializes to a JSON string.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a JSON string produced by [`Self::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// On-disk layout: complex numbers as `[re, im]`, `V` as a list of rows.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    z: [f64; 2],
    rho: [f64; 2],
    #[serde(rename = "V")]
    v: Vec<Vec<[f64; 2]>>,
    nu: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
    residual: f64,
    iterations: usize,
}

fn pair(x: c64) -> [f64; 2] {
    [x.re, x.im]
}

fn unpair(x: [f64; 2]) -> c64 {
    c64::new(x[0], x[1])
}

impl From<FixedPointState> for StateRecord {
    fn from(s: FixedPointState) -> Self {
        let k = s.k();
        StateRecord {
            z: pair(s.z),
            rho: s.rho,
            v: (0..k)
                .map(|i| (0..k).map(|j| pair(s.v[(i, j)])).collect())
                .collect(),
            nu: s.nu.iter().copied().map(pair).collect(),
            b: s.b.iter().copied().map(pair).collect(),
            // JSON has no representation for non-finite numbers.
            residual: if s.residual.is_finite() {
                s.residual
            } else {
                f64::MAX
            },
            iterations: s.iterations,
        }
    }
}

impl TryFrom<StateRecord> for FixedPointState {
    type Error = Error;

    fn try_from(r: StateRecord) -> Result<Self> {
        let k = r.b.len();
        if r.nu.len() != k || r.v.len() != k || r.v.iter().any(|row| row.len() != k) {
            return Err(Error::Artifact(format!(
                "fixed-point record has inconsistent sizes (k = {k})"
            )));
        }
        Ok(FixedPointState {
            z: unpair(r.z),
            rho: r.rho,
            v: Mat::from_fn(k, k, |i, j| unpair(r.v[i][j])),
            nu: r.nu.into_iter().map(unpair).collect(),
            b: r.b.into_iter().map(unpair).collect(),
            residual: r.residual,
            iterations: r.iterations,
        })
    }
}
