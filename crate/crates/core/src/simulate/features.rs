use faer::Mat;

use crate::error::{Error, Result};

/// Features split into group means and within-group fluctuations.
#[derive(Clone, Debug)]
pub struct ExtendedFeatures {
    /// `Φ`, `n × p`.
    pub phi: Mat<f64>,
    pub y: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Vocabulary index of each neuron.
    pub groups: Vec<usize>,
    /// `φ̄`, `n × k`: mean of each row over each group.
    pub means: Mat<f64>,
    /// `φ̃ = Φ − φ̄` broadcast over each group, `n × p`.
    pub centered: Mat<f64>,
}

impl ExtendedFeatures {
    /// Splits `Φ` along the partition `groups` (values in `0..k`).
    pub fn new(
        phi: Mat<f64>,
        y: Vec<f64>,
        kappa: Vec<f64>,
        groups: &[usize],
        k: usize,
    ) -> Result<Self> {
        let (n, p) = (phi.nrows(), phi.ncols());
        if groups.len() != p || y.len() != n || kappa.len() != n {
            return Err(Error::Config(
                "extended features: inconsistent shapes".into(),
            ));
        }
        let mut sizes = vec![0usize; k];
        for &g in groups {
            if g >= k {
                return Err(Error::Config(format!(
                    "group index {g} out of range for k = {k}"
                )));
            }
            sizes[g] += 1;
        }
        if let Some(q) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!(
                "vocabulary entry {q} has no neurons"
            )));
        }
        let mut means = Mat::<f64>::zeros(n, k);
        for (j, &g) in groups.iter().enumerate() {
            let col = phi.col_as_slice(j);
            let dst = means.col_as_slice_mut(g);
            for (m, v) in dst.iter_mut().zip(col) {
                *m += v;
            }
        }
        for (q, &s) in sizes.iter().enumerate() {
            for m in means.col_as_slice_mut(q) {
                *m /= s as f64;
            }
        }
        let mut centered = phi.clone();
        for (j, &g) in groups.iter().enumerate() {
            let mcol = means.col_as_slice(g).to_vec();
            for (c, m) in centered.col_as_slice_mut(j).iter_mut().zip(&mcol) {
                *c -= m;
            }
        }
        Ok(Self {
            phi,
            y,
            kappa,
            groups: groups.to_vec(),
            means,
            centered,
        })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    pub fn k(&self) -> usize {
        self.means.ncols()
    }

    /// `Φᵉ = (y, φ̄₁, …, φ̄_k, φ̃)`, `n × (1 + k + p)`.
    pub fn assembled(&self) -> Mat<f64> {
        let (n, k, p) = (self.n(), self.k(), self.p());
        Mat::from_fn(n, 1 + k + p, |i, c| {
            if c == 0 {
                self.y[i]
            } else if c <= k {
                self.means[(i, c - 1)]
            } else {
                self.centered[(i, c - 1 - k)]
            }
        })
    }
}
