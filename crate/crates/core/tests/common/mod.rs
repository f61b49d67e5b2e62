//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson estimate of `E[f(z)]` for `z ~ N(0, 1)` on `[-14, 14]`.
///
/// `breaks` are interior points where `f` has a kink or jump; the panels are
/// aligned with them and each piece is sampled just inside its endpoints, so
/// the value of `f` exactly at a jump never enters the sum.
pub fn gaussian_mean(f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let mut cuts = vec![-14.0];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|b| b.abs() < 14.0).collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    cuts.extend(inner);
    cuts.push(14.0);
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    cuts.windows(2)
        .map(|w| {
            let nudge = 1e-13 * (1.0 + w[0].abs().max(w[1].abs()));
            simpson(|z| f(z) * density(z), w[0] + nudge, w[1] - nudge, 4000)
        })
        .sum()
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Normalized probabilists' Hermite values `h_0..=h_l` at `x` by the
/// three-term recurrence `h_{m+1} = (x h_m − √m h_{m−1}) / √(m+1)`.
pub fn hermite_values(l: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0; l + 1];
    if l >= 1 {
        h[1] = x;
    }
    for m in 1..l {
        h[m + 1] = (x * h[m] - (m as f64).sqrt() * h[m - 1]) / ((m + 1) as f64).sqrt();
    }
    h
}
