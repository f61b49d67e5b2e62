use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spikerf::c64;
use spikerf::quadrature::{GaussianIntegrator, DEFAULT_INNER_NODES};
use spikerf::simulate::{
    bulk_covariance_diagnostic, bulk_spectrum, empirical_generror, empirical_stieltjes,
    empirical_tau, gaussian_matrix, gradient_step, mat_t_vec, mat_vec, nonzero_bulk, ridge_fit,
    ridge_fit_with, ridge_gradient, run, sample_data, sample_target, sample_weights,
    spike_deviation, spiked_approximation, Dataset, DiagnosticMoments, ExtendedFeatures,
    ExtendedResolvent, RidgePath, SimulationOptions, SpikeMode, TraceWeight,
};
use spikerf::{ExperimentConfig, Pointwise, VocabularySpec};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_mat(n: usize, m: usize, seed: u64) -> Mat<f64> {
    gaussian_matrix(n, m, &mut rng(seed))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn small_config(mode_seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        d: 40,
        p: 60,
        n: 80,
        n0: None,
        eta_tilde: 1.0,
        lambda: 0.1,
        seed: mode_seed,
        activation: Pointwise::Erf,
        link: Pointwise::Tanh,
        vocab: VocabularySpec::new(vec![1.0, -1.0], vec![0.5, 0.5]).unwrap(),
    }
}

#[test]
fn identity_link_labels_equal_the_projection() {
    let w = sample_target(7, &mut rng(1));
    let data = sample_data(50, &w, Pointwise::Identity, &mut rng(2)).unwrap();
    let kappa = mat_vec(&data.x, &w);
    for i in 0..50 {
        assert_eq!(data.y[i], data.kappa[i]);
        assert!((data.kappa[i] - kappa[i]).abs() < 1e-12);
    }
}

#[test]
fn projection_is_standard_normal() {
    let w = sample_target(5, &mut rng(3));
    let data = sample_data(100_000, &w, Pointwise::Identity, &mut rng(4)).unwrap();
    let n = data.len() as f64;
    let mean = data.kappa.iter().sum::<f64>() / n;
    let var = data.kappa.iter().map(|k| k * k).sum::<f64>() / n - mean * mean;
    assert!(mean.abs() < 0.02, "{mean}");
    assert!((var - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn non_unit_target_is_rejected() {
    assert!(sample_data(3, &[1.0, 1.0], Pointwise::Tanh, &mut rng(0)).is_err());
}

#[test]
fn sampling_is_reproducible() {
    let a = sample_weights(6, 4, &mut rng(9));
    let b = sample_weights(6, 4, &mut rng(9));
    assert_eq!(a, b);
    for i in 0..6 {
        let r: Vec<f64> = (0..4).map(|j| a[(i, j)]).collect();
        assert!((norm(&r) - 1.0).abs() < 1e-12);
    }
}

fn tiny_batch() -> (Mat<f64>, Vec<f64>, Dataset) {
    let w0 = Mat::from_fn(2, 3, |i, j| [[0.3, -0.5, 0.8], [0.9, 0.1, -0.2]][i][j]);
    let a0 = vec![0.7, -1.1];
    let x = Mat::from_fn(2, 3, |i, j| [[1.0, -0.4, 0.25], [-0.6, 1.3, 0.5]][i][j]);
    let y = vec![0.4, -0.9];
    let batch = Dataset {
        x,
        y: y.clone(),
        kappa: y,
    };
    (w0, a0, batch)
}

#[test]
fn gradient_step_matches_a_scalar_loop() {
    let (w0, a0, batch) = tiny_batch();
    let eta = 0.37;
    let sigma = Pointwise::Tanh;
    let w1 = gradient_step(&w0, &a0, &batch, eta, sigma).unwrap();
    let (p, d, n0) = (2, 3, 2);
    let sp = (p as f64).sqrt();
    let pre = |j: usize, mu: usize| (0..d).map(|i| w0[(j, i)] * batch.x[(mu, i)]).sum::<f64>();
    let f = |mu: usize| (0..p).map(|j| a0[j] * sigma.eval(pre(j, mu))).sum::<f64>() / sp;
    for j in 0..p {
        for i in 0..d {
            let mut g = 0.0;
            for mu in 0..n0 {
                let dsig = 1.0 - pre(j, mu).tanh().powi(2);
                g += (f(mu) - batch.y[mu]) * a0[j] * dsig * batch.x[(mu, i)];
            }
            let expected = w0[(j, i)] - eta / (n0 as f64 * sp) * g;
            assert!((w1[(j, i)] - expected).abs() < 1e-12, "({j},{i})");
        }
    }
}

#[test]
fn gradient_step_without_step_size_or_readout_is_identity() {
    let (w0, a0, batch) = tiny_batch();
    assert_eq!(
        gradient_step(&w0, &a0, &batch, 0.0, Pointwise::Erf).unwrap(),
        w0
    );
    assert_eq!(
        gradient_step(&w0, &[0.0, 0.0], &batch, 3.0, Pointwise::Erf).unwrap(),
        w0
    );
    assert!(gradient_step(&w0, &[1.0], &batch, 1.0, Pointwise::Erf).is_err());
}

#[test]
fn spiked_approximation_adds_a_rank_one_term() {
    let w0 = random_mat(4, 3, 5);
    let u = [0.5, -1.0, 2.0, 0.0];
    let w_star = [0.6, 0.0, 0.8];
    let wt = spiked_approximation(&w0, &u, &w_star);
    for j in 0..4 {
        for i in 0..3 {
            assert_eq!(wt[(j, i)], w0[(j, i)] + u[j] * w_star[i]);
        }
    }
}

#[test]
fn spike_deviation_of_a_rank_one_difference_is_its_norm_product() {
    let base = random_mat(30, 20, 6);
    let r: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
    let s: Vec<f64> = (0..20).map(|i| (i as f64 * 0.11).cos()).collect();
    let shifted = spiked_approximation(&base, &r, &s);
    let dev = spike_deviation(&shifted, &base).unwrap();
    let expected = norm(&r) * norm(&s);
    assert!(
        (dev - expected).abs() < 1e-6 * expected,
        "{dev} vs {expected}"
    );
    assert!(spike_deviation(&base, &random_mat(30, 21, 1)).is_err());
}

#[test]
fn centered_features_have_zero_group_means() {
    let phi = random_mat(10, 9, 7);
    let groups = [0, 1, 2, 0, 1, 2, 0, 0, 1];
    let feats =
        ExtendedFeatures::new(phi.clone(), vec![0.0; 10], vec![0.0; 10], &groups, 3).unwrap();
    for i in 0..10 {
        for q in 0..3 {
            let members: Vec<usize> = (0..9).filter(|&j| groups[j] == q).collect();
            let sum: f64 = members.iter().map(|&j| feats.centered[(i, j)]).sum();
            assert!(sum.abs() < 1e-12);
            let mean = members.iter().map(|&j| phi[(i, j)]).sum::<f64>() / members.len() as f64;
            assert!((feats.means[(i, q)] - mean).abs() < 1e-12);
        }
    }
    let assembled = feats.assembled();
    assert_eq!(assembled.ncols(), 1 + 3 + 9);
    assert_eq!(assembled[(4, 4 + 5)], feats.centered[(4, 5)]);
}

#[test]
fn constant_within_group_features_center_to_zero() {
    let groups = [0, 0, 1, 1];
    let phi = Mat::from_fn(3, 4, |i, j| {
        (i + 1) as f64 * if groups[j] == 0 { 1.0 } else { -2.0 }
    });
    let feats = ExtendedFeatures::new(phi, vec![0.0; 3], vec![0.0; 3], &groups, 2).unwrap();
    assert!(feats.centered.norm_max() == 0.0);
    assert!(ExtendedFeatures::new(
        Mat::zeros(3, 4),
        vec![0.0; 3],
        vec![0.0; 3],
        &[0, 0, 0, 0],
        2
    )
    .is_err());
}

#[test]
fn centering_commutes_with_neuron_permutation() {
    let phi = random_mat(6, 5, 8);
    let groups = [0, 1, 0, 1, 1];
    let perm = [3, 0, 4, 2, 1];
    let phi_p = Mat::from_fn(6, 5, |i, j| phi[(i, perm[j])]);
    let groups_p: Vec<usize> = perm.iter().map(|&j| groups[j]).collect();
    let a = ExtendedFeatures::new(phi, vec![0.0; 6], vec![0.0; 6], &groups, 2).unwrap();
    let b = ExtendedFeatures::new(phi_p, vec![0.0; 6], vec![0.0; 6], &groups_p, 2).unwrap();
    for i in 0..6 {
        for j in 0..5 {
            assert!((b.centered[(i, j)] - a.centered[(i, perm[j])]).abs() < 1e-12);
        }
    }
}

#[test]
fn ridge_matches_a_hand_solved_case() {
    let phi = Mat::from_fn(3, 2, |i, j| [[1.0, 2.0], [0.0, 1.0], [-1.0, 1.0]][i][j]);
    let y = [1.0, 0.5, -2.0];
    let lambda = 0.3;
    let sp = 2f64.sqrt();
    // (ΦᵀΦ/2 + λI) a = Φᵀy/√2, solved by Cramer's rule.
    let (m00, m01, m11) = (2.0 / 2.0 + lambda, 1.0 / 2.0, 6.0 / 2.0 + lambda);
    let (b0, b1) = (3.0 / sp, 0.5 / sp);
    let det = m00 * m11 - m01 * m01;
    let expected = [(b0 * m11 - m01 * b1) / det, (m00 * b1 - m01 * b0) / det];
    for path in [RidgePath::Primal, RidgePath::Dual] {
        let a = ridge_fit_with(&phi, &y, lambda, path).unwrap();
        for q in 0..2 {
            assert!((a[q] - expected[q]).abs() < 1e-12, "{path:?}");
        }
    }
}

#[test]
fn ridge_paths_agree_and_zero_the_gradient() {
    for (n, p) in [(200, 300), (300, 200)] {
        let phi = random_mat(n, p, 10);
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let a = ridge_fit_with(&phi, &y, 0.05, RidgePath::Primal).unwrap();
        let b = ridge_fit_with(&phi, &y, 0.05, RidgePath::Dual).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) < 1e-8 * norm(&a).max(1.0), "n = {n}");
        let grad = ridge_gradient(&phi, &y, 0.05, &ridge_fit(&phi, &y, 0.05).unwrap());
        assert!(norm(&grad) < 1e-8 * norm(&y), "n = {n}");
    }
}

#[test]
fn large_penalty_shrinks_toward_the_scaled_correlation() {
    let phi = random_mat(20, 10, 11);
    let y: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    let lambda = 1e8;
    let a = ridge_fit(&phi, &y, lambda).unwrap();
    let target: Vec<f64> = mat_t_vec(&phi, &y)
        .iter()
        .map(|v| v / (10f64.sqrt() * lambda))
        .collect();
    for (x, t) in a.iter().zip(&target) {
        assert!((x - t).abs() < 1e-6 * t.abs().max(1e-12) + 1e-20);
    }
    assert!(ridge_fit(&phi, &y, 0.0).is_err());
    assert!(ridge_fit(&phi, &y[..5], 1.0).is_err());
}

#[test]
fn small_penalty_approaches_least_squares() {
    let phi = random_mat(40, 5, 12);
    let truth = [0.5, -1.0, 2.0, 0.0, 0.3];
    let sp = 5f64.sqrt();
    let y: Vec<f64> = mat_vec(&phi, &truth).iter().map(|v| v / sp).collect();
    let a = ridge_fit(&phi, &y, 1e-10).unwrap();
    for (x, t) in a.iter().zip(&truth) {
        assert!((x - t).abs() < 1e-6);
    }
}

#[test]
fn zero_readout_error_is_the_link_second_moment() {
    let w = sample_weights(4, 6, &mut rng(13));
    let w_star = sample_target(6, &mut rng(14));
    let est = empirical_generror(
        &[0.0; 4],
        &w,
        Pointwise::Erf,
        Pointwise::Sin,
        &w_star,
        40_000,
        &mut rng(15),
    )
    .unwrap();
    let expected = (1.0 - (-2f64).exp()) / 2.0;
    assert!(
        (est.mean - expected).abs() < 4.0 * est.stderr,
        "{est:?} vs {expected}"
    );
    assert!(empirical_generror(
        &[0.0; 4],
        &w,
        Pointwise::Erf,
        Pointwise::Sin,
        &w_star,
        1,
        &mut rng(0)
    )
    .is_err());
}

#[test]
fn single_neuron_readout_reproduces_the_link() {
    let w_star = sample_target(5, &mut rng(16));
    let w = Mat::from_fn(1, 5, |_, i| w_star[i]);
    let est = empirical_generror(
        &[1.0],
        &w,
        Pointwise::Tanh,
        Pointwise::Tanh,
        &w_star,
        100,
        &mut rng(17),
    )
    .unwrap();
    assert!(est.mean < 1e-24);
}

fn tau_inputs() -> (Vec<f64>, Vec<usize>, Vec<f64>, Mat<f64>, Vec<f64>, Vec<f64>) {
    let p = 7;
    let a: Vec<f64> = (0..p).map(|j| (j as f64 * 0.7).cos()).collect();
    let groups = vec![0, 1, 0, 1, 1, 0, 1];
    let theta: Vec<f64> = (0..p).map(|j| (j as f64 * 1.3).sin()).collect();
    let w = random_mat(p, 4, 18);
    let c1_bar = vec![0.4, 0.1, 0.1, 0.3];
    let r_bar = vec![0.2, 0.5];
    (a, groups, theta, w, c1_bar, r_bar)
}

#[test]
fn empirical_tau_matches_a_double_loop() {
    let (a, groups, theta, w, c1_bar, r_bar) = tau_inputs();
    let tau = empirical_tau(&a, &groups, &theta, &w, &c1_bar, &r_bar).unwrap();
    let p = a.len();
    let sp = (p as f64).sqrt();
    let mean = |q: usize| {
        let m: Vec<f64> = (0..p).filter(|&j| groups[j] == q).map(|j| a[j]).collect();
        m.iter().sum::<f64>() / m.len() as f64
    };
    let b: Vec<f64> = (0..p).map(|j| (a[j] - mean(groups[j])) / sp).collect();
    let mut tau2 = 0.0;
    for j in 0..p {
        for l in 0..p {
            let dot: f64 = (0..4).map(|i| w[(j, i)] * w[(l, i)]).sum();
            tau2 += b[j] * b[l] * c1_bar[groups[j] * 2 + groups[l]] * dot;
        }
    }
    let tau3: f64 = (0..p).map(|j| b[j] * b[j] * r_bar[groups[j]]).sum();
    assert!((tau.tau2 - tau2).abs() < 1e-12);
    assert!((tau.tau3 - tau3).abs() < 1e-12);
    for q in 0..2 {
        let t0: f64 = (0..p)
            .filter(|&j| groups[j] == q)
            .map(|j| a[j])
            .sum::<f64>()
            / sp;
        let t1: f64 = (0..p)
            .filter(|&j| groups[j] == q)
            .map(|j| b[j] * theta[j])
            .sum();
        assert!((tau.tau0[q] - t0).abs() < 1e-12);
        assert!((tau.tau1[q] - t1).abs() < 1e-12);
    }
}

#[test]
fn group_constant_readout_has_only_mean_parameters() {
    let (_, groups, theta, w, c1_bar, r_bar) = tau_inputs();
    let a: Vec<f64> = groups
        .iter()
        .map(|&g| if g == 0 { 1.5 } else { -0.5 })
        .collect();
    let tau = empirical_tau(&a, &groups, &theta, &w, &c1_bar, &r_bar).unwrap();
    let sp = 7f64.sqrt();
    assert!((tau.tau0[0] - 3.0 * 1.5 / sp).abs() < 1e-12);
    assert!((tau.tau0[1] + 4.0 * 0.5 / sp).abs() < 1e-12);
    assert!(tau.tau1.iter().all(|t| t.abs() < 1e-14));
    assert!(tau.tau2.abs() < 1e-14 && tau.tau3.abs() < 1e-14);
}

#[test]
fn empirical_tau_rejects_bad_groups() {
    let (a, mut groups, theta, w, c1_bar, r_bar) = tau_inputs();
    groups[0] = 2;
    assert!(empirical_tau(&a, &groups, &theta, &w, &c1_bar, &r_bar).is_err());
}

#[test]
fn bulk_spectrum_of_zero_features_vanishes() {
    let eig = bulk_spectrum(&Mat::zeros(5, 8)).unwrap();
    assert_eq!(eig.len(), 8);
    assert!(eig.iter().all(|e| e.abs() < 1e-14));
}

#[test]
fn bulk_spectrum_preserves_the_trace_in_both_aspect_ratios() {
    for (n, p) in [(12, 20), (20, 12)] {
        let m = random_mat(n, p, 19);
        let eig = bulk_spectrum(&m).unwrap();
        assert_eq!(eig.len(), p);
        assert!(eig.windows(2).all(|w| w[0] <= w[1]));
        let frob: f64 = (0..p)
            .map(|j| m.col_as_slice(j).iter().map(|v| v * v).sum::<f64>())
            .sum();
        let trace: f64 = eig.iter().sum();
        assert!((trace - frob / p as f64).abs() < 1e-10 * trace);
        let bulk = nonzero_bulk(&eig, n, 2);
        assert_eq!(bulk.len(), n.min(p - 2));
    }
}

#[test]
fn empirical_stieltjes_decays_like_minus_one_over_z() {
    let eig = bulk_spectrum(&random_mat(30, 40, 20)).unwrap();
    for t in [1e3, 1e5] {
        let z = c64::new(0.0, t);
        let m = empirical_stieltjes(&eig, z);
        let prod = m * (-z);
        assert!((prod - c64::new(1.0, 0.0)).norm() < 10.0 / t);
    }
}

#[test]
fn resolvent_inverts_the_shifted_gram() {
    let phi = random_mat(9, 6, 21);
    let p = 5;
    let res = ExtendedResolvent::new(&phi, p).unwrap();
    let dim = res.dim();
    assert_eq!(dim, 6);
    let gram = Mat::from_fn(dim, dim, |i, j| {
        (0..9).map(|m| phi[(m, i)] * phi[(m, j)]).sum::<f64>() / p as f64
    });
    let z = c64::new(0.7, 0.4);
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = -z * res.entry(i, j, z);
            for l in 0..dim {
                acc += res.entry(l, j, z) * gram[(i, l)];
            }
            let delta = if i == j { 1.0 } else { 0.0 };
            assert!((acc - c64::new(delta, 0.0)).norm() < 1e-10, "({i},{j})");
            let conj = res.entry(i, j, z.conj());
            assert!((conj - res.entry(i, j, z).conj()).norm() < 1e-12);
        }
    }
    let weighted = res
        .trace(&TraceWeight::Entries(vec![(0, 1, 2.0), (3, 3, -1.0)]), z)
        .unwrap();
    let direct = res.entry(1, 0, z) * 2.0 - res.entry(3, 3, z);
    assert!((weighted - direct).norm() < 1e-14);
    assert!(res.trace(&TraceWeight::Coordinate(dim), z).is_err());
}

#[test]
fn resolvent_of_zero_features_is_scalar() {
    let res = ExtendedResolvent::new(&Mat::zeros(3, 4), 4).unwrap();
    let z = c64::new(-0.3, 1.2);
    let tr = res.trace(&TraceWeight::NormalizedTrace, z).unwrap();
    assert!((tr + c64::new(1.0, 0.0) / z).norm() < 1e-14);
}

fn uniform_layer(p: usize) -> Vec<f64> {
    vec![1.0 / (p as f64).sqrt(); p]
}

#[test]
fn bulk_covariance_without_a_step_is_exactly_one() {
    let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES).unwrap();
    let moments = DiagnosticMoments::compute(Pointwise::Erf, Pointwise::Tanh, &integ);
    let w0 = sample_weights(10, 8, &mut rng(22));
    let w_star = sample_target(8, &mut rng(23));
    let data = sample_data(30, &w_star, Pointwise::Tanh, &mut rng(24)).unwrap();
    let report = bulk_covariance_diagnostic(
        &w0,
        &uniform_layer(10),
        &data.x,
        &data.y,
        0.0,
        Pointwise::Erf,
        &moments,
    )
    .unwrap();
    assert!((report.empirical - 1.0).abs() < 1e-12);
    assert_eq!(report.predicted, 1.0);
    assert!(bulk_covariance_diagnostic(
        &w0,
        &uniform_layer(10),
        &data.x,
        &data.y,
        0.0,
        Pointwise::Relu,
        &moments
    )
    .is_err());
    let mut skewed = uniform_layer(10);
    skewed[0] = -skewed[0];
    assert!(bulk_covariance_diagnostic(
        &w0,
        &skewed,
        &data.x,
        &data.y,
        0.0,
        Pointwise::Erf,
        &moments
    )
    .is_err());
}

#[test]
fn identity_activation_leaves_no_bulk_correction() {
    let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES).unwrap();
    let moments = DiagnosticMoments::compute(Pointwise::Identity, Pointwise::Tanh, &integ);
    assert!(moments.derivative_tail.abs() < 1e-12);
    assert!((moments.c1 - 1.0).abs() < 1e-12);
    let (p, d, n0) = (12, 10, 25);
    let w0 = sample_weights(p, d, &mut rng(25));
    let w_star = sample_target(d, &mut rng(26));
    let data = sample_data(n0, &w_star, Pointwise::Tanh, &mut rng(27)).unwrap();
    let a0 = uniform_layer(p);
    let eta_tilde = 0.8;
    let w1 = gradient_step(&w0, &a0, &data, eta_tilde * d as f64, Pointwise::Identity).unwrap();
    let report = bulk_covariance_diagnostic(
        &w1,
        &a0,
        &data.x,
        &data.y,
        eta_tilde,
        Pointwise::Identity,
        &moments,
    )
    .unwrap();
    assert_eq!(report.predicted, 1.0);
    assert!(report.empirical.is_finite() && report.empirical > 0.0);
}

#[test]
fn simulation_runs_are_reproducible() {
    let cfg = small_config(3);
    let opts = SimulationOptions {
        mode: SpikeMode::GradientStep,
        n_test: 500,
        spectrum: true,
    };
    let a = run(&cfg, &opts).unwrap();
    let b = run(&cfg, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.eigenvalues.len(), cfg.p);
    assert!(a.spike_deviation.unwrap() > 0.0);
    let spiked = run(
        &cfg,
        &SimulationOptions {
            mode: SpikeMode::Spiked,
            ..opts
        },
    )
    .unwrap();
    assert!(spiked.spike_deviation.is_none());
    let other = run(&small_config(4), &opts).unwrap();
    assert_ne!(a.gen_error, other.gen_error);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ridge_solution_is_stationary(seed in 0u64..10_000, n in 2usize..30, p in 2usize..30, lambda in 1e-3f64..10.0) {
        let mut r = rng(seed);
        let phi = gaussian_matrix(n, p, &mut r);
        let y: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let a = ridge_fit(&phi, &y, lambda).unwrap();
        let grad = ridge_gradient(&phi, &y, lambda, &a);
        prop_assert!(norm(&grad) < 1e-8 * (1.0 + norm(&y)));
    }

    #[test]
    fn empirical_stieltjes_maps_upper_half_plane_to_itself(seed in 0u64..10_000, re in -5.0f64..5.0, im in 1e-3f64..5.0) {
        let eig = bulk_spectrum(&random_mat(8, 6, seed)).unwrap();
        let m = empirical_stieltjes(&eig, c64::new(re, im));
        prop_assert!(m.im > 0.0);
    }
}
