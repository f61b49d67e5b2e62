//! Finite-size Monte Carlo of the two-step training pipeline and of every
//! empirical observable the theory predicts.

mod data;
mod features;
mod observables;
mod ridge;

pub use data::{
    apply, features, gaussian_matrix, gradient_step, mat_t_vec, mat_vec, sample_data,
    sample_target, sample_weights, spike_deviation, spike_vector, spiked_approximation, Dataset,
};
pub use features::ExtendedFeatures;
pub use observables::{
    bulk_covariance_diagnostic, bulk_spectrum, empirical_generror, empirical_stieltjes,
    empirical_tau, nonzero_bulk, BulkCovarianceReport, DiagnosticMoments, Estimate,
    ExtendedResolvent, TraceWeight,
};
pub use ridge::{ridge_fit, ridge_fit_with, ridge_gradient, RidgePath};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generror::TauSet;
use crate::model::{first_hermite, spike_vocabulary, ExperimentConfig, SecondLayer};
use crate::quadrature::{CoefficientTable, GaussianIntegrator, DEFAULT_INNER_NODES};
use crate::rng::{stream, Stream};

/// How the first layer used for the features is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    /// One gradient step on a fresh batch of `n₀` samples.
    GradientStep,
    /// The spiked approximation `W⁰ + u w*ᵀ`.
    #[default]
    Spiked,
}

/// Options for [`train`] and [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationOptions {
    pub mode: SpikeMode,
    /// Test points for the Monte Carlo error.
    pub n_test: usize,
    /// Whether [`run`] diagonalizes the bulk.
    pub spectrum: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            mode: SpikeMode::Spiked,
            n_test: 10_000,
            spectrum: true,
        }
    }
}

/// A network after the first-layer update and the ridge readout.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    /// Initialization, rows on the unit sphere.
    pub w0: Mat<f64>,
    /// First layer used for the features.
    pub w1: Mat<f64>,
    pub second_layer: SecondLayer,
    /// Ridge readout `â`.
    pub a_hat: Vec<f64>,
    /// Spike coefficients `u`.
    pub u: Vec<f64>,
    /// `θ = W⁰ w*`.
    pub theta: Vec<f64>,
    pub w_star: Vec<f64>,
    /// `‖W¹ − (W⁰ + u w*ᵀ)‖₂` when the gradient step was taken.
    pub spike_deviation: Option<f64>,
}

/// Serializable summary of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub mode: SpikeMode,
    pub eigenvalues: Vec<f64>,
    pub tau: TauSet,
    pub gen_error: Estimate,
    pub spike_deviation: Option<f64>,
}

/// Builds the first layer, trains the readout and returns the features.
pub fn train(cfg: &ExperimentConfig, mode: SpikeMode) -> Result<(TrainedModel, ExtendedFeatures)> {
    let (d, p) = (cfg.d, cfg.p);
    let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES)?;
    let c1 = first_hermite(cfg.activation, &integ);
    let c1_star = first_hermite(cfg.link, &integ);
    let w0 = sample_weights(p, d, &mut stream(cfg.seed, Stream::Weights));
    let w_star = sample_target(d, &mut stream(cfg.seed, Stream::Target));
    let second_layer =
        SecondLayer::sample(&cfg.vocab, p, &mut stream(cfg.seed, Stream::SecondLayer));
    let u = spike_vector(&second_layer.a0, cfg.eta(), c1, c1_star);
    let w_tilde = spiked_approximation(&w0, &u, &w_star);
    let (w1, deviation) = match mode {
        SpikeMode::Spiked => (w_tilde, None),
        SpikeMode::GradientStep => {
            let batch = sample_data(
                cfg.n0_effective(),
                &w_star,
                cfg.link,
                &mut stream(cfg.seed, Stream::StepBatch),
            )?;
            let w1 = gradient_step(&w0, &second_layer.a0, &batch, cfg.eta(), cfg.activation)?;
            let dev = spike_deviation(&w1, &w_tilde)?;
            (w1, Some(dev))
        }
    };
    let train = sample_data(
        cfg.n,
        &w_star,
        cfg.link,
        &mut stream(cfg.seed, Stream::TrainBatch),
    )?;
    let phi = features(&w1, &train.x, cfg.activation);
    let a_hat = ridge_fit(&phi, &train.y, cfg.lambda)?;
    let theta = mat_vec(&w0, &w_star);
    let feats = ExtendedFeatures::new(
        phi,
        train.y,
        train.kappa,
        &second_layer.groups,
        cfg.vocab.k(),
    )?;
    Ok((
        TrainedModel {
            w0,
            w1,
            second_layer,
            a_hat,
            u,
            theta,
            w_star,
            spike_deviation: deviation,
        },
        feats,
    ))
}

/// `κ`-averages `C̄ = E[c₁c₁ᵀ]` and `r̄ = E[r]` at the spike vocabulary.
pub fn spike_averages(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let integ = GaussianIntegrator::new(DEFAULT_INNER_NODES)?;
    let vocab = spike_vocabulary(cfg, &integ);
    let table = CoefficientTable::with_defaults(cfg.activation, &vocab.zeta)?;
    Ok((table.mean_c1_outer(), table.mean_r()))
}

/// Empirical `τ` of a trained model.
pub fn model_tau(cfg: &ExperimentConfig, model: &TrainedModel) -> Result<TauSet> {
    let (c1_bar, r_bar) = spike_averages(cfg)?;
    empirical_tau(
        &model.a_hat,
        &model.second_layer.groups,
        &model.theta,
        &model.w0,
        &c1_bar,
        &r_bar,
    )
}

/// Monte Carlo test error of a trained model.
pub fn model_generror(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    n_test: usize,
) -> Result<Estimate> {
    empirical_generror(
        &model.a_hat,
        &model.w1,
        cfg.activation,
        cfg.link,
        &model.w_star,
        n_test,
        &mut stream(cfg.seed, Stream::Test),
    )
}

/// One seed of the full pipeline, summarized.
pub fn run(cfg: &ExperimentConfig, opts: &SimulationOptions) -> Result<RunArtifact> {
    let (model, feats) = train(cfg, opts.mode)?;
    let eigenvalues = if opts.spectrum {
        bulk_spectrum(&feats.centered)?
    } else {
        Vec::new()
    };
    let tau = model_tau(cfg, &model)?;
    let gen_error = model_generror(cfg, &model, opts.n_test)?;
    Ok(RunArtifact {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        mode: opts.mode,
        eigenvalues,
        tau,
        gen_error,
        spike_deviation: model.spike_deviation,
    })
}
