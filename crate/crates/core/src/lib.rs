//! Diffusion-based generative modelling of point sets on bounded boxes.
//!
//! The forward chain interpolates between a data point set and a Poisson
//! noise set by independently thinning data points and superposing noise
//! points. Generation runs the chain backwards, alternating a learned
//! estimate of the clean set with the exact thinning/noise posteriors.
//!
//! Layout:
//!
//! - [`pointset`]: domains, point sets, masks, counting, superposition, thinning
//! - [`schedule`]: noise schedules and the forward chain
//! - [`posterior`]: exact reverse posterior
//! - [`nn`]: reverse-mode autodiff and the layers the denoiser is built from
//! - [`denoiser`]: neural and oracle estimators of the clean set
//! - [`training`]: training loop with early stopping
//! - [`sampling`]: unconditional and mask-conditional generation
//! - [`metrics`]: distances between point sets and between distributions of them
//! - [`datagen`], [`io`]: synthetic processes and file formats

pub mod datagen;
pub mod denoiser;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pointset;
pub mod posterior;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod training;

pub use denoiser::{Denoiser, DenoiserConfig, DenoiserOutput, NeuralDenoiser, OracleDenoiser};
pub use error::{Error, Result};
pub use io::{Dataset, ModelFile};
pub use metrics::{evaluate, GroundCost, Metric, MetricReport};
pub use pointset::{
    count, sample_poisson, split_by_mask, superpose, thin, AxisBox, Domain, LabeledState, Mask,
    PointSet,
};
pub use posterior::{noise_posterior_keep_prob, posterior_sample, thin_posterior_prob};
pub use rng::SeedStream;
pub use sampling::{sample_batch, sample_conditional, sample_unconditional, SampleTask};
pub use schedule::{
    forward_marginal, forward_step, make_schedule, sample_noise, DiffusionSchedule, ScheduleShape,
};
pub use training::{train, EvalMetric, TrainConfig, TrainHistory};
