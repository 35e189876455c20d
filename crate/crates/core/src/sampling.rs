//! Unconditional and mask-conditional generation by running the reverse chain.
//!
//! Randomness for instance `i` comes from `stream.child(i)`, and step `t` of
//! that instance draws from a further child `t` (the initial noise uses child
//! 0). Results therefore do not depend on how instances are spread over
//! worker threads.

use rayon::prelude::*;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::pointset::{split_by_mask, superpose, Mask, PointSet};
use crate::posterior::posterior_sample;
use crate::rng::SeedStream;
use crate::schedule::{forward_marginal, sample_noise, DiffusionSchedule};

/// One reverse-chain step: X̃₀ ~ p(X₀ | X_t), then X_{t−1} ~ q(X_{t−1} | X̃₀, X_t).
fn reverse_step(
    model: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    xt: &PointSet,
    t: usize,
    rng: &mut crate::rng::Rng,
) -> Result<PointSet> {
    let est = model.sample_x0_hat(xt, t, rng)?;
    let state = est.label(xt, t);
    Ok(posterior_sample(&est.x0, &state, schedule, rng)?.latent())
}

/// Draw one unconditional sample using exactly T denoiser evaluations.
pub fn sample_one(
    model: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    stream: SeedStream,
) -> Result<PointSet> {
    let steps = schedule.steps();
    let mut xt = sample_noise(schedule, model.domain(), &mut stream.child(0).rng())?;
    for t in (2..=steps).rev() {
        xt = reverse_step(model, schedule, &xt, t, &mut stream.child(t as u64).rng())?;
    }
    Ok(model.sample_x0_hat(&xt, 1, &mut stream.child(1).rng())?.x0)
}

/// Draw `num` unconditional samples sequentially.
pub fn sample_unconditional(
    model: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    stream: SeedStream,
    num: usize,
) -> Result<Vec<PointSet>> {
    if num == 0 {
        return Err(Error::InvalidArgument(
            "number of samples must be at least 1".into(),
        ));
    }
    (0..num)
        .map(|i| sample_one(model, schedule, stream.child(i as u64)))
        .collect()
}

/// Generate the complement C′ of a partially known set.
///
/// At every step the C-region of the latent is replaced by a fresh forward
/// marginal of `known`, while the C′-region follows the model chain. Returns
/// only points with C(x) = 0.
pub fn sample_conditional(
    model: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    known: &PointSet,
    mask: &Mask,
    stream: SeedStream,
) -> Result<PointSet> {
    mask.check_dim(model.domain().dim())?;
    if known.dim() != model.domain().dim() {
        return Err(Error::DimensionMismatch {
            expected: model.domain().dim(),
            got: known.dim(),
        });
    }
    if let Some(p) = known.iter().find(|p| !mask.contains(p)) {
        return Err(Error::MaskViolation(format!(
            "known point {p:?} lies outside the conditioning mask"
        )));
    }
    let known = PointSet::new(model.domain().clone(), &known.to_vecs())?;
    let steps = schedule.steps();
    let mut xt = sample_noise(schedule, model.domain(), &mut stream.child(0).rng())?;
    for t in (1..=steps).rev() {
        let mut rng = stream.child(t as u64).rng();
        let model_prev = reverse_step(model, schedule, &xt, t, &mut rng)?;
        let known_prev = forward_marginal(&known, t - 1, schedule, &mut rng)?.latent();
        let (_, free) = split_by_mask(&model_prev, mask);
        let (cond, _) = split_by_mask(&known_prev, mask);
        xt = superpose(&free, &cond)?;
    }
    Ok(split_by_mask(&xt, mask).1)
}

/// A unit of work for [`sample_batch`].
#[derive(Debug, Clone)]
pub enum SampleTask {
    Unconditional,
    Conditional { known: PointSet, mask: Mask },
}

/// Run `tasks` on a pool of `workers` threads; task `i` draws from
/// `stream.child(i)`, so output is identical for every worker count.
pub fn sample_batch(
    model: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    tasks: &[SampleTask],
    stream: SeedStream,
    workers: usize,
) -> Result<Vec<PointSet>> {
    if workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    let run = |(i, task): (usize, &SampleTask)| {
        let s = stream.child(i as u64);
        match task {
            SampleTask::Unconditional => sample_one(model, schedule, s),
            SampleTask::Conditional { known, mask } => {
                sample_conditional(model, schedule, known, mask, s)
            }
        }
    };
    if workers == 1 {
        return tasks.iter().enumerate().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| tasks.par_iter().enumerate().map(run).collect())
}
