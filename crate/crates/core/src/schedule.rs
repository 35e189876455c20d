//! Noise schedules and the forward chain: progressive thinning of data points
//! plus progressive superposition of noise points.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::{sample_poisson, thin_indices, Domain, LabeledState, PointSet};

/// Smallest cumulative keep probability; ᾱ_T sits exactly here.
pub const ALPHA_BAR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Linear,
    Cosine,
}

impl std::str::FromStr for ScheduleShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleShape::Linear),
            "cosine" => Ok(ScheduleShape::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule shape {other:?} (expected linear or cosine)"
            ))),
        }
    }
}

impl std::fmt::Display for ScheduleShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleShape::Linear => "linear",
            ScheduleShape::Cosine => "cosine",
        })
    }
}

/// Cumulative schedules ᾱ_t, β̄_t for t = 0..=T plus the noise intensity λ^ε.
///
/// Index 0 is the data endpoint: ᾱ_0 = 1 and β̄_0 = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
    beta_bar: Vec<f64>,
    noise_rate: f64,
}

#[derive(Deserialize)]
struct ScheduleRepr {
    alpha_bar: Vec<f64>,
    beta_bar: Vec<f64>,
    noise_rate: f64,
}

impl TryFrom<ScheduleRepr> for DiffusionSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        DiffusionSchedule::from_arrays(r.alpha_bar, r.beta_bar, r.noise_rate)
    }
}

/// Build a schedule with ᾱ_t + β̄_t = 1, calibrated so that the noise process
/// carries `expected_count` points over a domain of `domain_volume`.
pub fn make_schedule(
    steps: usize,
    shape: ScheduleShape,
    expected_count: f64,
    domain_volume: f64,
) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::InvalidSchedule(format!(
            "need at least 2 steps, got {steps}"
        )));
    }
    if !(expected_count.is_finite() && expected_count > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "expected count must be positive, got {expected_count}"
        )));
    }
    if !(domain_volume.is_finite() && domain_volume > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "domain volume must be positive, got {domain_volume}"
        )));
    }
    let t_max = steps as f64;
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    for t in 1..steps {
        let s = t as f64 / t_max;
        let raw = match shape {
            ScheduleShape::Linear => 1.0 - s,
            ScheduleShape::Cosine => (std::f64::consts::FRAC_PI_2 * s).cos().powi(2),
        };
        alpha_bar.push(raw.clamp(ALPHA_BAR_FLOOR, 1.0 - ALPHA_BAR_FLOOR));
    }
    alpha_bar.push(ALPHA_BAR_FLOOR);
    let mut beta_bar: Vec<f64> = alpha_bar.iter().map(|a| 1.0 - a).collect();
    beta_bar[steps] = 1.0;
    DiffusionSchedule::from_arrays(alpha_bar, beta_bar, expected_count / domain_volume)
}

impl DiffusionSchedule {
    /// Validating constructor from explicit cumulative arrays of length T+1.
    pub fn from_arrays(alpha_bar: Vec<f64>, beta_bar: Vec<f64>, noise_rate: f64) -> Result<Self> {
        let n = alpha_bar.len();
        if n < 3 || beta_bar.len() != n {
            return Err(Error::InvalidSchedule(format!(
                "need matching arrays of length T+1 >= 3, got {} and {}",
                n,
                beta_bar.len()
            )));
        }
        if alpha_bar[0] != 1.0 || beta_bar[0] != 0.0 {
            return Err(Error::InvalidSchedule(
                "t = 0 must have alpha_bar = 1 and beta_bar = 0".into(),
            ));
        }
        if beta_bar[n - 1] != 1.0 {
            return Err(Error::InvalidSchedule(
                "beta_bar_T must be exactly 1".into(),
            ));
        }
        if !(alpha_bar[n - 1] <= 1e-3) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_bar_T = {} is not close to 0",
                alpha_bar[n - 1]
            )));
        }
        for t in 1..n {
            let (a, b) = (alpha_bar[t], beta_bar[t]);
            if !(a.is_finite()
                && b.is_finite()
                && (0.0..=1.0).contains(&a)
                && (0.0..=1.0).contains(&b))
            {
                return Err(Error::InvalidSchedule(format!(
                    "t = {t}: values outside [0, 1]"
                )));
            }
            if !(a < alpha_bar[t - 1]) {
                return Err(Error::InvalidSchedule(format!(
                    "alpha_bar must strictly decrease (t = {t}: {a} after {})",
                    alpha_bar[t - 1]
                )));
            }
            if b < beta_bar[t - 1] {
                return Err(Error::InvalidSchedule(format!(
                    "beta_bar must not decrease (t = {t})"
                )));
            }
        }
        if !(noise_rate.is_finite() && noise_rate >= 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "noise rate must be finite and nonnegative, got {noise_rate}"
            )));
        }
        Ok(DiffusionSchedule {
            alpha_bar,
            beta_bar,
            noise_rate,
        })
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn beta_bar(&self, t: usize) -> f64 {
        self.beta_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_bars(&self) -> &[f64] {
        &self.beta_bar
    }

    /// Per-step keep probability α_t = ᾱ_t / ᾱ_{t-1}, t ≥ 1.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar[t] / self.alpha_bar[t - 1]
    }

    /// Per-step noise increment β_t = β̄_t − β̄_{t-1}, t ≥ 1.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta_bar[t] - self.beta_bar[t - 1]
    }

    /// λ^ε in points per unit volume.
    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    /// The same chain with a different noise intensity.
    pub fn with_noise_rate(&self, noise_rate: f64) -> Result<Self> {
        Self::from_arrays(self.alpha_bar.clone(), self.beta_bar.clone(), noise_rate)
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::StepOutOfRange {
                t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }
}

/// X_T^ε ~ p_noise: homogeneous Poisson with intensity λ^ε.
pub fn sample_noise<R: Rng + ?Sized>(
    schedule: &DiffusionSchedule,
    domain: &Arc<Domain>,
    rng: &mut R,
) -> Result<PointSet> {
    sample_poisson(domain, schedule.noise_rate(), rng)
}

/// One forward transition q(X_{t+1} | X_t).
pub fn forward_step<R: Rng + ?Sized>(
    state: &LabeledState,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<LabeledState> {
    if state.t >= schedule.steps() {
        return Err(Error::StepOutOfRange {
            t: state.t + 1,
            max: schedule.steps(),
        });
    }
    let next = state.t + 1;
    let kept = thin_indices(state.retained.len(), schedule.alpha(next).min(1.0), rng)?;
    let domain = state.noise.domain();
    let fresh = sample_poisson(domain, schedule.beta(next) * schedule.noise_rate(), rng)?;
    Ok(LabeledState {
        t: next,
        retained: state.retained.select(&kept),
        origin: kept.iter().map(|&i| state.origin[i]).collect(),
        noise: crate::pointset::superpose(&state.noise, &fresh)?,
    })
}

/// Direct draw from the marginal q(X_t | X₀).
pub fn forward_marginal<R: Rng + ?Sized>(
    x0: &PointSet,
    t: usize,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<LabeledState> {
    schedule.check_step(t)?;
    let kept = thin_indices(x0.len(), schedule.alpha_bar(t), rng)?;
    let noise = sample_poisson(
        x0.domain(),
        schedule.beta_bar(t) * schedule.noise_rate(),
        rng,
    )?;
    Ok(LabeledState {
        t,
        retained: x0.select(&kept),
        origin: kept,
        noise,
    })
}
