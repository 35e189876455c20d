//! Exact reverse posterior q(X_t | X₀, X_{t+1}).
//!
//! The posterior factorizes into two independent thinnings: data points thinned
//! away before t+1 are re-added with the thinning posterior, and noise points
//! present at t+1 survive back to t with the noise posterior.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pointset::{superpose, thin_indices, LabeledState};
use crate::schedule::DiffusionSchedule;
use crate::PointSet;

fn check_reverse_step(t: usize, schedule: &DiffusionSchedule) -> Result<()> {
    if t >= schedule.steps() {
        Err(Error::StepOutOfRange {
            t,
            max: schedule.steps() - 1,
        })
    } else {
        Ok(())
    }
}

/// Probability that a data point absent at t+1 was present at t:
/// (ᾱ_t − ᾱ_{t+1}) / (1 − ᾱ_{t+1}).
pub fn thin_posterior_prob(t: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    check_reverse_step(t, schedule)?;
    thin_posterior_from(schedule.alpha_bar(t), schedule.alpha_bar(t + 1))
}

pub(crate) fn thin_posterior_from(alpha_bar_t: f64, alpha_bar_next: f64) -> Result<f64> {
    if alpha_bar_next >= 1.0 {
        return Err(Error::InvalidSchedule(
            "alpha_bar_{t+1} = 1 leaves nothing to re-add".into(),
        ));
    }
    Ok(((alpha_bar_t - alpha_bar_next) / (1.0 - alpha_bar_next)).clamp(0.0, 1.0))
}

/// Probability that a noise point at t+1 was already present at t: β̄_t / β̄_{t+1}.
pub fn noise_posterior_keep_prob(t: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    check_reverse_step(t, schedule)?;
    noise_posterior_from(schedule.beta_bar(t), schedule.beta_bar(t + 1))
}

pub(crate) fn noise_posterior_from(beta_bar_t: f64, beta_bar_next: f64) -> Result<f64> {
    if beta_bar_next <= 0.0 {
        return Err(Error::InvalidSchedule("beta_bar_{t+1} = 0".into()));
    }
    Ok((beta_bar_t / beta_bar_next).clamp(0.0, 1.0))
}

/// Draw X_t ~ q(X_t | X₀, X_{t+1}) for a labeled X_{t+1}.
///
/// The result's retained part lists the points of `x0` it contains, with
/// origins indexing `x0`.
pub fn posterior_sample<R: Rng + ?Sized>(
    x0: &PointSet,
    next: &LabeledState,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<LabeledState> {
    if next.t == 0 {
        return Err(Error::StepOutOfRange {
            t: 0,
            max: schedule.steps(),
        });
    }
    schedule.check_step(next.t)?;
    next.check_against(x0)?;
    let t = next.t - 1;
    let readd_prob = thin_posterior_prob(t, schedule)?;
    let noise_keep = noise_posterior_keep_prob(t, schedule)?;

    let mut present = vec![false; x0.len()];
    for &o in &next.origin {
        present[o] = true;
    }
    let thinned: Vec<usize> = (0..x0.len()).filter(|&i| !present[i]).collect();
    let readded = thin_indices(thinned.len(), readd_prob, rng)?;

    let mut origin = next.origin.clone();
    origin.extend(readded.iter().map(|&k| thinned[k]));
    let retained = x0.select(&origin);

    let kept_noise = thin_indices(next.noise.len(), noise_keep, rng)?;
    let noise = next.noise.select(&kept_noise);
    // Retained and noise parts must stay disjoint.
    superpose(&retained, &noise)?;
    Ok(LabeledState {
        t,
        retained,
        origin,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::Domain;
    use crate::rng::SeedStream;
    use crate::schedule::{make_schedule, ScheduleShape};
    use std::sync::Arc;

    fn sched(alpha_bar: Vec<f64>, beta_bar: Vec<f64>) -> DiffusionSchedule {
        DiffusionSchedule::from_arrays(alpha_bar, beta_bar, 1.0).unwrap()
    }

    #[test]
    fn thin_posterior_hand_values() {
        let s = sched(vec![1.0, 0.8, 0.6, 0.0], vec![0.0, 0.2, 0.4, 1.0]);
        assert!((thin_posterior_prob(1, &s).unwrap() - 0.5).abs() < 1e-15);
        // From the data endpoint every thinned point returns.
        assert_eq!(thin_posterior_prob(0, &s).unwrap(), 1.0);
        assert!(thin_posterior_prob(3, &s).is_err());
        assert_eq!(thin_posterior_from(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(thin_posterior_from(1.0, 0.5).unwrap(), 1.0);
        assert!(thin_posterior_from(1.0, 1.0).is_err());
    }

    #[test]
    fn noise_posterior_hand_values() {
        assert!((noise_posterior_from(0.4, 0.5).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(noise_posterior_from(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(noise_posterior_from(0.0, 0.5).unwrap(), 0.0);
        assert!(noise_posterior_from(0.0, 0.0).is_err());
        let s = sched(vec![1.0, 0.6, 0.5, 0.0], vec![0.0, 0.4, 0.5, 1.0]);
        assert!((noise_posterior_keep_prob(1, &s).unwrap() - 0.8).abs() < 1e-15);
    }

    fn setup() -> (PointSet, DiffusionSchedule) {
        let d = Arc::new(Domain::unit(2, None).unwrap());
        let x0 = PointSet::new(
            d,
            &[
                vec![0.1, 0.1],
                vec![0.2, 0.5],
                vec![0.9, 0.3],
                vec![0.4, 0.8],
            ],
        )
        .unwrap();
        (
            x0,
            make_schedule(10, ScheduleShape::Linear, 4.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn full_retention_without_noise_is_fixed_point() {
        let (x0, s) = setup();
        let mut rng = SeedStream::new(0).rng();
        let mut st = LabeledState::data(&x0);
        st.t = 5;
        let out = posterior_sample(&x0, &st, &s, &mut rng).unwrap();
        assert_eq!(out.t, 4);
        assert!(out.retained.same_set(&x0));
        assert!(out.noise.is_empty());
    }

    #[test]
    fn last_reverse_step_recovers_data() {
        let (x0, s) = setup();
        let mut rng = SeedStream::new(1).rng();
        let noise = crate::schedule::sample_noise(&s, x0.domain(), &mut rng).unwrap();
        let st = LabeledState::all_noise(noise, 1);
        let out = posterior_sample(&x0, &st, &s, &mut rng).unwrap();
        assert_eq!(out.t, 0);
        assert!(out.retained.same_set(&x0));
        assert!(out.noise.is_empty());
        out.check_against(&x0).unwrap();
    }

    #[test]
    fn rejects_inconsistent_labels() {
        let (x0, s) = setup();
        let mut rng = SeedStream::new(2).rng();
        let st = LabeledState {
            t: 3,
            retained: x0.select(&[0]),
            origin: vec![1],
            noise: PointSet::empty(x0.domain().clone()),
        };
        assert!(matches!(
            posterior_sample(&x0, &st, &s, &mut rng),
            Err(Error::InconsistentLabels(_))
        ));
        let st = LabeledState::data(&x0);
        assert!(posterior_sample(&x0, &st, &s, &mut rng).is_err());
    }

    #[test]
    fn reverse_chain_is_monotone() {
        let (x0, s) = setup();
        let mut rng = SeedStream::new(3).rng();
        let noise = crate::schedule::sample_noise(&s, x0.domain(), &mut rng).unwrap();
        let mut st = LabeledState::all_noise(noise, s.steps());
        while st.t > 0 {
            let prev = posterior_sample(&x0, &st, &s, &mut rng).unwrap();
            assert!(st.origin.iter().all(|o| prev.origin.contains(o)));
            assert!(prev.noise.iter().all(|p| st.noise.iter().any(|q| q == p)));
            assert!(prev.noise.len() <= st.noise.len());
            st = prev;
        }
        assert!(st.retained.same_set(&x0));
        assert!(st.noise.is_empty());
    }
}
