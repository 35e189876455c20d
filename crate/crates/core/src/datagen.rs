//! Synthetic ground-truth processes: homogeneous and inhomogeneous Poisson,
//! a spatio-temporal Hawkes process, and a pinwheel-shaped Hawkes variant.
//!
//! Hawkes processes run on the domain's ordered axis with exponential kernel
//! α·exp(−β s). Background events are placed uniformly (or on the pinwheel);
//! each triggered event is placed at a Gaussian offset from its parent and
//! clamped into the box.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::{sample_poisson, Domain, PointSet};
use crate::rng::SeedStream;

/// One isotropic Gaussian bump of an intensity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    /// Intensity added at the center.
    pub peak: f64,
}

/// A nonnegative intensity λ(x) on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateField {
    Constant {
        rate: f64,
    },
    /// `below` where x[axis] < threshold, `above` elsewhere.
    Step {
        axis: usize,
        threshold: f64,
        below: f64,
        above: f64,
    },
    Clusters {
        base: f64,
        bumps: Vec<Bump>,
    },
}

impl RateField {
    pub fn rate(&self, x: &[f64]) -> f64 {
        match self {
            RateField::Constant { rate } => *rate,
            RateField::Step {
                axis,
                threshold,
                below,
                above,
            } => {
                if x[*axis] < *threshold {
                    *below
                } else {
                    *above
                }
            }
            RateField::Clusters { base, bumps } => {
                base + bumps
                    .iter()
                    .map(|b| {
                        let r2: f64 = x
                            .iter()
                            .zip(&b.center)
                            .map(|(p, c)| (p - c) * (p - c))
                            .sum();
                        b.peak * (-r2 / (2.0 * b.width * b.width)).exp()
                    })
                    .sum::<f64>()
            }
        }
    }

    /// An upper bound on the field over the whole space.
    pub fn bound(&self) -> f64 {
        match self {
            RateField::Constant { rate } => *rate,
            RateField::Step { below, above, .. } => below.max(*above),
            RateField::Clusters { base, bumps } => base + bumps.iter().map(|b| b.peak).sum::<f64>(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let nonneg = |v: f64, what: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must be finite and nonnegative, got {v}"
                )))
            }
        };
        match self {
            RateField::Constant { rate } => nonneg(*rate, "rate"),
            RateField::Step {
                axis, below, above, ..
            } => {
                if *axis >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "step axis {axis} out of range"
                    )));
                }
                nonneg(*below, "rate")?;
                nonneg(*above, "rate")
            }
            RateField::Clusters { base, bumps } => {
                nonneg(*base, "base rate")?;
                for b in bumps {
                    nonneg(b.peak, "peak rate")?;
                    if b.center.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: b.center.len(),
                        });
                    }
                    if !(b.width > 0.0 && b.width.is_finite()) {
                        return Err(Error::InvalidArgument("bump width must be positive".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Three Gaussian clusters on a 2D box, scaled so the expected count is
    /// about `expected` (bumps are narrow enough that truncation at the
    /// boundary is negligible).
    pub fn three_clusters(domain: &Domain, expected: f64) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::InvalidArgument(
                "three-cluster field is two-dimensional".into(),
            ));
        }
        let (lo, hi) = (domain.lower(), domain.upper());
        let at = |u: f64, v: f64| vec![lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])];
        let width = 0.07 * (hi[0] - lo[0]).min(hi[1] - lo[1]);
        let peak = expected / (3.0 * 2.0 * PI * width * width);
        let bumps = [(0.25, 0.3), (0.72, 0.25), (0.5, 0.75)]
            .into_iter()
            .map(|(u, v)| Bump {
                center: at(u, v),
                width,
                peak,
            })
            .collect();
        Ok(RateField::Clusters { base: 0.0, bumps })
    }
}

/// Lewis thinning: a homogeneous sample at `rate_max`, each point kept with
/// probability λ(x)/rate_max.
pub fn gen_inhomogeneous_poisson<R: Rng + ?Sized>(
    field: &RateField,
    rate_max: f64,
    domain: &Arc<Domain>,
    rng: &mut R,
) -> Result<PointSet> {
    let base = sample_poisson(domain, rate_max, rng)?;
    let mut keep = Vec::new();
    for (i, p) in base.iter().enumerate() {
        let r = field.rate(p);
        if !(r >= 0.0) || r > rate_max {
            return Err(Error::InvalidArgument(format!(
                "rate field is {r} at {p:?}, outside [0, {rate_max}]"
            )));
        }
        if rng.random::<f64>() * rate_max < r {
            keep.push(i);
        }
    }
    Ok(base.select(&keep))
}

/// Parameters of the spatio-temporal Hawkes process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesParams {
    /// Background rate per unit time.
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Standard deviation of offspring displacement in each spatial axis.
    pub spatial_width: f64,
}

impl HawkesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.alpha >= 0.0 && self.beta > 0.0 && self.spatial_width > 0.0)
            || !(self.mu.is_finite() && self.alpha.is_finite() && self.beta.is_finite())
        {
            return Err(Error::InvalidArgument(
                "Hawkes needs mu, alpha >= 0 and beta, spatial_width > 0".into(),
            ));
        }
        if self.alpha / self.beta >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "unstable Hawkes process: alpha/beta = {} >= 1",
                self.alpha / self.beta
            )));
        }
        Ok(())
    }

    /// Expected number of events on a window of length `span` started empty.
    pub fn expected_count(&self, span: f64) -> f64 {
        let n = self.alpha / self.beta;
        let k = self.beta * (1.0 - n);
        self.mu * span / (1.0 - n) - self.mu * n / (k * (1.0 - n)) * (1.0 - (-k * span).exp())
    }
}

/// Shape of the pinwheel used to place background events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinwheelParams {
    pub arms: usize,
    pub radial_std: f64,
    pub tangential_std: f64,
    /// How strongly the arms curl with radius.
    pub rate: f64,
}

impl Default for PinwheelParams {
    fn default() -> Self {
        PinwheelParams {
            arms: 5,
            radial_std: 0.3,
            tangential_std: 0.05,
            rate: 0.25,
        }
    }
}

impl PinwheelParams {
    /// A point in the pinwheel's native coordinates (radius roughly ≤ 2).
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let arm = rng.random_range(0..self.arms.max(1));
        let r: f64 = 1.0 + self.radial_std * Distribution::<f64>::sample(&StandardNormal, rng);
        let s: f64 = self.tangential_std * Distribution::<f64>::sample(&StandardNormal, rng);
        let angle = 2.0 * PI * arm as f64 / self.arms.max(1) as f64 + self.rate * r.exp();
        let (sin, cos) = angle.sin_cos();
        [r * cos - s * sin, r * sin + s * cos]
    }
}

fn spatial_axes(domain: &Domain) -> Result<(usize, Vec<usize>)> {
    let time = domain.ordered_axis().ok_or_else(|| {
        Error::InvalidDomain("Hawkes generators need a domain with an ordered (time) axis".into())
    })?;
    Ok((time, (0..domain.dim()).filter(|&j| j != time).collect()))
}

fn hawkes_with<R: Rng + ?Sized>(
    params: &HawkesParams,
    domain: &Arc<Domain>,
    rng: &mut R,
    background: &mut dyn FnMut(&mut R) -> Vec<f64>,
) -> Result<PointSet> {
    params.validate()?;
    let (time, space) = spatial_axes(domain)?;
    let (t0, t1) = (domain.lower()[time], domain.upper()[time]);
    let mut times: Vec<f64> = Vec::new();
    let mut places: Vec<Vec<f64>> = Vec::new();
    let excite = |times: &[f64], t: f64| -> Vec<f64> {
        times
            .iter()
            .map(|ti| params.alpha * (-params.beta * (t - ti)).exp())
            .collect()
    };
    let mut t = t0;
    loop {
        let bound = params.mu + excite(&times, t).iter().sum::<f64>();
        if bound <= 0.0 {
            break;
        }
        t += Exp::new(bound).expect("positive rate").sample(rng);
        if t > t1 {
            break;
        }
        let parts = excite(&times, t);
        let lambda = params.mu + parts.iter().sum::<f64>();
        if rng.random::<f64>() * bound > lambda {
            continue;
        }
        let mut u = rng.random::<f64>() * lambda;
        let place = if u < params.mu {
            background(rng)
        } else {
            u -= params.mu;
            let mut parent = parts.len() - 1;
            for (i, w) in parts.iter().enumerate() {
                if u < *w {
                    parent = i;
                    break;
                }
                u -= w;
            }
            places[parent]
                .iter()
                .zip(&space)
                .map(|(c, &j)| {
                    let z: f64 = Distribution::<f64>::sample(&StandardNormal, rng);
                    (c + params.spatial_width * z).clamp(domain.lower()[j], domain.upper()[j])
                })
                .collect()
        };
        times.push(t);
        places.push(place);
    }
    let mut coords = Vec::with_capacity(times.len() * domain.dim());
    for (t, place) in times.iter().zip(&places) {
        let mut p = vec![0.0; domain.dim()];
        p[time] = *t;
        for (v, &j) in place.iter().zip(&space) {
            p[j] = *v;
        }
        coords.extend(p);
    }
    PointSet::from_flat(domain.clone(), coords)
}

/// Temporal Hawkes process by Ogata thinning, with uniform background
/// locations and Gaussian offspring displacement.
pub fn gen_hawkes_st<R: Rng + ?Sized>(
    params: &HawkesParams,
    domain: &Arc<Domain>,
    rng: &mut R,
) -> Result<PointSet> {
    let (_, space) = spatial_axes(domain)?;
    let d = domain.clone();
    hawkes_with(params, domain, rng, &mut |rng: &mut R| {
        space
            .iter()
            .map(|&j| rng.random_range(d.lower()[j]..=d.upper()[j]))
            .collect()
    })
}

/// Hawkes arrivals whose background events sit on a pinwheel spanning the
/// two spatial axes. Needs a three-dimensional (time, x, y) domain.
pub fn gen_pinwheel_hawkes<R: Rng + ?Sized>(
    params: &HawkesParams,
    pinwheel: &PinwheelParams,
    domain: &Arc<Domain>,
    rng: &mut R,
) -> Result<PointSet> {
    let (_, space) = spatial_axes(domain)?;
    if space.len() != 2 {
        return Err(Error::InvalidDomain(
            "pinwheel needs exactly two spatial axes".into(),
        ));
    }
    if pinwheel.arms == 0 {
        return Err(Error::InvalidArgument(
            "pinwheel needs at least one arm".into(),
        ));
    }
    let d = domain.clone();
    hawkes_with(params, domain, rng, &mut |rng: &mut R| {
        let q = pinwheel.draw(rng);
        space
            .iter()
            .zip(q)
            .map(|(&j, v)| {
                let (lo, hi) = (d.lower()[j], d.upper()[j]);
                (0.5 * (lo + hi) + 0.5 * (hi - lo) * v / 2.2).clamp(lo, hi)
            })
            .collect()
    })
}

/// Which process to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    HomogeneousPoisson {
        rate: f64,
    },
    InhomogeneousPoisson {
        field: RateField,
    },
    HawkesSt {
        hawkes: HawkesParams,
    },
    PinwheelHawkes {
        hawkes: HawkesParams,
        pinwheel: PinwheelParams,
    },
}

/// A complete recipe for a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub process: ProcessSpec,
    pub domain: Domain,
    pub num_instances: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.process {
            ProcessSpec::HomogeneousPoisson { rate } => {
                RateField::Constant { rate: *rate }.validate(self.domain.dim())
            }
            ProcessSpec::InhomogeneousPoisson { field } => field.validate(self.domain.dim()),
            ProcessSpec::HawkesSt { hawkes } | ProcessSpec::PinwheelHawkes { hawkes, .. } => {
                spatial_axes(&self.domain)?;
                hawkes.validate()
            }
        }
    }

    /// Draw one instance from `stream`.
    pub fn sample_one(&self, domain: &Arc<Domain>, stream: SeedStream) -> Result<PointSet> {
        let mut rng = stream.rng();
        match &self.process {
            ProcessSpec::HomogeneousPoisson { rate } => sample_poisson(domain, *rate, &mut rng),
            ProcessSpec::InhomogeneousPoisson { field } => {
                gen_inhomogeneous_poisson(field, field.bound(), domain, &mut rng)
            }
            ProcessSpec::HawkesSt { hawkes } => gen_hawkes_st(hawkes, domain, &mut rng),
            ProcessSpec::PinwheelHawkes { hawkes, pinwheel } => {
                gen_pinwheel_hawkes(hawkes, pinwheel, domain, &mut rng)
            }
        }
    }

    /// All instances, generated in parallel; instance i uses stream child i.
    pub fn generate(&self) -> Result<Vec<PointSet>> {
        self.validate()?;
        let domain = Arc::new(self.domain.clone());
        let root = SeedStream::new(self.seed);
        (0..self.num_instances)
            .into_par_iter()
            .map(|i| self.sample_one(&domain, root.child(i as u64)))
            .collect()
    }
}
