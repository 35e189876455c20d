//! Model-agnostic evaluation of generated point sets: sequence-length
//! Wasserstein, count MAE, counting distance, optimal-transport Wasserstein
//! and MMD over set distances.

mod transport;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;

pub use transport::{ot_wasserstein, transport, GroundCost};

/// 1-Wasserstein between two empirical count distributions:
/// Σ_k |CDF_a(k) − CDF_b(k)|.
pub fn sl_wasserstein(counts_a: &[usize], counts_b: &[usize]) -> Result<f64> {
    if counts_a.is_empty() || counts_b.is_empty() {
        return Err(Error::EmptyInput(
            "sequence-length Wasserstein needs counts on both sides".into(),
        ));
    }
    let top = counts_a.iter().chain(counts_b).copied().max().unwrap_or(0);
    let hist = |c: &[usize]| {
        let mut h = vec![0usize; top + 1];
        c.iter().for_each(|&k| h[k] += 1);
        h
    };
    let (ha, hb) = (hist(counts_a), hist(counts_b));
    let (na, nb) = (counts_a.len() as f64, counts_b.len() as f64);
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut total = 0.0;
    for k in 0..top {
        ca += ha[k];
        cb += hb[k];
        total += (ca as f64 / na - cb as f64 / nb).abs();
    }
    Ok(total)
}

/// Cardinalities of a list of sets.
pub fn counts(sets: &[PointSet]) -> Vec<usize> {
    sets.iter().map(PointSet::len).collect()
}

/// Mean absolute cardinality error over paired sets.
pub fn count_mae(generated: &[PointSet], truth: &[PointSet]) -> Result<f64> {
    if generated.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "count MAE needs paired lists, got {} and {}",
            generated.len(),
            truth.len()
        )));
    }
    if generated.is_empty() {
        return Err(Error::EmptyInput("count MAE of no pairs".into()));
    }
    let total: usize = generated
        .iter()
        .zip(truth)
        .map(|(g, t)| g.len().abs_diff(t.len()))
        .sum();
    Ok(total as f64 / generated.len() as f64)
}

fn sorted_by_axis(x: &PointSet, axis: usize) -> Vec<&[f64]> {
    let mut pts: Vec<&[f64]> = x.iter().collect();
    pts.sort_by(|a, b| {
        a[axis].total_cmp(&b[axis]).then_with(|| {
            a.iter()
                .zip(b.iter())
                .enumerate()
                .filter(|(j, _)| *j != axis)
                .map(|(_, (p, q))| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    });
    pts
}

/// Counting distance between two sets on an ordered domain.
///
/// Both sets are sorted along the ordered axis (ties broken by the remaining
/// coordinates in order). With Y the larger set, the first min(|X|,|Y|) points
/// are matched pairwise at L1 cost scaled by 1/d, and each unmatched point of
/// Y pays its L1 distance to the domain's upper corner.
pub fn counting_distance(x: &PointSet, y: &PointSet) -> Result<f64> {
    let domain = x.domain();
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let axis = domain.ordered_axis().ok_or_else(|| {
        Error::InvalidDomain("counting distance requires a domain with an ordered axis".into())
    })?;
    let (x, y) = if x.len() > y.len() { (y, x) } else { (x, y) };
    let xs = sorted_by_axis(x, axis);
    let ys = sorted_by_axis(y, axis);
    let d = domain.dim() as f64;
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let matched: f64 = xs.iter().zip(&ys).map(|(a, b)| l1(a, b)).sum();
    let upper = domain.upper();
    let penalty: f64 = ys[xs.len()..].iter().map(|b| l1(upper, b)).sum();
    Ok(matched / d + penalty)
}

/// Set distance used inside the MMD kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetDistance {
    Wd(GroundCost),
    Cd,
}

impl SetDistance {
    pub fn eval(self, a: &PointSet, b: &PointSet) -> Result<f64> {
        match self {
            SetDistance::Wd(cost) => ot_wasserstein(a, b, cost),
            SetDistance::Cd => counting_distance(a, b),
        }
    }
}

/// MMD estimate together with the kernel bandwidth it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdResult {
    pub value: f64,
    pub bandwidth: f64,
}

/// Symmetric matrix of set distances over `sets`, rows computed in parallel.
pub fn distance_matrix(sets: &[&PointSet], dist: SetDistance) -> Result<Vec<Vec<f64>>> {
    let n = sets.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| dist.eval(sets[i], sets[j]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut full = vec![vec![0.0; n]; n];
    for i in 0..n {
        for (k, v) in upper[i].iter().enumerate() {
            full[i][i + 1 + k] = *v;
            full[i + 1 + k][i] = *v;
        }
    }
    Ok(full)
}

/// Median of the strictly-upper-triangular entries.
pub fn median_heuristic(dist: &[Vec<f64>]) -> f64 {
    let mut v: Vec<f64> = dist
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row[i + 1..].iter().copied())
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Biased MMD between two samples of point sets under the Gaussian
/// distance-substitution kernel exp(−d²/(2σ²)).
///
/// σ defaults to the median pairwise distance of the pooled sample; when that
/// is zero the samples are indistinguishable and the result is 0.
pub fn mmd(
    sets_a: &[PointSet],
    sets_b: &[PointSet],
    dist: SetDistance,
    bandwidth: Option<f64>,
) -> Result<MmdResult> {
    if sets_a.is_empty() || sets_b.is_empty() {
        return Err(Error::EmptyInput("MMD needs sets on both sides".into()));
    }
    if let Some(s) = bandwidth {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {s}"
            )));
        }
    }
    let pooled: Vec<&PointSet> = sets_a.iter().chain(sets_b).collect();
    let d = distance_matrix(&pooled, dist)?;
    let sigma = bandwidth.unwrap_or_else(|| median_heuristic(&d));
    if sigma == 0.0 {
        return Ok(MmdResult {
            value: 0.0,
            bandwidth: 0.0,
        });
    }
    let (na, nb) = (sets_a.len(), sets_b.len());
    let k = |v: f64| (-(v * v) / (2.0 * sigma * sigma)).exp();
    let block = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| -> f64 {
        let mut s = 0.0;
        for i in rows {
            for j in cols.clone() {
                s += k(d[i][j]);
            }
        }
        s
    };
    let kaa = block(0..na, 0..na);
    let kbb = block(na..na + nb, na..na + nb);
    let kab = block(0..na, na..na + nb);
    let (fa, fb) = (na as f64, nb as f64);
    let sq = kaa / (fa * fa) + kbb / (fb * fb) - 2.0 * (kab / (fa * fb));
    Ok(MmdResult {
        value: sq.max(0.0).sqrt(),
        bandwidth: sigma,
    })
}

/// One evaluated metric, as written to the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub bandwidth: Option<f64>,
    pub seed: Option<u64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "metric,value,n_a,n_b,bandwidth,seed";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.metric,
            self.value,
            self.n_a,
            self.n_b,
            opt(self.bandwidth.map(|b| b.to_string())),
            opt(self.seed.map(|s| s.to_string()))
        )
    }
}

/// Metric names accepted by [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Sl,
    Mae,
    Cd,
    Wd,
    MmdWd,
    MmdCd,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Sl,
        Metric::Mae,
        Metric::Cd,
        Metric::Wd,
        Metric::MmdWd,
        Metric::MmdCd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Sl => "sl",
            Metric::Mae => "mae",
            Metric::Cd => "cd",
            Metric::Wd => "wd",
            Metric::MmdWd => "mmd_wd",
            Metric::MmdCd => "mmd_cd",
        }
    }

    /// Whether the metric needs an ordered axis.
    pub fn needs_order(self) -> bool {
        matches!(self, Metric::Cd | Metric::MmdCd)
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn nonempty(sets: &[PointSet]) -> Vec<PointSet> {
    sets.iter().filter(|s| !s.is_empty()).cloned().collect()
}

/// Evaluate `metric` between generated sets and reference sets.
///
/// `mae`, `cd` and `wd` pair `generated[i]` with `truth[i]` and average over
/// pairs. Since the Wasserstein distance is undefined against an empty set,
/// `wd` skips pairs with exactly one empty side and `mmd_wd` drops empty sets
/// from both samples; `n_a`/`n_b` report the number of sets actually used.
pub fn evaluate(
    metric: Metric,
    generated: &[PointSet],
    truth: &[PointSet],
    ground: GroundCost,
) -> Result<MetricReport> {
    let report = |value: f64, n_a: usize, n_b: usize, bandwidth: Option<f64>| MetricReport {
        metric: metric.name().into(),
        value,
        n_a,
        n_b,
        bandwidth,
        seed: None,
    };
    let paired = || -> Result<()> {
        if generated.len() != truth.len() {
            return Err(Error::InvalidArgument(format!(
                "{metric} pairs sets, got {} generated and {} reference",
                generated.len(),
                truth.len()
            )));
        }
        if generated.is_empty() {
            return Err(Error::EmptyInput(format!("{metric} of no pairs")));
        }
        Ok(())
    };
    match metric {
        Metric::Sl => Ok(report(
            sl_wasserstein(&counts(generated), &counts(truth))?,
            generated.len(),
            truth.len(),
            None,
        )),
        Metric::Mae => Ok(report(
            count_mae(generated, truth)?,
            generated.len(),
            truth.len(),
            None,
        )),
        Metric::Cd => {
            paired()?;
            let total = generated
                .par_iter()
                .zip(truth)
                .map(|(g, t)| counting_distance(g, t))
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum::<f64>();
            Ok(report(
                total / generated.len() as f64,
                generated.len(),
                truth.len(),
                None,
            ))
        }
        Metric::Wd => {
            paired()?;
            let values = generated
                .par_iter()
                .zip(truth)
                .filter(|(g, t)| g.is_empty() == t.is_empty())
                .map(|(g, t)| ot_wasserstein(g, t, ground))
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(Error::EmptyInput(
                    "wd: every pair has exactly one empty side".into(),
                ));
            }
            let n = values.len();
            Ok(report(values.iter().sum::<f64>() / n as f64, n, n, None))
        }
        Metric::MmdWd => {
            let (a, b) = (nonempty(generated), nonempty(truth));
            let r = mmd(&a, &b, SetDistance::Wd(ground), None)?;
            Ok(report(r.value, a.len(), b.len(), Some(r.bandwidth)))
        }
        Metric::MmdCd => {
            let r = mmd(generated, truth, SetDistance::Cd, None)?;
            Ok(report(
                r.value,
                generated.len(),
                truth.len(),
                Some(r.bandwidth),
            ))
        }
    }
}
