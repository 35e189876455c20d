//! Exact 1-Wasserstein distance between uniform empirical measures on two
//! finite point sets.
//!
//! Masses are scaled to integers (|Y| per point of X, |X| per point of Y) so
//! the problem becomes an integral transportation problem, solved exactly by
//! successive shortest augmenting paths with Johnson potentials.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;

/// Ground metric on the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroundCost {
    L1,
    #[default]
    L2,
}

impl GroundCost {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundCost::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            GroundCost::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

impl std::str::FromStr for GroundCost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(GroundCost::L1),
            "l2" => Ok(GroundCost::L2),
            other => Err(Error::InvalidArgument(format!(
                "unknown ground cost {other:?}"
            ))),
        }
    }
}

fn cmp_sets(a: &PointSet, b: &PointSet) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// W₁ between the uniform measures on `x` and `y`.
///
/// Symmetric bitwise: the arguments are put in a canonical order first.
pub fn ot_wasserstein(x: &PointSet, y: &PointSet, cost: GroundCost) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if x.is_empty() || y.is_empty() {
        if x.is_empty() && y.is_empty() {
            return Ok(0.0);
        }
        return Err(Error::EmptyInput(
            "Wasserstein distance between an empty and a nonempty set is undefined".into(),
        ));
    }
    let (x, y) = match cmp_sets(x, y) {
        Ordering::Greater => (y, x),
        _ => (x, y),
    };
    let costs: Vec<Vec<f64>> = x
        .iter()
        .map(|p| y.iter().map(|q| cost.distance(p, q)).collect())
        .collect();
    let flow = transport(&costs, y.len() as u64, x.len() as u64);
    let mut total = 0.0;
    for (i, row) in flow.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            if *f > 0 {
                total += *f as f64 * costs[i][j];
            }
        }
    }
    Ok(total / (x.len() * y.len()) as f64)
}

/// Minimum-cost flow for a balanced transportation problem where every source
/// supplies `supply` and every sink demands `demand`
/// (`rows·supply == cols·demand`). Returns the integral flow matrix.
pub fn transport(costs: &[Vec<f64>], supply: u64, demand: u64) -> Vec<Vec<u64>> {
    let n = costs.len();
    let m = costs.first().map_or(0, Vec::len);
    debug_assert_eq!(n as u64 * supply, m as u64 * demand);
    let mut flow = vec![vec![0u64; m]; n];
    let mut left = vec![supply; n];
    let mut need = vec![demand; m];
    // Potentials for sources (0..n) and sinks (n..n+m).
    let mut pot = vec![0.0f64; n + m];
    let mut remaining = n as u64 * supply;

    let mut dist = vec![f64::INFINITY; n + m];
    let mut parent = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];
    while remaining > 0 {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n {
            if left[i] > 0 {
                dist[i] = 0.0;
            }
        }
        // Dense Dijkstra over reduced costs.
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n + m {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (costs[u][j] + pot[u] - pot[v]).max(0.0);
                    if best + rc < dist[v] {
                        dist[v] = best + rc;
                        parent[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[i][j] == 0 {
                        continue;
                    }
                    let rc = (-costs[i][j] + pot[u] - pot[i]).max(0.0);
                    if best + rc < dist[i] {
                        dist[i] = best + rc;
                        parent[i] = u;
                    }
                }
            }
        }
        let sink = (0..m)
            .filter(|&j| need[j] > 0)
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .expect("balanced problem leaves an open sink");
        let reach = dist[n + sink];
        for v in 0..n + m {
            pot[v] += dist[v].min(reach);
        }

        // Bottleneck along the path back to a source with remaining supply.
        let mut amount = need[sink];
        let mut v = n + sink;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u >= n {
                // Sink u → source v runs backwards over flow[v][u - n].
                amount = amount.min(flow[v][u - n]);
            }
            v = u;
        }
        amount = amount.min(left[v]);
        let start = v;

        let mut v = n + sink;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u < n {
                flow[u][v - n] += amount;
            } else {
                flow[v][u - n] -= amount;
            }
            v = u;
        }
        left[start] -= amount;
        need[sink] -= amount;
        remaining -= amount;
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::Domain;
    use std::sync::Arc;

    fn set(d: &Arc<Domain>, pts: &[[f64; 2]]) -> PointSet {
        let v: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        PointSet::new(d.clone(), &v).unwrap()
    }

    #[test]
    fn single_atom() {
        let d = Arc::new(Domain::canonical(2, None).unwrap());
        let x = set(&d, &[[0.0, 0.0]]);
        let y = set(&d, &[[1.0, 0.0]]);
        assert_eq!(ot_wasserstein(&x, &y, GroundCost::L2).unwrap(), 1.0);
        assert_eq!(ot_wasserstein(&x, &x, GroundCost::L2).unwrap(), 0.0);
    }

    #[test]
    fn one_to_two_splits_mass() {
        let d = Arc::new(Domain::canonical(2, None).unwrap());
        let x = set(&d, &[[0.0, 0.0]]);
        let y = set(&d, &[[1.0, 0.0], [0.0, 0.5]]);
        let w = ot_wasserstein(&x, &y, GroundCost::L1).unwrap();
        assert!((w - 0.75).abs() < 1e-15);
        assert_eq!(w, ot_wasserstein(&y, &x, GroundCost::L1).unwrap());
    }

    #[test]
    fn assignment_prefers_crossing_free_matching() {
        let d = Arc::new(Domain::canonical(2, None).unwrap());
        let x = set(&d, &[[0.0, 0.0], [1.0, 0.0]]);
        let y = set(&d, &[[1.0, 0.1], [0.0, 0.1]]);
        let w = ot_wasserstein(&x, &y, GroundCost::L1).unwrap();
        assert!((w - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_cases() {
        let d = Arc::new(Domain::canonical(2, None).unwrap());
        let e = PointSet::empty(d.clone());
        let x = set(&d, &[[0.0, 0.0]]);
        assert_eq!(ot_wasserstein(&e, &e, GroundCost::L2).unwrap(), 0.0);
        assert!(matches!(
            ot_wasserstein(&e, &x, GroundCost::L2),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn transport_respects_marginals() {
        let costs = vec![vec![3.0, 1.0, 2.0], vec![0.5, 4.0, 1.0]];
        let f = transport(&costs, 3, 2);
        for row in &f {
            assert_eq!(row.iter().sum::<u64>(), 3);
        }
        for j in 0..3 {
            assert_eq!(f[0][j] + f[1][j], 2);
        }
    }
}
