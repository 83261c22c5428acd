//! Neighbor-distance intrinsic-dimension estimators.
//!
//! Both estimators work on exact Euclidean k-nearest-neighbor tables built
//! by brute force over all pairs.
//!
//! **MLE** (Levina & Bickel, with the MacKay & Ghahramani correction). For a
//! point with sorted neighbor distances `T_1 <= ... <= T_k`
//!
//! ```text
//! m_k(x)^-1 = 1/(k-1) * sum_{j=1}^{k-1} ln(T_k / T_j)
//! ```
//!
//! With the correction the global estimate is `1 / mean_x m_k(x)^-1`,
//! otherwise it is `mean_x m_k(x)`.
//!
//! **TLE** (Amsaleg et al., tight localities). Inside the neighborhood of
//! radius `r = T_k`, every ordered neighbor pair `(i, j)` contributes two
//! extra distance measurements `s_ij` and `t_ij` obtained by reflecting
//! the pair through the neighborhood sphere, on top of the `k` direct
//! distances. The local estimate is
//!
//! ```text
//! ID(x) = -2 * (k^2 - dropped) / (sum ln(t_ij / r) + sum ln(s_ij / r) + 2 * sum ln(T_j / r))
//! ```
//!
//! where measurements below `epsilon * r` (and coincident neighbor pairs)
//! are dropped. Local estimates are combined by the harmonic mean unless
//! configured otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Diagnostics, IdEstimate};
use crate::numerics::SampleMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Harmonic,
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub apply_correction: bool,
    /// Relative drop threshold for TLE measurements, in units of the
    /// neighborhood radius.
    pub tle_epsilon: f64,
    #[serde(default)]
    pub tle_aggregation: Aggregation,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            apply_correction: true,
            tle_epsilon: 1e-4,
            tle_aggregation: Aggregation::Harmonic,
        }
    }
}

impl KnnConfig {
    fn check(&self, n: usize) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Domain(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.tle_epsilon > 0.0) {
            return Err(Error::Domain("tle_epsilon must be positive".into()));
        }
        if n <= self.k {
            return Err(Error::TooFewSamples {
                needed: self.k + 1,
                got: n,
            });
        }
        Ok(())
    }
}

/// Sorted exact neighbor lists, `n x k`, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnTable {
    pub k: usize,
    pub distances: Vec<f64>,
    pub indices: Vec<usize>,
    /// Points whose nearest neighbor is at distance zero.
    pub zero_distance_points: usize,
}

impl KnnTable {
    pub fn n(&self) -> usize {
        self.distances.len() / self.k
    }

    pub fn distances_of(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Ties are broken by neighbor index.
pub fn knn_distances(data: &SampleMatrix, k: usize) -> Result<KnnTable> {
    let n = data.n();
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if n <= k {
        return Err(Error::TooFewSamples { needed: k + 1, got: n });
    }
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(xi, data.row(j)), j))
                .collect();
            let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
            cand.sort_unstable_by(order);
            cand
        })
        .collect();
    let mut distances = Vec::with_capacity(n * k);
    let mut indices = Vec::with_capacity(n * k);
    let mut zero = 0;
    for row in rows {
        if row[0].0 == 0.0 {
            zero += 1;
        }
        for (d, j) in row {
            distances.push(d);
            indices.push(j);
        }
    }
    Ok(KnnTable {
        k,
        distances,
        indices,
        zero_distance_points: zero,
    })
}

/// Per-point inverse MLE `1/(k-1) sum_{j<k} ln(T_k/T_j)`; `None` when any
/// neighbor distance is zero or all distances coincide.
pub fn mle_inverse_local(dists: &[f64]) -> Option<f64> {
    let k = dists.len();
    let tk = dists[k - 1];
    if tk <= 0.0 || dists[0] <= 0.0 {
        return None;
    }
    let s: f64 = dists[..k - 1].iter().map(|&t| (tk / t).ln()).sum();
    let inv = s / (k - 1) as f64;
    (inv > 0.0).then_some(inv)
}

pub fn estimate_mle(data: &SampleMatrix, cfg: &KnnConfig) -> Result<IdEstimate> {
    cfg.check(data.n())?;
    let table = knn_distances(data, cfg.k)?;
    let inverses: Vec<f64> = (0..table.n())
        .filter_map(|i| mle_inverse_local(table.distances_of(i)))
        .collect();
    if inverses.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let m = inverses.len() as f64;
    let value = if cfg.apply_correction {
        m / inverses.iter().sum::<f64>()
    } else {
        inverses.iter().map(|v| 1.0 / v).sum::<f64>() / m
    };
    Ok(IdEstimate {
        value,
        alpha_star: None,
        retained_k: data.dim(),
        degenerate: false,
        sample_count: data.n(),
        excluded: table.n() - inverses.len(),
        diagnostics: Diagnostics::PerPoint(inverses.iter().map(|v| 1.0 / v).collect()),
    })
}

/// Tight-locality estimate for one neighborhood.
///
/// `dists` are the sorted distances from the center to its neighbors and
/// `pair` gives the distance between neighbors `i` and `j`.
pub fn tle_local(dists: &[f64], pair: impl Fn(usize, usize) -> f64, epsilon: f64) -> Option<f64> {
    let k = dists.len();
    let r = dists[k - 1];
    if !(r > 0.0) {
        return None;
    }
    let eps = epsilon * r;
    let r2 = r * r;
    let mut dropped = 0usize;
    let mut log_sum = 0.0;
    for (i, &di) in dists.iter().enumerate() {
        for (j, &dj) in dists.iter().enumerate() {
            if i == j {
                continue;
            }
            let v = pair(i, j);
            let (s, t) = if v == 0.0 {
                dropped += 1;
                continue;
            } else if dj == 0.0 {
                let m = r * v / (r + v);
                (m, m)
            } else if di == 0.0 {
                (dj, dj)
            } else {
                let (di2, dj2, v2) = (di * di, dj * dj, v * v);
                let z2 = 2.0 * di2 + 2.0 * dj2 - v2;
                if di == r {
                    (r * v2 / (r2 + v2 - dj2), r * z2 / (r2 + z2 - dj2))
                } else {
                    let gap = r2 - di2;
                    let bs = di2 + v2 - dj2;
                    let bt = di2 + z2 - dj2;
                    let s = r * ((bs * bs + 4.0 * v2 * gap).sqrt() - bs) / (2.0 * gap);
                    let t = r * ((bt * bt + 4.0 * z2 * gap).sqrt() - bt) / (2.0 * gap);
                    (s, t)
                }
            };
            if !(s >= eps && t >= eps) {
                dropped += 1;
                continue;
            }
            log_sum += (s / r).ln() + (t / r).ln();
        }
    }
    for &d in dists {
        if d < eps {
            dropped += 1;
        } else {
            log_sum += 2.0 * (d / r).ln();
        }
    }
    let kept = (k * k) as f64 - dropped as f64;
    let id = -2.0 * kept / log_sum;
    (id.is_finite() && id > 0.0).then_some(id)
}

fn aggregate(values: &[f64], how: Aggregation) -> f64 {
    let m = values.len() as f64;
    match how {
        Aggregation::Harmonic => m / values.iter().map(|v| 1.0 / v).sum::<f64>(),
        Aggregation::Mean => values.iter().sum::<f64>() / m,
        Aggregation::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let h = v.len() / 2;
            if v.len() % 2 == 1 {
                v[h]
            } else {
                0.5 * (v[h - 1] + v[h])
            }
        }
    }
}

pub fn estimate_tle(data: &SampleMatrix, cfg: &KnnConfig) -> Result<IdEstimate> {
    cfg.check(data.n())?;
    let table = knn_distances(data, cfg.k)?;
    let local: Vec<Option<f64>> = (0..table.n())
        .into_par_iter()
        .map(|i| {
            let nb = table.neighbors_of(i);
            tle_local(
                table.distances_of(i),
                |a, b| euclidean(data.row(nb[a]), data.row(nb[b])),
                cfg.tle_epsilon,
            )
        })
        .collect();
    let values: Vec<f64> = local.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::AllDegenerate);
    }
    Ok(IdEstimate {
        value: aggregate(&values, cfg.tle_aggregation),
        alpha_star: None,
        retained_k: data.dim(),
        degenerate: false,
        sample_count: data.n(),
        excluded: table.n() - values.len(),
        diagnostics: Diagnostics::PerPoint(values),
    })
}
