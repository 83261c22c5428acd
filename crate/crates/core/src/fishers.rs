//! FisherS intrinsic-dimension estimator.
//!
//! The cloud is centered, projected on its major principal components
//! (eigenvalue ratio to the leading one below the conditional number),
//! whitened per component and pushed onto the unit sphere. For every
//! threshold `alpha` the mean fraction of other points `x` with
//! `<y, x> > alpha` is measured and inverted through the sphere
//! equidistribution law
//!
//! ```text
//! p(n, alpha) = (1 - alpha^2)^((n - 1) / 2) / (alpha * sqrt(2 pi n))
//! n(p, alpha) = W(-ln(1 - alpha^2) / (2 pi p^2 alpha^2 (1 - alpha^2))) / -ln(1 - alpha^2)
//! ```
//!
//! The reported dimension is the `n(alpha)` whose alpha is nearest to
//! `selection_factor * max(valid alpha)`.

use std::collections::HashSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Diagnostics, IdEstimate};
use crate::numerics::{self, SampleMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSConfig {
    pub conditional_number: f64,
    pub alpha_grid: Vec<f64>,
    pub selection_factor: f64,
    pub min_samples: usize,
    pub dedupe: bool,
}

impl Default for FisherSConfig {
    fn default() -> Self {
        Self {
            conditional_number: 10.0,
            alpha_grid: default_alpha_grid(),
            selection_factor: 0.9,
            min_samples: 10,
            dedupe: false,
        }
    }
}

/// `0.60, 0.62, ..., 0.98`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..20).map(|i| (60 + 2 * i) as f64 / 100.0).collect()
}

/// Parses `start:stop:step` into an inclusive grid. Points are rounded to
/// 12 decimals so `0.6:0.98:0.02` reproduces [`default_alpha_grid`] exactly.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Domain(format!("alpha grid `{spec}` is not start:stop:step"));
    let [a, b, step] = parts[..] else {
        return Err(bad());
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

impl FisherSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.conditional_number > 1.0) || !self.conditional_number.is_finite() {
            return Err(Error::Domain(format!(
                "conditional number must be > 1, got {}",
                self.conditional_number
            )));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::Domain("alpha grid is empty".into()));
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Domain("alpha grid values must lie in (0, 1)".into()));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("alpha grid must be strictly increasing".into()));
        }
        if !(self.selection_factor > 0.0 && self.selection_factor <= 1.0) {
            return Err(Error::Domain(format!(
                "selection factor must lie in (0, 1], got {}",
                self.selection_factor
            )));
        }
        if self.min_samples < 2 {
            return Err(Error::Domain("min_samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub alpha: f64,
    pub p_bar: f64,
    /// `None` marks an invalid entry.
    pub n_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparabilityCurve {
    pub entries: Vec<CurveEntry>,
}

impl SeparabilityCurve {
    pub fn valid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries
            .iter()
            .filter_map(|e| e.n_alpha.map(|n| (e.alpha, n)))
    }
}

/// Unit-sphere cloud produced by [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub cloud: SampleMatrix,
    pub retained_k: usize,
    /// Repeated rows seen in the input (removed when `dedupe` is set).
    pub duplicates: usize,
}

fn duplicate_rows(data: &SampleMatrix) -> (Vec<usize>, usize) {
    let mut seen = HashSet::with_capacity(data.n());
    let mut keep = Vec::with_capacity(data.n());
    for (i, row) in data.rows().enumerate() {
        // +0.0 and -0.0 are the same point.
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            keep.push(i);
        }
    }
    let dups = data.n() - keep.len();
    (keep, dups)
}

/// center -> PCA -> keep major components -> whiten -> unit sphere.
pub fn preprocess(data: &SampleMatrix, cfg: &FisherSConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let (keep, duplicates) = duplicate_rows(data);
    let deduped;
    let data = if cfg.dedupe && duplicates > 0 {
        deduped = data.select_rows(&keep);
        &deduped
    } else {
        data
    };
    if data.n() < cfg.min_samples {
        return Err(Error::TooFewSamples {
            needed: cfg.min_samples,
            got: data.n(),
        });
    }
    let centered = numerics::center(data);
    let spectrum = numerics::pca_spectrum(&centered)?;
    let k = numerics::select_major_components(&spectrum.eigenvalues, cfg.conditional_number);
    let proj = &spectrum.projections;
    let r = proj.dim();
    let mut major = Vec::with_capacity(proj.n() * k);
    for row in proj.rows() {
        major.extend_from_slice(&row[..k.min(r)]);
    }
    let major = SampleMatrix::new(proj.n(), k.min(r), major)?;
    let whitened = numerics::whiten_columns(&major)?;
    let cloud = numerics::project_to_sphere(&whitened)?;
    Ok(Preprocessed {
        retained_k: cloud.dim(),
        cloud,
        duplicates,
    })
}

/// Ordered-pair counts of `<x, y> > alpha` over `x != y`, one per grid value.
///
/// `grid` must be sorted ascending. Each unordered pair is visited once and
/// counted twice; the counts are integers, so any reduction order gives the
/// same result.
fn inseparable_pair_counts(cloud: &SampleMatrix, grid: &[f64]) -> Vec<u64> {
    let n = cloud.n();
    let g = grid.len();
    let hist = (0..n)
        .into_par_iter()
        .fold(
            || vec![0u64; g + 1],
            |mut hist, i| {
                let yi = cloud.row(i);
                for j in (i + 1)..n {
                    let yj = cloud.row(j);
                    let dot: f64 = yi.iter().zip(yj).map(|(a, b)| a * b).sum();
                    hist[grid.partition_point(|&a| a < dot)] += 1;
                }
                hist
            },
        )
        .reduce(
            || vec![0u64; g + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    // Pairs with `m` grid values below their inner product exceed alphas 0..m.
    let mut counts = vec![0u64; g];
    let mut above = 0u64;
    for a in (0..g).rev() {
        above += hist[a + 1];
        counts[a] = 2 * above;
    }
    counts
}

/// Mean inseparability for every alpha in an ascending grid.
pub fn inseparability_curve(cloud: &SampleMatrix, grid: &[f64]) -> Result<Vec<f64>> {
    let n = cloud.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let denom = n as f64 * (n - 1) as f64;
    Ok(inseparable_pair_counts(cloud, grid)
        .into_iter()
        .map(|c| c as f64 / denom)
        .collect())
}

/// `(1/n) sum_y (1/(n-1)) #{x != y : <y, x> > alpha}` on a unit-sphere cloud.
pub fn mean_inseparability(cloud: &SampleMatrix, alpha: f64) -> Result<f64> {
    Ok(inseparability_curve(cloud, &[alpha])?[0])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Inseparability probability of the uniform distribution on the sphere
/// of dimension `n`.
pub fn p_alpha_theoretical(n: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(n >= 1.0) {
        return Err(Error::Domain(format!("dimension must be >= 1, got {n}")));
    }
    let one_minus = 1.0 - alpha * alpha;
    Ok(one_minus.powf((n - 1.0) / 2.0) / (alpha * (2.0 * PI * n).sqrt()))
}

/// Inverts [`p_alpha_theoretical`] for `n` through the Lambert W function.
pub fn n_alpha_from_p(p_bar: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(p_bar > 0.0) {
        return Err(Error::InvalidInseparability(p_bar));
    }
    let a2 = alpha * alpha;
    let neg_log = -(-a2).ln_1p();
    let arg = neg_log / (2.0 * PI * p_bar * p_bar * a2 * (1.0 - a2));
    Ok(numerics::lambert_w0(arg)? / neg_log)
}

/// Picks the valid alpha nearest `factor * max(valid alpha)`; ties go to
/// the smaller alpha.
pub fn select_alpha(curve: &SeparabilityCurve, selection_factor: f64) -> Result<f64> {
    let max_alpha = curve
        .valid()
        .map(|(a, _)| a)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_alpha.is_finite() {
        return Err(Error::NoValidAlpha);
    }
    let target = selection_factor * max_alpha;
    let mut valid: Vec<f64> = curve.valid().map(|(a, _)| a).collect();
    valid.sort_by(f64::total_cmp);
    let mut best = valid[0];
    let mut best_dist = (best - target).abs();
    for &a in &valid[1..] {
        let d = (a - target).abs();
        if d < best_dist - 1e-12 {
            best = a;
            best_dist = d;
        }
    }
    Ok(best)
}

fn build_curve(grid: &[f64], p_bars: &[f64]) -> SeparabilityCurve {
    let entries = grid
        .iter()
        .zip(p_bars)
        .map(|(&alpha, &p_bar)| {
            let n_alpha = n_alpha_from_p(p_bar, alpha)
                .ok()
                .filter(|n| n.is_finite() && *n > 0.0);
            CurveEntry {
                alpha,
                p_bar,
                n_alpha,
            }
        })
        .collect();
    SeparabilityCurve { entries }
}

pub fn estimate_fishers(data: &SampleMatrix, cfg: &FisherSConfig) -> Result<IdEstimate> {
    let pre = preprocess(data, cfg)?;
    let sample_count = pre.cloud.n();
    if pre.retained_k == 1 {
        return Ok(IdEstimate {
            value: 1.0,
            alpha_star: None,
            retained_k: 1,
            degenerate: true,
            sample_count,
            excluded: pre.duplicates,
            diagnostics: Diagnostics::Separability(SeparabilityCurve::default()),
        });
    }
    let p_bars = inseparability_curve(&pre.cloud, &cfg.alpha_grid)?;
    let curve = build_curve(&cfg.alpha_grid, &p_bars);
    let alpha_star = select_alpha(&curve, cfg.selection_factor)?;
    let value = curve
        .valid()
        .find(|&(a, _)| a == alpha_star)
        .map(|(_, n)| n)
        .expect("selected alpha is valid");
    Ok(IdEstimate {
        value,
        alpha_star: Some(alpha_star),
        retained_k: pre.retained_k,
        degenerate: false,
        sample_count,
        excluded: pre.duplicates,
        diagnostics: Diagnostics::Separability(curve),
    })
}
