use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fishers::{self, FisherSConfig, SeparabilityCurve};
use crate::knn::{self, KnnConfig};
use crate::numerics::SampleMatrix;

/// Per-run diagnostics. FisherS reports its separability curve, the
/// neighbor-based estimators report one local estimate per retained point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostics {
    Separability(SeparabilityCurve),
    PerPoint(Vec<f64>),
}

/// Outcome of one intrinsic-dimension estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub value: f64,
    /// Selected separability threshold; FisherS only.
    pub alpha_star: Option<f64>,
    /// Dimension the estimator worked in (post-PCA for FisherS).
    pub retained_k: usize,
    pub degenerate: bool,
    pub sample_count: usize,
    /// Duplicate rows (FisherS) or points dropped for zero neighbor
    /// distances (kNN estimators).
    pub excluded: usize,
    pub diagnostics: Diagnostics,
}

impl IdEstimate {
    pub fn curve(&self) -> Option<&SeparabilityCurve> {
        match &self.diagnostics {
            Diagnostics::Separability(c) => Some(c),
            Diagnostics::PerPoint(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Fishers,
    Mle,
    Tle,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Fishers => "fishers",
            EstimatorKind::Mle => "mle",
            EstimatorKind::Tle => "tle",
        })
    }
}

/// An estimator together with its full configuration. Serializes as
/// `{"name": ..., "config": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "config", rename_all = "snake_case")]
pub enum Estimator {
    Fishers(FisherSConfig),
    Mle(KnnConfig),
    Tle(KnnConfig),
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Fishers(FisherSConfig::default())
    }
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Fishers(_) => EstimatorKind::Fishers,
            Estimator::Mle(_) => EstimatorKind::Mle,
            Estimator::Tle(_) => EstimatorKind::Tle,
        }
    }

    pub fn estimate(&self, data: &SampleMatrix) -> Result<IdEstimate> {
        match self {
            Estimator::Fishers(cfg) => fishers::estimate_fishers(data, cfg),
            Estimator::Mle(cfg) => knn::estimate_mle(data, cfg),
            Estimator::Tle(cfg) => knn::estimate_tle(data, cfg),
        }
    }

    /// Smallest sample count the estimator accepts.
    pub fn min_samples(&self) -> usize {
        match self {
            Estimator::Fishers(cfg) => cfg.min_samples,
            Estimator::Mle(cfg) | Estimator::Tle(cfg) => cfg.k + 1,
        }
    }

    /// Short human-readable tag, e.g. `fishers(C=10, alpha=0.6:0.98/20, f=0.9)`.
    pub fn tag(&self) -> String {
        match self {
            Estimator::Fishers(c) => {
                let first = c.alpha_grid.first().copied().unwrap_or(f64::NAN);
                let last = c.alpha_grid.last().copied().unwrap_or(f64::NAN);
                format!(
                    "fishers(C={}, alpha={}:{}/{}, f={})",
                    c.conditional_number,
                    first,
                    last,
                    c.alpha_grid.len(),
                    c.selection_factor
                )
            }
            Estimator::Mle(c) => format!("mle(k={}, corrected={})", c.k, c.apply_correction),
            Estimator::Tle(c) => format!("tle(k={}, eps={})", c.k, c.tle_epsilon),
        }
    }
}
