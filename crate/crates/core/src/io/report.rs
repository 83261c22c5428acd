use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, IdEstimate};
use crate::imbalance::{ClassIdProfile, MitigationKind, MitigationReport, ProfileTransform};

use super::write_atomic;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub label: usize,
    pub count: usize,
    pub id_raw: f64,
    pub id_norm: f64,
    pub degenerate: bool,
}

/// Class-wise IDs plus any artifacts derived from them. `classes` always
/// holds the estimated IDs; `transform` records how they were reassigned
/// before the artifacts were built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub schema_version: u32,
    pub tool_version: String,
    pub estimator: Estimator,
    pub seed: Option<u64>,
    pub classes: Vec<ClassRecord>,
    pub transform: ProfileTransform,
    #[serde(default)]
    pub artifacts: BTreeMap<MitigationKind, MitigationReport>,
}

impl ReportJson {
    pub fn new(profile: &ClassIdProfile, estimator: &Estimator, seed: Option<u64>) -> Self {
        let classes = (0..profile.num_classes())
            .map(|c| ClassRecord {
                label: c,
                count: profile.counts[c],
                id_raw: profile.raw[c],
                id_norm: profile.normalized[c],
                degenerate: profile.degenerate[c],
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            estimator: estimator.clone(),
            seed,
            classes,
            transform: ProfileTransform::None,
            artifacts: BTreeMap::new(),
        }
    }

    /// Rebuilds the estimated profile without re-running the estimator.
    pub fn profile(&self) -> Result<ClassIdProfile> {
        ClassIdProfile::with_flags(
            self.classes.iter().map(|c| c.id_raw).collect(),
            self.classes.iter().map(|c| c.count).collect(),
            self.classes.iter().map(|c| c.degenerate).collect(),
            self.estimator.tag(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |path: String, message: String| Error::Schema { path, message };
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version".into(),
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.classes.is_empty() {
            return Err(schema("classes".into(), "no classes".into()));
        }
        let total: f64 = self.classes.iter().map(|c| c.id_raw).sum();
        for (i, c) in self.classes.iter().enumerate() {
            if c.label != i {
                return Err(schema(format!("classes[{i}].label"), format!("expected {i}, found {}", c.label)));
            }
            if c.count == 0 {
                return Err(schema(format!("classes[{i}].count"), "class has no samples".into()));
            }
            if !(c.id_raw > 0.0 && c.id_raw.is_finite()) {
                return Err(schema(format!("classes[{i}].id_raw"), format!("{} is not a positive ID", c.id_raw)));
            }
            if (c.id_norm - c.id_raw / total).abs() > 1e-9 {
                return Err(schema(
                    format!("classes[{i}].id_norm"),
                    format!("{} does not match id_raw / sum(id_raw) = {}", c.id_norm, c.id_raw / total),
                ));
            }
        }
        let norm_sum: f64 = self.classes.iter().map(|c| c.id_norm).sum();
        if (norm_sum - 1.0).abs() > 1e-9 {
            return Err(schema("classes".into(), format!("id_norm sums to {norm_sum}, expected 1")));
        }
        for (kind, art) in &self.artifacts {
            if art.kind != *kind {
                return Err(schema(
                    format!("artifacts.{}.kind", kind.as_str()),
                    format!("keyed as {} but declares {}", kind.as_str(), art.kind.as_str()),
                ));
            }
            if art.values.len() != self.classes.len() {
                return Err(schema(
                    format!("artifacts.{}.values", kind.as_str()),
                    format!("{} values for {} classes", art.values.len(), self.classes.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = from_json(s)?;
        r.validate()?;
        Ok(r)
    }
}

/// Output of a single-cloud estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub estimator: Estimator,
    pub n: usize,
    pub dim: usize,
    pub estimate: IdEstimate,
}

impl EstimateReport {
    pub fn new(estimator: &Estimator, n: usize, dim: usize, estimate: IdEstimate) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            estimator: estimator.clone(),
            n,
            dim,
            estimate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        from_json(s)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        path: String::new(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

fn from_json<T: DeserializeOwned>(s: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Validates, then writes atomically.
pub fn write_report(path: &Path, report: &ReportJson) -> Result<()> {
    write_atomic(path, report.to_json()?.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ReportJson> {
    let s = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    ReportJson::from_json(&s)
}
