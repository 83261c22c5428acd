//! Class-wise intrinsic dimension and the mitigation artifacts derived
//! from it.
//!
//! Every artifact is a pure function of a [`ClassIdProfile`]; the
//! normalized IDs `d_c / sum d` are the only input the ID-based schemes
//! see, so a global rescaling of the raw IDs never changes them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, IdEstimate};
use crate::numerics::SampleMatrix;

/// Samples plus one class id per row. Class ids are `0..num_classes` and
/// every class has at least one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    data: SampleMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(data: SampleMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::ShapeMismatch {
                expected: data.n(),
                found: labels.len(),
            });
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            counts[l] += 1;
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class });
        }
        Ok(Self {
            data,
            labels,
            num_classes,
        })
    }

    pub fn data(&self) -> &SampleMatrix {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of class `c`, in dataset order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == c).then_some(i))
            .collect()
    }

    pub fn class_data(&self, c: usize) -> SampleMatrix {
        self.data.select_rows(&self.class_indices(c))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.data.select_rows(indices), labels)
    }

    pub fn into_parts(self) -> (SampleMatrix, Vec<usize>) {
        (self.data, self.labels)
    }
}

/// Raw and normalized per-class IDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIdProfile {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub counts: Vec<usize>,
    /// Estimator reported a degenerate cloud, or the value was imputed.
    pub degenerate: Vec<bool>,
    pub estimator_tag: String,
}

impl ClassIdProfile {
    pub fn from_raw(raw: Vec<f64>, counts: Vec<usize>, estimator_tag: impl Into<String>) -> Result<Self> {
        let degenerate = vec![false; raw.len()];
        Self::with_flags(raw, counts, degenerate, estimator_tag)
    }

    pub fn with_flags(
        raw: Vec<f64>,
        counts: Vec<usize>,
        degenerate: Vec<bool>,
        estimator_tag: impl Into<String>,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Domain("profile has no classes".into()));
        }
        for other in [counts.len(), degenerate.len()] {
            if other != raw.len() {
                return Err(Error::ShapeMismatch {
                    expected: raw.len(),
                    found: other,
                });
            }
        }
        if let Some(class) = raw.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::DegenerateClass { class });
        }
        let total: f64 = raw.iter().sum();
        let normalized = raw.iter().map(|d| d / total).collect();
        Ok(Self {
            raw,
            normalized,
            counts,
            degenerate,
            estimator_tag: estimator_tag.into(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.raw.len()
    }
}

/// Runs `estimator` once per class; classes are independent and run in
/// parallel.
///
/// With `impute_failures`, a class whose estimation fails receives the mean
/// raw ID of the successful classes and is flagged degenerate.
pub fn classwise_id(
    dataset: &LabeledDataset,
    estimator: &Estimator,
    impute_failures: bool,
) -> Result<(ClassIdProfile, Vec<Option<IdEstimate>>)> {
    let results: Vec<Result<IdEstimate>> = (0..dataset.num_classes())
        .into_par_iter()
        .map(|c| estimator.estimate(&dataset.class_data(c)))
        .collect();
    let mut estimates = Vec::with_capacity(results.len());
    for (class, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => estimates.push(Some(e)),
            Err(_) if impute_failures => estimates.push(None),
            Err(e) => {
                return Err(Error::ClassTooSmall {
                    class,
                    source: Box::new(e),
                })
            }
        }
    }
    let ok: Vec<f64> = estimates.iter().flatten().map(|e| e.value).collect();
    if ok.is_empty() {
        return Err(Error::Domain("no class could be estimated".into()));
    }
    let fill = ok.iter().sum::<f64>() / ok.len() as f64;
    let raw = estimates.iter().map(|e| e.as_ref().map_or(fill, |e| e.value)).collect();
    let degenerate = estimates
        .iter()
        .map(|e| e.as_ref().is_none_or(|e| e.degenerate))
        .collect();
    let profile = ClassIdProfile::with_flags(raw, dataset.counts(), degenerate, estimator.tag())?;
    Ok((profile, estimates))
}

fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::Domain("no classes".into()));
    }
    match counts.iter().position(|&c| c == 0) {
        Some(class) => Err(Error::EmptyClass { class }),
        None => Ok(()),
    }
}

/// `p_c = N_c / sum N`: every sample equally likely.
pub fn instance_balanced_probs(counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts)?;
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

pub fn class_balanced_probs(num_classes: usize) -> Vec<f64> {
    vec![1.0 / num_classes as f64; num_classes]
}

/// Two-stage sampling plan: draw a class with `class_probs`, then a sample
/// uniformly within it, so each sample of class `c` has `per_sample[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub class_probs: Vec<f64>,
    pub per_sample: Vec<f64>,
}

pub fn id_sampling_probs(profile: &ClassIdProfile) -> Result<SamplingPlan> {
    check_counts(&profile.counts)?;
    let class_probs = profile.normalized.clone();
    let per_sample = class_probs
        .iter()
        .zip(&profile.counts)
        .map(|(p, &n)| p / n as f64)
        .collect();
    Ok(SamplingPlan {
        class_probs,
        per_sample,
    })
}

/// Linear schedule from `p_a` at `t = 0` to `p_b` at `t = total`.
pub fn progressive_blend(p_a: &[f64], p_b: &[f64], t: f64, total: f64) -> Result<Vec<f64>> {
    if p_a.len() != p_b.len() {
        return Err(Error::ShapeMismatch {
            expected: p_a.len(),
            found: p_b.len(),
        });
    }
    if !(total > 0.0) || !(0.0..=total).contains(&t) {
        return Err(Error::Domain(format!("blend position {t}/{total} is out of range")));
    }
    if t == 0.0 {
        return Ok(p_a.to_vec());
    }
    if t == total {
        return Ok(p_b.to_vec());
    }
    let w = t / total;
    Ok(p_a
        .iter()
        .zip(p_b)
        .map(|(a, b)| (1.0 - w) * a + w * b)
        .collect())
}

/// `w_c = d_hat_c * |C|`; the weights average to one.
pub fn loss_weights(profile: &ClassIdProfile) -> Vec<f64> {
    let c = profile.num_classes() as f64;
    profile.normalized.iter().map(|d| d * c).collect()
}

/// Cardinality baseline `w_c = n_min / n_c`.
pub fn inverse_frequency_weights(counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts)?;
    let n_min = *counts.iter().min().unwrap() as f64;
    Ok(counts.iter().map(|&n| n_min / n as f64).collect())
}

/// `0.5 * d_hat_c / max d_hat`.
pub fn ldam_margins(profile: &ClassIdProfile) -> Vec<f64> {
    let max = profile.normalized.iter().cloned().fold(f64::MIN, f64::max);
    profile.normalized.iter().map(|d| 0.5 * (d / max)).collect()
}

/// Cardinality baseline `C / N_c^(1/4)`.
pub fn ldam_baseline_margins(counts: &[usize], scale: f64) -> Result<Vec<f64>> {
    check_counts(counts)?;
    Ok(counts.iter().map(|&n| scale / (n as f64).powf(0.25)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroMargins {
    pub margins: Vec<f64>,
    /// Starting point for learnable per-class margins.
    pub epsilon_init: Vec<f64>,
}

/// `d_hat_c * scale`; margins sum to `scale`.
pub fn dro_margins(profile: &ClassIdProfile, scale: f64) -> Result<DroMargins> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("DRO scale must be positive, got {scale}")));
    }
    Ok(DroMargins {
        margins: profile.normalized.iter().map(|d| d * scale).collect(),
        epsilon_init: profile.normalized.clone(),
    })
}

/// `(1/d_hat_y) / sum_c (1/d_hat_c)`, replacing empirical priors.
pub fn logit_adjust_deltas(profile: &ClassIdProfile) -> Result<Vec<f64>> {
    if let Some(class) = profile.normalized.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::DegenerateClass { class });
    }
    let inv: Vec<f64> = profile.normalized.iter().map(|d| 1.0 / d).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "seed")]
pub enum ProfileTransform {
    None,
    Reversed,
    Shuffled(u64),
}

/// Reassigns raw IDs across classes; counts stay with their class.
///
/// `Reversed` gives the class with the j-th smallest ID the j-th largest
/// value (ties ordered by class index), `Shuffled` applies a seeded
/// permutation.
pub fn transform_profile(profile: &ClassIdProfile, mode: ProfileTransform) -> Result<ClassIdProfile> {
    let c = profile.num_classes();
    let perm: Vec<usize> = match mode {
        ProfileTransform::None => return Ok(profile.clone()),
        ProfileTransform::Reversed => {
            let mut order: Vec<usize> = (0..c).collect();
            order.sort_by(|&a, &b| profile.raw[a].total_cmp(&profile.raw[b]).then(a.cmp(&b)));
            let mut perm = vec![0; c];
            for r in 0..c {
                perm[order[r]] = order[c - 1 - r];
            }
            perm
        }
        ProfileTransform::Shuffled(seed) => {
            let mut perm: Vec<usize> = (0..c).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            perm
        }
    };
    let tag = match mode {
        ProfileTransform::Reversed => format!("{} [reversed]", profile.estimator_tag),
        ProfileTransform::Shuffled(s) => format!("{} [shuffled seed={s}]", profile.estimator_tag),
        ProfileTransform::None => unreachable!(),
    };
    permute_profile(profile, &perm, tag)
}

/// Class `c` receives the raw ID (and degenerate flag) of class `perm[c]`.
pub fn permute_profile(profile: &ClassIdProfile, perm: &[usize], tag: impl Into<String>) -> Result<ClassIdProfile> {
    let c = profile.num_classes();
    let mut seen = vec![false; c];
    if perm.len() != c || perm.iter().any(|&p| p >= c || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Domain("not a permutation of the class indices".into()));
    }
    ClassIdProfile::with_flags(
        perm.iter().map(|&p| profile.raw[p]).collect(),
        profile.counts.clone(),
        perm.iter().map(|&p| profile.degenerate[p]).collect(),
        tag,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationKind {
    Sampling,
    LossWeights,
    LdamMargins,
    DroMargins,
    LogitDeltas,
}

impl MitigationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MitigationKind::Sampling => "sampling",
            MitigationKind::LossWeights => "loss_weights",
            MitigationKind::LdamMargins => "ldam_margins",
            MitigationKind::DroMargins => "dro_margins",
            MitigationKind::LogitDeltas => "logit_deltas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub profile_tag: String,
    /// Taken from `SOURCE_DATE_EPOCH` by the CLI; absent otherwise so that
    /// reports stay byte-reproducible.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub kind: MitigationKind,
    pub values: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    /// Secondary per-class vectors: `per_sample` for sampling, `epsilon_init`
    /// for DRO margins.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub auxiliary: BTreeMap<String, Vec<f64>>,
    pub provenance: Provenance,
}

/// Scalar knobs for [`mitigation_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigationParams {
    pub dro_scale: f64,
    /// `(t, T)`: blend instance-balanced sampling into ID sampling.
    pub blend: Option<(f64, f64)>,
}

impl Default for MitigationParams {
    fn default() -> Self {
        Self {
            dro_scale: 0.5,
            blend: None,
        }
    }
}

pub fn mitigation_report(
    profile: &ClassIdProfile,
    kind: MitigationKind,
    params: &MitigationParams,
    timestamp: Option<String>,
) -> Result<MitigationReport> {
    let mut p = BTreeMap::new();
    let mut aux = BTreeMap::new();
    let values = match kind {
        MitigationKind::Sampling => {
            let plan = id_sampling_probs(profile)?;
            let class_probs = match params.blend {
                Some((t, total)) => {
                    p.insert("blend_t".to_string(), t);
                    p.insert("blend_total".to_string(), total);
                    let base = instance_balanced_probs(&profile.counts)?;
                    progressive_blend(&base, &plan.class_probs, t, total)?
                }
                None => plan.class_probs,
            };
            let per_sample = class_probs
                .iter()
                .zip(&profile.counts)
                .map(|(p, &n)| p / n as f64)
                .collect();
            aux.insert("per_sample".to_string(), per_sample);
            class_probs
        }
        MitigationKind::LossWeights => loss_weights(profile),
        MitigationKind::LdamMargins => {
            p.insert("max_margin".to_string(), 0.5);
            ldam_margins(profile)
        }
        MitigationKind::DroMargins => {
            p.insert("scale".to_string(), params.dro_scale);
            let dro = dro_margins(profile, params.dro_scale)?;
            aux.insert("epsilon_init".to_string(), dro.epsilon_init);
            dro.margins
        }
        MitigationKind::LogitDeltas => logit_adjust_deltas(profile)?,
    };
    Ok(MitigationReport {
        kind,
        values,
        params: p,
        auxiliary: aux,
        provenance: Provenance {
            profile_tag: profile.estimator_tag.clone(),
            timestamp,
        },
    })
}
