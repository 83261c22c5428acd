//! Seeded synthetic clouds with known intrinsic dimension, plus the
//! perturbations used by the robustness sweeps.
//!
//! All generators are pure functions of their spec. Independent random
//! draws (samples, covariance, rotation angles, noise, subsampling) use
//! separate ChaCha streams of the same seed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::LabeledDataset;
use crate::numerics::{self, SampleMatrix};

const STREAM_SAMPLES: u64 = 0;
const STREAM_COVARIANCE: u64 = 1;
const STREAM_ROTATION: u64 = 2;
const STREAM_NOISE: u64 = 3;
pub(crate) const STREAM_SUBSAMPLE: u64 = 4;

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "param")]
pub enum CovarianceKind {
    Identity,
    /// `sigma * I`.
    Spherical(f64),
    /// Random positive diagonal with the given trace.
    DiagonalFixedTrace(f64),
    /// Random SPD matrix with the given determinant.
    FullFixedDet(f64),
}

impl CovarianceKind {
    fn check(&self) -> Result<()> {
        let p = match *self {
            CovarianceKind::Identity => return Ok(()),
            CovarianceKind::Spherical(p)
            | CovarianceKind::DiagonalFixedTrace(p)
            | CovarianceKind::FullFixedDet(p) => p,
        };
        if p > 0.0 && p.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("covariance parameter must be positive, got {p}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub intrinsic_d: usize,
    pub extrinsic_d: usize,
    pub n: usize,
    pub covariance: CovarianceKind,
    pub rotate: bool,
    /// Sweeps of consecutive-pair rotations applied when `rotate` is set.
    pub rotation_passes: usize,
    pub seed: u64,
}

impl GaussianSpec {
    /// Identity covariance with `D = d`, no rotation.
    pub fn isotropic(d: usize, n: usize, seed: u64) -> Self {
        Self {
            intrinsic_d: d,
            extrinsic_d: d,
            n,
            covariance: CovarianceKind::Identity,
            rotate: false,
            rotation_passes: 1,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.intrinsic_d == 0 || self.n == 0 {
            return Err(Error::Domain("intrinsic dimension and n must be positive".into()));
        }
        if self.extrinsic_d < self.intrinsic_d {
            return Err(Error::Domain(format!(
                "extrinsic dimension {} is below intrinsic dimension {}",
                self.extrinsic_d, self.intrinsic_d
            )));
        }
        self.covariance.check()
    }
}

/// Draws diagonal entries from `U[0.5, 1.5)` before rescaling to the
/// requested trace; full matrices are `A A^T + 0.1 I` with standard normal
/// `A`, rescaled to the requested determinant.
pub fn make_covariance(kind: CovarianceKind, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    kind.check()?;
    if d == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let mut r = rng(seed, STREAM_COVARIANCE);
    Ok(match kind {
        CovarianceKind::Identity => DMatrix::identity(d, d),
        CovarianceKind::Spherical(s) => DMatrix::identity(d, d) * s,
        CovarianceKind::DiagonalFixedTrace(total) => {
            let raw: Vec<f64> = (0..d).map(|_| r.random_range(0.5..1.5)).collect();
            let sum: f64 = raw.iter().sum();
            let diag: Vec<f64> = raw.iter().map(|v| v * total / sum).collect();
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
        }
        CovarianceKind::FullFixedDet(g) => {
            let a = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
            let m = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
            let chol = m.clone().cholesky().expect("ridge keeps the matrix positive definite");
            let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let scale = ((g.ln() - log_det) / d as f64).exp();
            let mut out = m * scale;
            // Symmetrize away round-off.
            out = (&out + out.transpose()) * 0.5;
            out
        }
    })
}

/// `n x D` samples: the first `d` coordinates follow the requested
/// covariance, the rest are zero until the optional rotation.
pub fn sample_gaussian(spec: &GaussianSpec) -> Result<SampleMatrix> {
    spec.check()?;
    let (d, big_d, n) = (spec.intrinsic_d, spec.extrinsic_d, spec.n);
    let mut r = rng(spec.seed, STREAM_SAMPLES);
    let z: Vec<f64> = (0..n * d).map(|_| r.sample(StandardNormal)).collect();
    let mixed: Vec<f64> = match spec.covariance {
        CovarianceKind::Identity => z,
        CovarianceKind::Spherical(s) => z.into_iter().map(|v| v * s.sqrt()).collect(),
        kind => {
            let cov = make_covariance(kind, d, spec.seed)?;
            let l = cov
                .cholesky()
                .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?
                .l();
            let mut out = vec![0.0; n * d];
            for (src, dst) in z.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[(i, j)] * src[j];
                    }
                    dst[i] = acc;
                }
            }
            out
        }
    };
    let mut values = vec![0.0; n * big_d];
    for (src, dst) in mixed.chunks_exact(d).zip(values.chunks_exact_mut(big_d)) {
        dst[..d].copy_from_slice(src);
    }
    let data = SampleMatrix::new(n, big_d, values)?;
    if spec.rotate {
        rotate_passes(&data, spec.seed, spec.rotation_passes)
    } else {
        Ok(data)
    }
}

/// Appends zero columns up to `extrinsic_d`.
pub fn embed_zero_padded(data: &SampleMatrix, extrinsic_d: usize) -> Result<SampleMatrix> {
    if extrinsic_d < data.dim() {
        return Err(Error::ShapeMismatch {
            expected: data.dim(),
            found: extrinsic_d,
        });
    }
    let mut values = Vec::with_capacity(data.n() * extrinsic_d);
    for row in data.rows() {
        values.extend_from_slice(row);
        values.extend(std::iter::repeat_n(0.0, extrinsic_d - data.dim()));
    }
    SampleMatrix::new(data.n(), extrinsic_d, values)
}

/// One pass of seeded consecutive-pair rotations, angles uniform on `[0, 2pi)`.
pub fn embed_and_rotate(data: &SampleMatrix, seed: u64) -> Result<SampleMatrix> {
    rotate_passes(data, seed, 1)
}

pub fn rotate_passes(data: &SampleMatrix, seed: u64, passes: usize) -> Result<SampleMatrix> {
    let pairs = data.dim() - 1;
    if pairs == 0 {
        return Ok(data.clone());
    }
    let mut r = rng(seed, STREAM_ROTATION);
    let mut out = data.clone();
    for _ in 0..passes {
        let angles: Vec<f64> = (0..pairs)
            .map(|_| r.random_range(0.0..std::f64::consts::TAU))
            .collect();
        out = numerics::givens_rotate_consecutive(&out, &angles)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn unit_range(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            clip_lo: 0.0,
            clip_hi: 1.0,
            seed,
        }
    }
}

/// `clip(x + N(0, sigma^2), lo, hi)` elementwise.
pub fn add_noise(data: &SampleMatrix, spec: &NoiseSpec) -> Result<SampleMatrix> {
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::Domain(format!("noise sigma must be >= 0, got {}", spec.sigma)));
    }
    if !(spec.clip_lo < spec.clip_hi) {
        return Err(Error::Domain("clip_lo must be below clip_hi".into()));
    }
    let normal = Normal::new(0.0, spec.sigma).expect("sigma checked");
    let mut r = rng(spec.seed, STREAM_NOISE);
    let values = data
        .as_slice()
        .iter()
        .map(|&v| {
            let e = if spec.sigma > 0.0 { normal.sample(&mut r) } else { 0.0 };
            (v + e).clamp(spec.clip_lo, spec.clip_hi)
        })
        .collect();
    SampleMatrix::new(data.n(), data.dim(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub num_classes: usize,
    pub n_max: usize,
    pub rho: f64,
    pub seed: u64,
}

/// Exponential profile `floor(n_max * rho^(-c/(C-1)))` with both endpoints
/// pinned: `N_0 = n_max`, `N_last = floor(n_max / rho)`.
pub fn longtail_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    let c = spec.num_classes;
    if c < 2 {
        return Err(Error::Domain("long-tail profile needs at least 2 classes".into()));
    }
    if !(spec.rho >= 1.0) || !spec.rho.is_finite() {
        return Err(Error::Domain(format!("imbalance ratio must be >= 1, got {}", spec.rho)));
    }
    let n_max = spec.n_max as f64;
    let tail = (n_max / spec.rho).floor() as usize;
    if tail == 0 {
        return Err(Error::Domain(format!(
            "n_max {} / rho {} leaves an empty tail class",
            spec.n_max, spec.rho
        )));
    }
    let mut counts: Vec<usize> = (0..c)
        .map(|i| (n_max * spec.rho.powf(-(i as f64) / (c - 1) as f64)).floor() as usize)
        .collect();
    counts[0] = spec.n_max;
    counts[c - 1] = tail;
    Ok(counts)
}

/// Keeps exactly `counts[c]` samples of class `c`, drawn without
/// replacement; surviving rows keep their original order.
pub fn subsample_longtail(dataset: &LabeledDataset, counts: &[usize], seed: u64) -> Result<LabeledDataset> {
    if counts.len() != dataset.num_classes() {
        return Err(Error::ShapeMismatch {
            expected: dataset.num_classes(),
            found: counts.len(),
        });
    }
    let mut r = rng(seed, STREAM_SUBSAMPLE);
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for (class, &want) in counts.iter().enumerate() {
        let mut idx = dataset.class_indices(class);
        if want > idx.len() {
            return Err(Error::InsufficientSamples {
                class,
                requested: want,
                available: idx.len(),
            });
        }
        let (chosen, _) = idx.partial_shuffle(&mut r, want);
        keep.extend_from_slice(chosen);
    }
    keep.sort_unstable();
    dataset.select_rows(&keep)
}
