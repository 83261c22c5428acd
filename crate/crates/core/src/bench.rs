//! Robustness sweeps over synthetic clouds with known intrinsic dimension.
//!
//! Each suite is a fixed list of sweep points; every point is run once per
//! replicate and produces one [`BenchRow`]. Rows come back in sweep order
//! regardless of how the work was scheduled.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::numerics::SampleMatrix;
use crate::synth::{self, CovarianceKind, GaussianSpec, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    SampleCount,
    Extrinsic,
    CondNumber,
    Spherical,
    Diagonal,
    Full,
    LowSample,
    Noise,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::SampleCount,
        Suite::Extrinsic,
        Suite::CondNumber,
        Suite::Spherical,
        Suite::Diagonal,
        Suite::Full,
        Suite::LowSample,
        Suite::Noise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::SampleCount => "sample_count",
            Suite::Extrinsic => "extrinsic",
            Suite::CondNumber => "cond_number",
            Suite::Spherical => "spherical",
            Suite::Diagonal => "diagonal",
            Suite::Full => "full",
            Suite::LowSample => "low_sample",
            Suite::Noise => "noise",
        }
    }

    /// Replicates per sweep point when the caller does not choose.
    pub fn default_replicates(&self) -> usize {
        match self {
            Suite::LowSample => 10,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub estimator: Estimator,
    pub seed: u64,
    /// Overrides [`Suite::default_replicates`].
    pub replicates: Option<usize>,
    pub rotation_passes: usize,
    /// Real data for `low_sample` and `noise`; a synthetic cloud is used
    /// otherwise.
    pub pool: Option<SampleMatrix>,
}

impl BenchConfig {
    pub fn new(estimator: Estimator, seed: u64) -> Self {
        Self {
            estimator,
            seed,
            replicates: None,
            rotation_passes: 1,
            pool: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sweep_param: f64,
    pub true_id: Option<f64>,
    /// NaN when the estimator failed at this point.
    pub estimate: f64,
    pub estimator: String,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
}

pub const SAMPLE_COUNT_DIMS: [usize; 4] = [2, 5, 10, 20];
pub const SAMPLE_COUNTS: [usize; 3] = [500, 1000, 5000];
pub const EXTRINSIC_DIMS: [usize; 6] = [5, 10, 20, 50, 100, 200];
pub const COND_NUMBERS: [f64; 7] = [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0];
pub const SPHERICAL_SIGMAS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DIAGONAL_TRACES: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
pub const FULL_GEN_VARS: [f64; 8] = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3, 1e4];
pub const LOW_SAMPLE_COUNTS: [usize; 5] = [25, 50, 100, 250, 500];
pub const NOISE_SIGMAS: [f64; 5] = [0.0, 0.05, 0.1, 0.25, 0.5];

/// splitmix64 finalizer over the base seed and the job coordinates.
pub fn derive_seed(base: u64, point: usize, replicate: usize) -> u64 {
    let mut z = base
        ^ (point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (replicate as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Source {
    Gaussian(GaussianSpec),
    /// `n` rows of the pool chosen with the job seed.
    Subsample { n: usize },
    Noisy { sigma: f64 },
}

struct Job {
    sweep_param: f64,
    true_id: Option<f64>,
    seed: u64,
    source: Source,
    estimator: Estimator,
}

pub fn run_suite(suite: Suite, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let reps = cfg.replicates.unwrap_or(suite.default_replicates());
    if reps == 0 {
        return Err(Error::Domain("at least one replicate is required".into()));
    }
    let pool = match suite {
        Suite::LowSample => Some(match &cfg.pool {
            Some(p) => p.clone(),
            None => low_sample_pool(cfg.seed)?,
        }),
        Suite::Noise => Some(match &cfg.pool {
            Some(p) => p.clone(),
            None => noise_pool(cfg.seed)?,
        }),
        _ => None,
    };
    let pool_id = if cfg.pool.is_some() { None } else { Some(10.0) };

    let gaussian = |d: usize, big_d: usize, n: usize, cov: CovarianceKind, seed: u64| {
        Source::Gaussian(GaussianSpec {
            intrinsic_d: d,
            extrinsic_d: big_d,
            n,
            covariance: cov,
            rotate: big_d > d,
            rotation_passes: cfg.rotation_passes,
            seed,
        })
    };
    let job = |sweep_param: f64, true_id: Option<f64>, seed: u64, source: Source| Job {
        sweep_param,
        true_id,
        seed,
        source,
        estimator: cfg.estimator.clone(),
    };

    let mut jobs = Vec::new();
    match suite {
        Suite::SampleCount => {
            let mut point = 0;
            for d in SAMPLE_COUNT_DIMS {
                for n in SAMPLE_COUNTS {
                    for r in 0..reps {
                        let s = derive_seed(cfg.seed, point, r);
                        jobs.push(job(n as f64, Some(d as f64), s, gaussian(d, d, n, CovarianceKind::Identity, s)));
                    }
                    point += 1;
                }
            }
        }
        Suite::Extrinsic => {
            for (point, big_d) in EXTRINSIC_DIMS.into_iter().enumerate() {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, point, r);
                    jobs.push(job(big_d as f64, Some(5.0), s, gaussian(5, big_d, 3000, CovarianceKind::Identity, s)));
                }
            }
        }
        Suite::CondNumber => {
            // Same cloud at every point so only C varies.
            for c in COND_NUMBERS {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, 0, r);
                    let mut j = job(c, Some(10.0), s, gaussian(10, 10, 3000, CovarianceKind::Identity, s));
                    if let Estimator::Fishers(f) = &mut j.estimator {
                        f.conditional_number = c;
                    }
                    jobs.push(j);
                }
            }
        }
        Suite::Spherical => {
            for sigma in SPHERICAL_SIGMAS {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, 0, r);
                    jobs.push(job(sigma, Some(10.0), s, gaussian(10, 10, 2000, CovarianceKind::Spherical(sigma), s)));
                }
            }
        }
        Suite::Diagonal => {
            for (point, t) in DIAGONAL_TRACES.into_iter().enumerate() {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, point, r);
                    jobs.push(job(t, Some(10.0), s, gaussian(10, 10, 2000, CovarianceKind::DiagonalFixedTrace(t), s)));
                }
            }
        }
        Suite::Full => {
            for (point, g) in FULL_GEN_VARS.into_iter().enumerate() {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, point, r);
                    jobs.push(job(g, Some(10.0), s, gaussian(10, 10, 2000, CovarianceKind::FullFixedDet(g), s)));
                }
            }
        }
        Suite::LowSample => {
            for (point, n) in LOW_SAMPLE_COUNTS.into_iter().enumerate() {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, point, r);
                    jobs.push(job(n as f64, pool_id, s, Source::Subsample { n }));
                }
            }
        }
        Suite::Noise => {
            for (point, sigma) in NOISE_SIGMAS.into_iter().enumerate() {
                for r in 0..reps {
                    let s = derive_seed(cfg.seed, point, r);
                    jobs.push(job(sigma, pool_id, s, Source::Noisy { sigma }));
                }
            }
        }
    }

    jobs.into_par_iter()
        .map(|j| run_job(j, pool.as_ref()))
        .collect()
}

fn run_job(job: Job, pool: Option<&SampleMatrix>) -> Result<BenchRow> {
    let data = match job.source {
        Source::Gaussian(spec) => synth::sample_gaussian(&spec)?,
        Source::Subsample { n } => {
            let pool = pool.expect("pool is built for subsample suites");
            if n > pool.n() {
                return Err(Error::TooFewSamples {
                    needed: n,
                    got: pool.n(),
                });
            }
            let mut r = synth::rng(job.seed, synth::STREAM_SUBSAMPLE);
            let mut idx: Vec<usize> = (0..pool.n()).collect();
            let (chosen, _) = rand::seq::SliceRandom::partial_shuffle(&mut idx[..], &mut r, n);
            let mut chosen = chosen.to_vec();
            chosen.sort_unstable();
            pool.select_rows(&chosen)
        }
        Source::Noisy { sigma } => {
            let pool = pool.expect("pool is built for noise suites");
            synth::add_noise(pool, &NoiseSpec::unit_range(sigma, job.seed))?
        }
    };
    let estimate = job.estimator.estimate(&data).map_or(f64::NAN, |e| e.value);
    Ok(BenchRow {
        sweep_param: job.sweep_param,
        true_id: job.true_id,
        estimate,
        estimator: job.estimator.kind().to_string(),
        seed: job.seed,
        n: data.n(),
        dim: data.dim(),
    })
}

/// d = 10 Gaussian rotated into D = 20.
pub fn low_sample_pool(seed: u64) -> Result<SampleMatrix> {
    synth::sample_gaussian(&GaussianSpec {
        intrinsic_d: 10,
        extrinsic_d: 20,
        n: 5000,
        covariance: CovarianceKind::Identity,
        rotate: true,
        rotation_passes: 1,
        seed,
    })
}

/// d = 10 Gaussian rotated into D = 50, affinely mapped into `[0, 1]` so
/// that clipped noise behaves as it does on normalized pixels.
pub fn noise_pool(seed: u64) -> Result<SampleMatrix> {
    let g = synth::sample_gaussian(&GaussianSpec {
        intrinsic_d: 10,
        extrinsic_d: 50,
        n: 2000,
        covariance: CovarianceKind::Identity,
        rotate: true,
        rotation_passes: 1,
        seed,
    })?;
    let lo = g.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    g.map(|v| (v - lo) / (hi - lo))
}

pub const CSV_HEADER: &str = "sweep_param,true_id,estimate,estimator,seed,n,D";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let true_id = r.true_id.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sweep_param, true_id, r.estimate, r.estimator, r.seed, r.n, r.dim
        )
        .expect("writing to a String cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::KnnConfig;

    fn mle() -> Estimator {
        Estimator::Mle(KnnConfig::default())
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn rows_follow_sweep_order() {
        let mut cfg = BenchConfig::new(mle(), 3);
        cfg.replicates = Some(2);
        let rows = run_suite(Suite::Spherical, &cfg).unwrap();
        assert_eq!(rows.len(), SPHERICAL_SIGMAS.len() * 2);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.sweep_param, SPHERICAL_SIGMAS[i / 2]);
            assert_eq!(r.n, 2000);
        }
        assert_ne!(rows[0].seed, rows[1].seed);
        assert_eq!(rows[0].seed, rows[2].seed);
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = BenchConfig::new(mle(), 11);
        let a = rows_to_csv(&run_suite(Suite::LowSample, &cfg).unwrap());
        let b = rows_to_csv(&run_suite(Suite::LowSample, &cfg).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("sweep_param,true_id,estimate,estimator,seed,n,D\n"));
        assert_eq!(a.lines().count(), 1 + LOW_SAMPLE_COUNTS.len() * 10);
    }

    #[test]
    fn pool_override_has_no_true_id() {
        let mut cfg = BenchConfig::new(mle(), 1);
        cfg.pool = Some(synth::sample_gaussian(&GaussianSpec::isotropic(3, 600, 9)).unwrap());
        let rows = run_suite(Suite::LowSample, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.true_id.is_none() && r.dim == 3));
    }

    #[test]
    fn noise_pool_is_unit_range() {
        let p = noise_pool(0).unwrap();
        let lo = p.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }
}
