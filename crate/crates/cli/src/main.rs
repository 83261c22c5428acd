use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use classdim::bench::{self, BenchConfig, Suite};
use classdim::fishers::parse_alpha_grid;
use classdim::imbalance::{
    classwise_id, mitigation_report, transform_profile, MitigationKind, MitigationParams, ProfileTransform,
};
use classdim::io::{self, EstimateReport, Format, LoadOptions, Loaded, PixelScale, ReportJson};
use classdim::knn::KnnConfig;
use classdim::synth::{self, CovarianceKind, GaussianSpec, LongTailSpec};
use classdim::{Estimator, FisherSConfig, LabeledDataset, SampleMatrix};

#[derive(Parser)]
#[command(name = "classdim", version, about = "Intrinsic dimension estimation and ID-based class-imbalance artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the intrinsic dimension of a whole point cloud.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// JSON output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate one ID per class and write a report.
    Classwise {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Recorded in the report.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace failed classes by the mean ID instead of aborting.
        #[arg(long)]
        impute: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive mitigation artifacts from a stored report.
    Weights {
        #[arg(long)]
        report: PathBuf,
        /// May be repeated.
        #[arg(long = "weights-kind", value_enum, required = true)]
        kinds: Vec<WeightsKind>,
        #[arg(long, default_value_t = 0.5)]
        dro_scale: f64,
        /// Progressive sampling blend `t/T`.
        #[arg(long, value_parser = parse_blend)]
        blend: Option<(f64, f64)>,
        #[arg(long, value_enum, default_value_t = TransformArg::None)]
        transform: TransformArg,
        /// Seed for `--transform shuffled`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic dataset, one Gaussian class per listed dimension.
    Synth {
        /// Intrinsic dimension of each class, e.g. `2,5,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        /// Samples per class (head-class count with `--longtail-rho`).
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Ambient dimension; defaults to the largest intrinsic dimension.
        #[arg(long)]
        extrinsic: Option<usize>,
        /// `identity`, `spherical:<sigma>`, `diagonal:<trace>` or `full:<det>`.
        #[arg(long, default_value = "identity", value_parser = parse_covariance)]
        covariance: CovarianceKind,
        #[arg(long)]
        rotate: bool,
        #[arg(long, default_value_t = 1)]
        rotation_passes: usize,
        /// Exponential long-tail profile with this imbalance ratio.
        #[arg(long)]
        longtail_rho: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run robustness sweeps, one CSV per suite.
    Bench {
        /// A suite name or `all`; may be repeated.
        #[arg(long, required = true, value_parser = parse_suites)]
        suite: Vec<SuiteSel>,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replicates per sweep point (suite default when omitted).
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value_t = 1)]
        rotation_passes: usize,
        /// Real data for the low_sample and noise suites.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, value_parser = parse_format, default_value = "csv")]
        format: Format,
        #[arg(long)]
        has_header: bool,
        #[arg(long, value_parser = parse_pixel_scale, default_value = "unit")]
        pixel_scale: PixelScale,
        /// Class of `--input` used as the pool.
        #[arg(long, default_value_t = 0)]
        class: usize,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Input file; repeat for several CIFAR-10 batches.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    format: Format,
    #[arg(long)]
    has_header: bool,
    /// CSV input without a label column.
    #[arg(long)]
    unlabeled: bool,
    #[arg(long, value_parser = parse_pixel_scale, default_value = "unit")]
    pixel_scale: PixelScale,
}

impl InputArgs {
    fn load(&self, labeled: bool) -> Result<Loaded, Failure> {
        let opts = LoadOptions {
            has_header: self.has_header,
            labeled: labeled && !self.unlabeled,
            pixel_scale: self.pixel_scale,
        };
        io::load_dataset(&self.input, self.format, &opts).map_err(stage("load input"))
    }
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = EstimatorArg::Fishers)]
    estimator: EstimatorArg,
    /// FisherS threshold grid `start:stop:step`.
    #[arg(long)]
    alpha_grid: Option<String>,
    /// FisherS eigenvalue-ratio cutoff.
    #[arg(long)]
    cond_number: Option<f64>,
    /// Neighbor count for MLE and TLE.
    #[arg(long)]
    k: Option<usize>,
    /// Drop duplicate rows before FisherS.
    #[arg(long)]
    dedupe: bool,
    /// MLE: average local estimates instead of inverting the mean inverse.
    #[arg(long)]
    no_correction: bool,
}

impl EstimatorArgs {
    fn build(&self) -> Result<Estimator, Failure> {
        let usage = |m: String| Failure::usage("estimator config", m);
        match self.estimator {
            EstimatorArg::Fishers => {
                if self.k.is_some() || self.no_correction {
                    return Err(usage("--k and --no-correction apply to mle/tle only".into()));
                }
                let mut cfg = FisherSConfig::default();
                if let Some(g) = &self.alpha_grid {
                    cfg.alpha_grid = parse_alpha_grid(g).map_err(|e| usage(e.to_string()))?;
                }
                if let Some(c) = self.cond_number {
                    cfg.conditional_number = c;
                }
                cfg.dedupe = self.dedupe;
                cfg.validate().map_err(|e| usage(e.to_string()))?;
                Ok(Estimator::Fishers(cfg))
            }
            EstimatorArg::Mle | EstimatorArg::Tle => {
                if self.alpha_grid.is_some() || self.cond_number.is_some() || self.dedupe {
                    return Err(usage("--alpha-grid, --cond-number and --dedupe apply to fishers only".into()));
                }
                let mut cfg = KnnConfig::default();
                if let Some(k) = self.k {
                    if k < 2 {
                        return Err(usage(format!("k must be >= 2, got {k}")));
                    }
                    cfg.k = k;
                }
                cfg.apply_correction = !self.no_correction;
                Ok(match self.estimator {
                    EstimatorArg::Mle => Estimator::Mle(cfg),
                    _ => Estimator::Tle(cfg),
                })
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Fishers,
    Mle,
    Tle,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsKind {
    Sampling,
    Loss,
    Ldam,
    Dro,
    Logit,
}

impl From<WeightsKind> for MitigationKind {
    fn from(k: WeightsKind) -> Self {
        match k {
            WeightsKind::Sampling => MitigationKind::Sampling,
            WeightsKind::Loss => MitigationKind::LossWeights,
            WeightsKind::Ldam => MitigationKind::LdamMargins,
            WeightsKind::Dro => MitigationKind::DroMargins,
            WeightsKind::Logit => MitigationKind::LogitDeltas,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransformArg {
    None,
    Reversed,
    Shuffled,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Idm1,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_pixel_scale(s: &str) -> Result<PixelScale, String> {
    s.parse()
}

fn parse_blend(s: &str) -> Result<(f64, f64), String> {
    let (t, total) = s.split_once('/').ok_or_else(|| format!("blend `{s}` is not t/T"))?;
    let t: f64 = t.trim().parse().map_err(|_| format!("bad blend step `{t}`"))?;
    let total: f64 = total.trim().parse().map_err(|_| format!("bad blend total `{total}`"))?;
    if total <= 0.0 || total.is_nan() || !(0.0..=total).contains(&t) {
        return Err(format!("blend needs 0 <= t <= T and T > 0, got {t}/{total}"));
    }
    Ok((t, total))
}

fn parse_covariance(s: &str) -> Result<CovarianceKind, String> {
    let (kind, param) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p.parse::<f64>().map_err(|_| format!("bad covariance parameter `{p}`"))?)),
        None => (s, None),
    };
    match (kind, param) {
        ("identity", None) => Ok(CovarianceKind::Identity),
        ("spherical", Some(p)) => Ok(CovarianceKind::Spherical(p)),
        ("diagonal", Some(p)) => Ok(CovarianceKind::DiagonalFixedTrace(p)),
        ("full", Some(p)) => Ok(CovarianceKind::FullFixedDet(p)),
        _ => Err(format!(
            "covariance `{s}` is not identity, spherical:<sigma>, diagonal:<trace> or full:<det>"
        )),
    }
}

#[derive(Clone)]
struct SuiteSel(Vec<Suite>);

fn parse_suites(s: &str) -> Result<SuiteSel, String> {
    if s == "all" {
        Ok(SuiteSel(Suite::ALL.to_vec()))
    } else {
        Ok(SuiteSel(vec![s.parse()?]))
    }
}

/// A failure tagged with the stage that produced it.
struct Failure {
    stage: &'static str,
    message: String,
    usage: bool,
}

impl Failure {
    fn usage(stage: &'static str, message: String) -> Self {
        Self { stage, message, usage: true }
    }
}

fn stage<E: Display>(stage: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure {
        stage,
        message: e.to_string(),
        usage: false,
    }
}

fn timestamp() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH").ok()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => io::write_atomic(p, text.as_bytes()).map_err(stage("write output")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Estimate { input, estimator, out } => {
            let est = estimator.build()?;
            let data = input.load(false)?;
            let data = data.data();
            let result = est.estimate(data).map_err(stage("estimate"))?;
            let report = EstimateReport::new(&est, data.n(), data.dim(), result);
            emit(out.as_deref(), &report.to_json().map_err(stage("write output"))?)
        }
        Command::Classwise {
            input,
            estimator,
            seed,
            impute,
            out,
        } => {
            let est = estimator.build()?;
            let ds = input.load(true)?.labeled().map_err(stage("load input"))?;
            let (profile, _) = classwise_id(&ds, &est, impute).map_err(stage("classwise"))?;
            let report = ReportJson::new(&profile, &est, seed);
            emit(out.as_deref(), &report.to_json().map_err(stage("write output"))?)
        }
        Command::Weights {
            report,
            kinds,
            dro_scale,
            blend,
            transform,
            seed,
            out,
        } => {
            if !(dro_scale > 0.0 && dro_scale.is_finite()) {
                return Err(Failure::usage("weights", format!("--dro-scale must be positive, got {dro_scale}")));
            }
            let mut rep = io::read_report(&report).map_err(stage("read report"))?;
            let mode = match transform {
                TransformArg::None => ProfileTransform::None,
                TransformArg::Reversed => ProfileTransform::Reversed,
                TransformArg::Shuffled => ProfileTransform::Shuffled(seed),
            };
            let profile = rep.profile().map_err(stage("read report"))?;
            let profile = transform_profile(&profile, mode).map_err(stage("transform"))?;
            let params = MitigationParams { dro_scale, blend };
            rep.transform = mode;
            rep.artifacts.clear();
            for k in kinds {
                let kind = MitigationKind::from(k);
                let art = mitigation_report(&profile, kind, &params, timestamp()).map_err(stage("weights"))?;
                rep.artifacts.insert(kind, art);
            }
            emit(out.as_deref(), &rep.to_json().map_err(stage("write output"))?)
        }
        Command::Synth {
            dims,
            n,
            extrinsic,
            covariance,
            rotate,
            rotation_passes,
            longtail_rho,
            seed,
            format,
            out,
        } => {
            let ds = synthesize(&dims, n, extrinsic, covariance, rotate, rotation_passes, longtail_rho, seed)
                .map_err(stage("synth"))?;
            let labels = ds.labels().to_vec();
            match format {
                OutFormat::Csv => io::write_csv(&out, ds.data(), Some(&labels)),
                OutFormat::Idm1 => io::write_idm1(&out, ds.data(), Some(&labels)),
            }
            .map_err(stage("write output"))
        }
        Command::Bench {
            suite,
            estimator,
            seed,
            replicates,
            rotation_passes,
            input,
            format,
            has_header,
            pixel_scale,
            class,
            out,
        } => {
            let mut cfg = BenchConfig::new(estimator.build()?, seed);
            cfg.replicates = replicates;
            cfg.rotation_passes = rotation_passes;
            if !input.is_empty() {
                let opts = LoadOptions {
                    has_header,
                    labeled: true,
                    pixel_scale,
                };
                let ds = io::load_dataset(&input, format, &opts)
                    .and_then(Loaded::labeled)
                    .map_err(stage("load input"))?;
                if class >= ds.num_classes() {
                    return Err(Failure::usage(
                        "bench",
                        format!("--class {class} but input has {} classes", ds.num_classes()),
                    ));
                }
                cfg.pool = Some(ds.class_data(class));
            }
            let mut suites: Vec<Suite> = Vec::new();
            for s in suite.into_iter().flat_map(|sel| sel.0) {
                if !suites.contains(&s) {
                    suites.push(s);
                }
            }
            for s in suites {
                let rows = bench::run_suite(s, &cfg).map_err(stage("bench"))?;
                let path = out.join(format!("{}.csv", s.name()));
                io::write_atomic(&path, bench::rows_to_csv(&rows).as_bytes()).map_err(stage("write output"))?;
            }
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn synthesize(
    dims: &[usize],
    n: usize,
    extrinsic: Option<usize>,
    covariance: CovarianceKind,
    rotate: bool,
    rotation_passes: usize,
    longtail_rho: Option<f64>,
    seed: u64,
) -> classdim::Result<LabeledDataset> {
    let max_d = dims.iter().copied().max().unwrap_or(0);
    let big_d = extrinsic.unwrap_or(max_d);
    let counts = match longtail_rho {
        Some(rho) => synth::longtail_counts(&LongTailSpec {
            num_classes: dims.len(),
            n_max: n,
            rho,
            seed,
        })?,
        None => vec![n; dims.len()],
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (c, (&d, &count)) in dims.iter().zip(&counts).enumerate() {
        let cloud = synth::sample_gaussian(&GaussianSpec {
            intrinsic_d: d,
            extrinsic_d: big_d,
            n: count,
            covariance,
            rotate,
            rotation_passes,
            seed: bench::derive_seed(seed, c, 0),
        })?;
        values.extend_from_slice(cloud.as_slice());
        labels.extend(std::iter::repeat_n(c, count));
    }
    LabeledDataset::new(SampleMatrix::new(labels.len(), big_d, values)?, labels)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.stage, f.message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
