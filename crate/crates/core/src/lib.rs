//! Intrinsic-dimension estimation (FisherS separability, MLE, TLE) and
//! class-imbalance artifacts derived from per-class intrinsic dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimator;
pub mod fishers;
pub mod imbalance;
pub mod io;
pub mod knn;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{Diagnostics, Estimator, EstimatorKind, IdEstimate};
pub use fishers::FisherSConfig;
pub use imbalance::{ClassIdProfile, LabeledDataset, MitigationKind, MitigationReport};
pub use knn::KnnConfig;
pub use numerics::SampleMatrix;
