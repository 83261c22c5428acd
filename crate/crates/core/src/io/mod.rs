//! Dataset ingestion and report serialization.

mod cifar;
mod csv;
mod idm1;
mod report;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::LabeledDataset;
use crate::numerics::SampleMatrix;

pub use self::cifar::{read_cifar10_bin, read_cifar10_bytes, PixelScale, CIFAR_PIXELS, CIFAR_RECORD};
pub use self::csv::{parse_csv, read_csv, to_csv_string, write_csv};
pub use self::idm1::{decode_idm1, encode_idm1, read_idm1, write_idm1, IDM1_MAGIC, IDM1_VERSION};
pub use self::report::{
    read_report, write_report, ClassRecord, EstimateReport, ReportJson, SCHEMA_VERSION,
};

/// Either a bare point cloud or one with class labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Unlabeled(SampleMatrix),
    Labeled(LabeledDataset),
}

impl Loaded {
    pub fn data(&self) -> &SampleMatrix {
        match self {
            Loaded::Unlabeled(m) => m,
            Loaded::Labeled(ds) => ds.data(),
        }
    }

    pub fn labeled(self) -> Result<LabeledDataset> {
        match self {
            Loaded::Labeled(ds) => Ok(ds),
            Loaded::Unlabeled(_) => Err(Error::Container(
                "dataset has no labels; class-wise analysis needs a labeled input".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Idm1,
    Cifar10,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "idm1" => Ok(Format::Idm1),
            "cifar10" => Ok(Format::Cifar10),
            other => Err(format!("unknown format `{other}` (expected csv, idm1 or cifar10)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub has_header: bool,
    /// CSV only: the last column holds the class label.
    pub labeled: bool,
    pub pixel_scale: PixelScale,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            has_header: false,
            labeled: true,
            pixel_scale: PixelScale::Unit,
        }
    }
}

/// Loads one or more files; only CIFAR-10 accepts several batch files.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P], format: Format, opts: &LoadOptions) -> Result<Loaded> {
    match (format, paths) {
        (Format::Cifar10, _) => Ok(Loaded::Labeled(read_cifar10_bin(paths, opts.pixel_scale)?)),
        (_, [one]) => match format {
            Format::Csv => read_csv(one.as_ref(), opts.has_header, opts.labeled),
            Format::Idm1 => read_idm1(one.as_ref()),
            Format::Cifar10 => unreachable!(),
        },
        _ => Err(Error::Container(format!(
            "{format:?} input takes exactly one file, got {}",
            paths.len()
        ))),
    }
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::file(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::file(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::file(path, e))?;
    tmp.persist(path).map_err(|e| Error::file(path, e.error))?;
    Ok(())
}
