//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! the 32×32 R, G and B planes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imbalance::LabeledDataset;
use crate::numerics::SampleMatrix;

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelScale {
    /// Byte values as-is, 0..=255.
    Raw,
    /// Divided by 255.
    #[default]
    Unit,
}

impl std::str::FromStr for PixelScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(PixelScale::Raw),
            "unit" => Ok(PixelScale::Unit),
            other => Err(format!("unknown pixel scale `{other}` (expected raw or unit)")),
        }
    }
}

/// Decodes one batch into `(pixels, labels)`; `first_record` offsets the
/// record index used in error messages.
pub fn read_cifar10_bytes(
    bytes: &[u8],
    scale: PixelScale,
    first_record: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::BadRecordSize {
            size: bytes.len() as u64,
            record: CIFAR_RECORD,
        });
    }
    let divisor = match scale {
        PixelScale::Raw => 1.0,
        PixelScale::Unit => 255.0,
    };
    let n = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::LabelOutOfRange {
                record: first_record + i,
                label: rec[0] as u32,
            });
        }
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&b| b as f64 / divisor));
    }
    Ok((pixels, labels))
}

/// Concatenates the batches in the order given.
pub fn read_cifar10_bin<P: AsRef<Path>>(paths: &[P], scale: PixelScale) -> Result<LabeledDataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        let (p, l) = read_cifar10_bytes(&bytes, scale, labels.len())?;
        pixels.extend(p);
        labels.extend(l);
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile);
    }
    let data = SampleMatrix::new(labels.len(), CIFAR_PIXELS, pixels)?;
    LabeledDataset::new(data, labels)
}
