//! `IDM1` container: 14-byte header (`b"IDM1"`, version, flags, n: u32 LE,
//! D: u32 LE) followed by n·D f64 LE values, row-major, then n u32 LE
//! labels when flag bit 0 is set.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imbalance::LabeledDataset;
use crate::numerics::SampleMatrix;

use super::{write_atomic, Loaded};

pub const IDM1_MAGIC: [u8; 4] = *b"IDM1";
pub const IDM1_VERSION: u8 = 1;
const FLAG_LABELS: u8 = 1;
const HEADER: usize = 14;

pub fn encode_idm1(data: &SampleMatrix, labels: Option<&[usize]>) -> Result<Vec<u8>> {
    let n = u32::try_from(data.n()).map_err(|_| Error::Container("n exceeds u32".into()))?;
    let d = u32::try_from(data.dim()).map_err(|_| Error::Container("D exceeds u32".into()))?;
    if let Some(l) = labels {
        if l.len() != data.n() {
            return Err(Error::ShapeMismatch {
                expected: data.n(),
                found: l.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(HEADER + data.as_slice().len() * 8 + labels.map_or(0, |l| l.len() * 4));
    out.extend_from_slice(&IDM1_MAGIC);
    out.push(IDM1_VERSION);
    out.push(if labels.is_some() { FLAG_LABELS } else { 0 });
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for v in data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in labels.unwrap_or(&[]) {
        let l = u32::try_from(l).map_err(|_| Error::Container(format!("label {l} exceeds u32")))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_idm1(bytes: &[u8]) -> Result<Loaded> {
    if bytes.is_empty() {
        return Err(Error::EmptyFile);
    }
    if bytes.len() < HEADER {
        return Err(Error::Container(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != IDM1_MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    if bytes[4] != IDM1_VERSION {
        return Err(Error::Container(format!("unsupported version {}", bytes[4])));
    }
    let flags = bytes[5];
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::Container(format!("unknown flag bits {flags:#04x}")));
    }
    let labeled = flags & FLAG_LABELS != 0;
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .and_then(|b| b.checked_add(if labeled { n * 4 } else { 0 }))
        .and_then(|b| b.checked_add(HEADER))
        .ok_or_else(|| Error::Container("declared shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Container(format!(
            "payload is {} bytes, header declares {}",
            bytes.len() - HEADER,
            expected - HEADER
        )));
    }
    let body = &bytes[HEADER..];
    let (vals, rest) = body.split_at(n * d * 8);
    let values = vals
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = SampleMatrix::new(n, d, values)?;
    if labeled {
        let labels = rest
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Ok(Loaded::Labeled(LabeledDataset::new(data, labels)?))
    } else {
        Ok(Loaded::Unlabeled(data))
    }
}

pub fn read_idm1(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_idm1(&bytes)
}

pub fn write_idm1(path: &Path, data: &SampleMatrix, labels: Option<&[usize]>) -> Result<()> {
    write_atomic(path, &encode_idm1(data, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let m = SampleMatrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = encode_idm1(&m, Some(&[3])).unwrap();
        let mut want = b"IDM1".to_vec();
        want.extend_from_slice(&[1, 1, 1, 0, 0, 0, 2, 0, 0, 0]);
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.5f64).to_le_bytes());
        want.extend_from_slice(&[3, 0, 0, 0]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn rejects_malformed() {
        let m = SampleMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        let good = encode_idm1(&m, None).unwrap();
        assert!(matches!(decode_idm1(&good), Ok(Loaded::Unlabeled(_))));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_idm1(&bad), Err(Error::Container(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_idm1(&bad), Err(Error::Container(_))));
        assert!(matches!(decode_idm1(&good[..good.len() - 1]), Err(Error::Container(_))));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_idm1(&long), Err(Error::Container(_))));
        assert!(matches!(decode_idm1(&[]), Err(Error::EmptyFile)));
    }
}
