use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imbalance::LabeledDataset;
use crate::numerics::SampleMatrix;

use super::Loaded;

/// Reads comma-separated numeric rows. With `labeled`, the last column is
/// the class label and must be a non-negative integer.
pub fn read_csv(path: &Path, has_header: bool, labeled: bool) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_csv(file, has_header, labeled)
}

pub fn parse_csv<R: Read>(reader: R, has_header: bool, labeled: bool) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                line,
                expected,
                found: record.len(),
            });
        }
        let features = if labeled { expected - 1 } else { expected };
        if features == 0 {
            return Err(Error::Parse {
                line,
                column: 1,
                message: "row has no feature columns".into(),
            });
        }
        for (j, field) in record.iter().take(features).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("`{field}` is not finite"),
                });
            }
            values.push(v);
        }
        if labeled {
            let field = &record[expected - 1];
            let label: usize = field.parse().map_err(|_| Error::Parse {
                line,
                column: expected,
                message: format!("label `{field}` is not a non-negative integer"),
            })?;
            labels.push(label);
        }
        rows += 1;
    }

    let Some(width) = width else {
        return Err(Error::EmptyFile);
    };
    let dim = if labeled { width - 1 } else { width };
    let data = SampleMatrix::new(rows, dim, values)?;
    if labeled {
        Ok(Loaded::Labeled(LabeledDataset::new(data, labels)?))
    } else {
        Ok(Loaded::Unlabeled(data))
    }
}

/// Comma-separated rows with the label, if any, in the last column.
/// Floats use the shortest representation that parses back exactly.
pub fn to_csv_string(data: &SampleMatrix, labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    for (i, row) in data.rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        if let Some(l) = labels {
            out.push(',');
            out.push_str(&l[i].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, data: &SampleMatrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != data.n() {
            return Err(Error::ShapeMismatch {
                expected: data.n(),
                found: l.len(),
            });
        }
    }
    super::write_atomic(path, to_csv_string(data, labels).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(s: &str) -> Result<LabeledDataset> {
        parse_csv(s.as_bytes(), false, true)?.labeled()
    }

    #[test]
    fn parses_labeled_rows() {
        let ds = labeled("1.0,2.0,0\n3.0,4.0,1\n").unwrap();
        assert_eq!(ds.data().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn skips_header() {
        let got = parse_csv("x,y,label\n1,2,0\n3,4,1\n".as_bytes(), true, true).unwrap();
        assert_eq!(got.data().n(), 2);
        assert!(matches!(
            parse_csv("x,y,label\n1,2,0\n".as_bytes(), false, true),
            Err(Error::Parse { line: 1, column: 1, .. })
        ));
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = labeled("1,2,3,0\n1,2,3,1\n1,2,0\n").unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRows {
                line: 3,
                expected: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn bad_fields() {
        assert!(matches!(
            labeled("1,2,0\n1,zz,1\n"),
            Err(Error::Parse { line: 2, column: 2, .. })
        ));
        assert!(matches!(
            labeled("1,2,-1\n"),
            Err(Error::Parse { line: 1, column: 3, .. })
        ));
        assert!(matches!(labeled(""), Err(Error::EmptyFile)));
        assert!(matches!(labeled("\n\n"), Err(Error::EmptyFile)));
    }

    #[test]
    fn writer_round_trips() {
        let m = SampleMatrix::new(2, 2, vec![0.1, -3.0, 1e-300, 2.5]).unwrap();
        let s = to_csv_string(&m, Some(&[1, 0]));
        let back = parse_csv(s.as_bytes(), false, true).unwrap().labeled().unwrap();
        assert_eq!(back.data(), &m);
        assert_eq!(back.labels(), &[1, 0]);
    }

    #[test]
    fn unlabeled_keeps_all_columns() {
        let got = parse_csv("1,2,3\n4,5,6\n".as_bytes(), false, false).unwrap();
        assert!(matches!(got, Loaded::Unlabeled(_)));
        assert_eq!(got.data().dim(), 3);
    }
}
