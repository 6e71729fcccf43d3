use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Reads a rectangular numeric CSV. Column `label_column` holds integer
/// class labels; every other column becomes a feature. Row order is kept.
pub fn load_feature_csv(path: &Path, label_column: usize, header: bool) -> Result<LabeledDataset> {
    let csv_err = |line: u64, reason: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(0, e.to_string()))?;

    let mut width = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        match width {
            None => {
                if label_column >= record.len() {
                    return Err(csv_err(
                        line,
                        format!("label column {label_column} but row has {} cells", record.len()),
                    ));
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(csv_err(line, format!("ragged row: {} cells, expected {w}", record.len())));
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_column {
                let label: usize = cell
                    .parse()
                    .map_err(|_| csv_err(line, format!("label `{cell}` is not a class index")))?;
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| csv_err(line, format!("cell {j} `{cell}` is not numeric")))?;
                if !v.is_finite() {
                    return Err(csv_err(line, format!("cell {j} is not finite")));
                }
                data.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(csv_err(0, "no data rows".into()));
    };
    let n = labels.len();
    let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    LabeledDataset::new(Matrix::new(n, width - 1, data)?, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows() {
        let f = file("0.5,1.0,0\n-1,2,1\n3,3,0\n");
        let ds = load_feature_csv(f.path(), 2, false).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.features().row(1), &[-1.0, 2.0]);
    }

    #[test]
    fn empty_file_rejected() {
        let f = file("");
        assert!(load_feature_csv(f.path(), 0, false).is_err());
    }

    #[test]
    fn header_is_skipped() {
        let f = file("label,x,y\n1,0.1,0.2\n0,0.3,0.4\n");
        let ds = load_feature_csv(f.path(), 0, true).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        assert!(load_feature_csv(f.path(), 0, false).is_err());
    }

    #[test]
    fn ragged_and_non_numeric_report_line() {
        let f = file("1,2,0\n1,2\n");
        match load_feature_csv(f.path(), 2, false).unwrap_err() {
            Error::Csv { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let f = file("1,2,0\n1,2,0\nx,2,1\n");
        match load_feature_csv(f.path(), 2, false).unwrap_err() {
            Error::Csv { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("not numeric"));
            }
            e => panic!("{e}"),
        }
    }
}
