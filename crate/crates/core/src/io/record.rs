//! Column-mapped CSV records.
//!
//! A record file is a plain CSV with a header row. Leading `#` lines are
//! comments; one of them may carry the sampling rate as `# fs=<Hz>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};
use crate::sigcore::Record;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    /// Optional; ignored on load apart from being skipped.
    pub time: String,
    pub ecg: String,
    pub bcg: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            time: "time".into(),
            ecg: "ecg".into(),
            bcg: "bcg".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    /// Overrides any `# fs=` header.
    pub fs: Option<f64>,
    pub columns: ColumnMap,
}

/// Record id used for output file names: the file name without `.csv`.
pub fn record_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".csv").unwrap_or(&name).to_string()
}

fn header_fs(text: &str) -> Option<f64> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .find_map(|l| {
            let body = l.trim_start().trim_start_matches('#').trim();
            let (key, value) = body.split_once('=')?;
            (key.trim() == "fs").then(|| value.trim().parse().ok())?
        })
}

pub fn load_record(path: &Path, opts: &LoadOptions) -> Result<Record> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path)?;
    parse_record(&text, &shown, record_id(path), opts)
}

/// Parses record text; `source` names the input in error messages.
pub fn parse_record(text: &str, source: &str, id: String, opts: &LoadOptions) -> Result<Record> {
    let fs = opts
        .fs
        .or_else(|| header_fs(text))
        .ok_or_else(|| BcgError::MissingFs {
            path: source.to_string(),
        })?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(BcgError::InvalidInput(format!(
            "{source}: sampling rate must be positive, got {fs}"
        )));
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BcgError::MissingColumn {
                path: source.to_string(),
                column: name.to_string(),
            })
    };
    let ecg_col = column(&opts.columns.ecg)?;
    let bcg_col = column(&opts.columns.bcg)?;

    let (mut ecg, mut bcg) = (Vec::new(), Vec::new());
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = n + 1;
        if row.len() != headers.len() {
            return Err(BcgError::Parse {
                path: source.to_string(),
                row: row_no,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let cell = |col: usize| -> Result<f64> {
            let raw = &row[col];
            let v: f64 = raw.parse().map_err(|_| BcgError::Parse {
                path: source.to_string(),
                row: row_no,
                message: format!("`{raw}` in column `{}` is not a number", &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(BcgError::NonFinite {
                    path: source.to_string(),
                    row: row_no,
                    column: headers[col].to_string(),
                });
            }
            Ok(v)
        };
        ecg.push(cell(ecg_col)?);
        bcg.push(cell(bcg_col)?);
    }
    Record::new(id, fs, ecg, bcg)
}

/// CSV text for a record, with a time column and the fs header.
/// Values are written in shortest round-trip form, so loading the text
/// gives back the same samples bit for bit.
pub fn format_record(record: &Record) -> String {
    let mut out = String::with_capacity(record.len() * 40);
    let _ = writeln!(out, "# fs={}", record.fs);
    out.push_str("time,ecg,bcg\n");
    for (i, (e, b)) in record.ecg.iter().zip(&record.bcg).enumerate() {
        let _ = writeln!(out, "{},{e},{b}", i as f64 / record.fs);
    }
    out
}

pub fn save_record(path: &Path, record: &Record) -> Result<()> {
    fs::write(path, format_record(record))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(fs: Option<f64>) -> LoadOptions {
        LoadOptions {
            fs,
            ..LoadOptions::default()
        }
    }

    fn parse(text: &str, fs: Option<f64>) -> Result<Record> {
        parse_record(text, "t.csv", "t".into(), &opts(fs))
    }

    #[test]
    fn three_rows_with_fs_flag() {
        let r = parse("time,ecg,bcg\n0,1,2\n0.001,3,4\n0.002,5,6\n", Some(1000.0)).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.fs, 1000.0);
        assert_eq!(r.bcg, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn fs_from_header_and_flag_precedence() {
        let text = "# recorded on bench 2\n# fs = 250\necg,bcg\n1,2\n3,4\n";
        assert_eq!(parse(text, None).unwrap().fs, 250.0);
        assert_eq!(parse(text, Some(500.0)).unwrap().fs, 500.0);
        let err = parse("ecg,bcg\n1,2\n", None).unwrap_err();
        assert!(matches!(err, BcgError::MissingFs { .. }));
    }

    #[test]
    fn nan_names_its_row() {
        let mut text = String::from("time,ecg,bcg\n");
        for i in 1..=20 {
            let b = if i == 17 {
                "NaN".to_string()
            } else {
                i.to_string()
            };
            text.push_str(&format!("{i},0.5,{b}\n"));
        }
        let err = parse(&text, Some(100.0)).unwrap_err();
        assert!(matches!(err, BcgError::NonFinite { row: 17, .. }), "{err}");
        assert!(err.to_string().contains("row 17"));
    }

    #[test]
    fn structural_errors_are_distinct() {
        let err = parse("time,ecg\n0,1\n", Some(1.0)).unwrap_err();
        assert!(matches!(err, BcgError::MissingColumn { ref column, .. } if column == "bcg"));

        let err = parse("ecg,bcg\n1,2\n3\n", Some(1.0)).unwrap_err();
        assert!(matches!(err, BcgError::Parse { row: 2, .. }), "{err}");

        let err = parse("ecg,bcg\n1,x\n", Some(1.0)).unwrap_err();
        assert!(matches!(err, BcgError::Parse { row: 1, .. }));
    }

    #[test]
    fn custom_column_names() {
        let o = LoadOptions {
            fs: Some(1.0),
            columns: ColumnMap {
                ecg: "lead2".into(),
                bcg: "bed".into(),
                ..ColumnMap::default()
            },
        };
        let r = parse_record("bed,lead2\n1,2\n", "t.csv", "t".into(), &o).unwrap();
        assert_eq!((r.ecg[0], r.bcg[0]), (2.0, 1.0));
    }

    #[test]
    fn format_then_parse_is_identity() {
        let r = Record::new(
            "x",
            333.3,
            vec![0.1, -1e-300, 1.0 / 3.0],
            vec![f64::MAX, 2.5e-8, -0.0],
        )
        .unwrap();
        let back = parse_record(&format_record(&r), "x", "x".into(), &opts(None)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn id_strips_csv_extension() {
        assert_eq!(record_id(Path::new("/a/b/s01.csv")), "s01");
        assert_eq!(record_id(Path::new("s01.txt")), "s01.txt");
    }
}
