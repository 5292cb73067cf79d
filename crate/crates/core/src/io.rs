//! File formats.
//!
//! Prediction CSV: header `label,attribute,score_0,...,score_{C-1}`, one row
//! per sample. Feature CSV: header `f_0,...,f_{d-1}` with the same row
//! order. Pools, reports and models are JSON. Floats are written in their
//! shortest round-trip form (at most 17 significant digits) and parsed with
//! a dot decimal separator regardless of locale.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::clustering::Centroids;
use crate::coverage::{CoverageReport, FrontierPoint};
use crate::dataset::{softmax_rows, PredictionSet, SIMPLEX_TOLERANCE};
use crate::error::{Error, Result};
use crate::scaling::{ScalingVector, TradeoffPool};

/// Rows further than this from the simplex are rejected.
pub const LOAD_SIMPLEX_TOLERANCE: f64 = 1e-6;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Header plus numeric rows, with their 1-based line numbers.
struct CsvTable {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table<R: Read>(reader: R, path: &Path) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            })
        }
        Some(r) => r.map_err(|e| csv_error(path, e))?,
    };
    let header: Vec<String> = header.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::WidthMismatch {
                path: path.to_path_buf(),
                line,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(CsvTable { header, rows })
}

fn parse_f64(field: &str, path: &Path, line: u64) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("`{field}` is not a number"),
    })
}

fn parse_index(field: &str, path: &Path, line: u64) -> Result<usize> {
    field.parse::<usize>().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: format!("`{field}` is not a nonnegative integer"),
    })
}

fn check_header(
    header: &[String],
    expected: impl Iterator<Item = String>,
    path: &Path,
) -> Result<()> {
    for (i, want) in expected.enumerate() {
        if header.get(i).map(String::as_str) != Some(want.as_str()) {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: 1,
                message: format!("header column {i} should be `{want}`"),
            });
        }
    }
    Ok(())
}

/// Scores, labels and attributes parsed from a prediction CSV.
pub struct PredictionRows {
    pub scores: Array2<f64>,
    pub labels: Vec<usize>,
    pub attributes: Vec<usize>,
}

pub fn read_prediction_rows<R: Read>(
    reader: R,
    path: &Path,
    logits: bool,
) -> Result<PredictionRows> {
    let table = read_table(reader, path)?;
    let width = table.header.len();
    if width < 4 {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: "need label, attribute and at least two score columns".into(),
        });
    }
    let c = width - 2;
    check_header(
        &table.header,
        ["label".to_string(), "attribute".to_string()]
            .into_iter()
            .chain((0..c).map(|k| format!("score_{k}"))),
        path,
    )?;
    let n = table.rows.len();
    let mut scores = Array2::zeros((n, c));
    let mut labels = Vec::with_capacity(n);
    let mut attributes = Vec::with_capacity(n);
    for (i, (line, row)) in table.rows.iter().enumerate() {
        let y = parse_index(&row[0], path, *line)?;
        if y >= c {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: *line,
                message: format!("label {y} out of range for {c} classes"),
            });
        }
        labels.push(y);
        attributes.push(parse_index(&row[1], path, *line)?);
        for k in 0..c {
            let v = parse_f64(&row[2 + k], path, *line)?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("score `{}` is not finite", row[2 + k]),
                });
            }
            scores[[i, k]] = v;
        }
    }
    if logits {
        scores = softmax_rows(scores.view());
    } else {
        for (i, mut row) in scores.outer_iter_mut().enumerate() {
            let line = table.rows[i].0;
            let sum: f64 = row.sum();
            if row.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > LOAD_SIMPLEX_TOLERANCE {
                return Err(Error::SimplexViolation {
                    path: path.to_path_buf(),
                    line,
                    sum,
                });
            }
            // rows already on the simplex are kept bit-for-bit
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                row.mapv_inplace(|v| v / sum);
            }
        }
    }
    Ok(PredictionRows {
        scores,
        labels,
        attributes,
    })
}

pub fn read_features<R: Read>(reader: R, path: &Path) -> Result<Array2<f64>> {
    let table = read_table(reader, path)?;
    let d = table.header.len();
    check_header(&table.header, (0..d).map(|k| format!("f_{k}")), path)?;
    let mut features = Array2::zeros((table.rows.len(), d));
    for (i, (line, row)) in table.rows.iter().enumerate() {
        for k in 0..d {
            let v = parse_f64(&row[k], path, *line)?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: *line,
                    message: "non-finite feature".into(),
                });
            }
            features[[i, k]] = v;
        }
    }
    Ok(features)
}

pub fn load_features(path: &Path) -> Result<Array2<f64>> {
    read_features(open(path)?, path)
}

/// Loads a prediction CSV and, optionally, its feature CSV. The attribute
/// range is `max attribute + 1`.
pub fn load_prediction_set(
    prediction_path: &Path,
    feature_path: Option<&Path>,
    logits: bool,
) -> Result<PredictionSet> {
    let rows = read_prediction_rows(open(prediction_path)?, prediction_path, logits)?;
    let features = feature_path.map(load_features).transpose()?;
    if let Some(f) = &features {
        if f.nrows() != rows.labels.len() {
            return Err(Error::RowCountMismatch {
                predictions: rows.labels.len(),
                features: f.nrows(),
            });
        }
    }
    let num_attributes = rows.attributes.iter().max().map_or(1, |m| m + 1);
    log::info!(
        "loaded {} samples from {}",
        rows.labels.len(),
        prediction_path.display()
    );
    PredictionSet::new(
        rows.scores,
        rows.labels,
        rows.attributes,
        num_attributes,
        features,
    )
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))
}

pub fn write_prediction_rows<W: Write>(set: &PredictionSet, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string(), "attribute".to_string()];
    header.extend((0..set.num_classes()).map(|k| format!("score_{k}")));
    w.write_record(&header)?;
    for i in 0..set.len() {
        let mut rec = vec![set.labels()[i].to_string(), set.attributes()[i].to_string()];
        rec.extend(set.score_row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_features<W: Write>(
    features: ndarray::ArrayView2<'_, f64>,
    writer: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..features.ncols()).map(|k| format!("f_{k}")))?;
    for row in features.outer_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()
}

/// Writes the prediction CSV, and the feature CSV when both a path and
/// features are present.
pub fn save_prediction_set(
    set: &PredictionSet,
    prediction_path: &Path,
    feature_path: Option<&Path>,
) -> Result<()> {
    let w = create(prediction_path)?;
    write_prediction_rows(set, w).map_err(io_err(prediction_path))?;
    if let (Some(path), Some(features)) = (feature_path, set.features()) {
        save_features(features, path)?;
    }
    Ok(())
}

pub fn save_features(features: ndarray::ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let w = create(path)?;
    write_features(features, w).map_err(io_err(path))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    flush(w, path)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_pool(pool: &TradeoffPool, path: &Path) -> Result<()> {
    save_json(pool, path)
}

pub fn load_pool(path: &Path) -> Result<TradeoffPool> {
    load_json(path)
}

pub fn save_report(report: &CoverageReport, path: &Path) -> Result<()> {
    save_json(report, path)
}

pub fn load_report(path: &Path) -> Result<CoverageReport> {
    load_json(path)
}

/// `e0;e1;...` for on-grid vectors, `x:f0;f1;...` otherwise.
pub fn format_scaling(s: &ScalingVector) -> String {
    match s.exponents() {
        Some(e) => e.iter().map(i32::to_string).collect::<Vec<_>>().join(";"),
        None => format!(
            "x:{}",
            s.factors()
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";")
        ),
    }
}

pub fn parse_scaling(field: &str, base: f64) -> Result<ScalingVector> {
    let bad = || Error::invalid(format!("cannot parse scaling `{field}`"));
    match field.strip_prefix("x:") {
        Some(raw) => {
            let factors = raw
                .split(';')
                .map(|v| v.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            ScalingVector::new(factors)
        }
        None => {
            let exps = field
                .split(';')
                .map(|v| v.parse::<i32>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            ScalingVector::from_exponents(base, &exps)
        }
    }
}

pub fn write_frontier_csv<W: Write>(frontier: &[FrontierPoint], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["average_accuracy", "robust_accuracy", "scaling_exponents"])?;
    for p in frontier {
        w.write_record([
            p.average.to_string(),
            p.robust.to_string(),
            format_scaling(&p.scaling),
        ])?;
    }
    w.flush()
}

pub fn save_frontier_csv(frontier: &[FrontierPoint], path: &Path) -> Result<()> {
    let w = create(path)?;
    write_frontier_csv(frontier, w).map_err(io_err(path))
}

/// Centroids as an `f_0..f_{d-1}` CSV, one row per cluster.
pub fn save_centroids_csv(centroids: &Centroids, path: &Path) -> Result<()> {
    save_features(centroids.points.view(), path)
}

pub fn load_centroids_csv(path: &Path) -> Result<Centroids> {
    Centroids::new(load_features(path)?)
}

pub fn path_with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn parse(text: &str, logits: bool) -> Result<PredictionRows> {
        read_prediction_rows(text.as_bytes(), Path::new("mem.csv"), logits)
    }

    #[test]
    fn parses_a_row() {
        let rows = parse("label,attribute,score_0,score_1\n0,1,0.7,0.3\n", false).unwrap();
        assert_eq!(rows.labels, vec![0]);
        assert_eq!(rows.attributes, vec![1]);
        assert_eq!(rows.scores.row(0).to_vec(), vec![0.7, 0.3]);
    }

    #[test]
    fn softmaxes_logits() {
        let rows = parse("label,attribute,score_0,score_1\n0,0,2.0,0.0\n", true).unwrap();
        let e2 = 2.0f64.exp();
        assert_relative_eq!(rows.scores[[0, 0]], e2 / (e2 + 1.0), epsilon = 1e-15);
        assert_relative_eq!(rows.scores[[0, 0]], 0.8808, epsilon = 1e-4);
        assert_relative_eq!(rows.scores[[0, 1]], 0.1192, epsilon = 1e-4);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(parse("", false), Err(Error::EmptyFile { .. })));
        assert!(matches!(
            parse("label,attribute,score_0,score_1\n0,0,0.5\n", false),
            Err(Error::WidthMismatch { line: 2, .. })
        ));
        assert!(matches!(
            parse(
                "label,attribute,score_0,score_1\n0,0,0.5,0.5\n1,0,0.7,0.4\n",
                false
            ),
            Err(Error::SimplexViolation { line: 3, .. })
        ));
        assert!(matches!(
            parse("label,attribute,score_0,score_1\n0,x,0.5,0.5\n", false),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse("label,attribute,score_0,score_1\n0,0,0.5,0,5\n", false),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn near_simplex_rows_are_renormalized() {
        let rows = parse(
            "label,attribute,score_0,score_1\n0,0,0.5000004,0.5\n",
            false,
        )
        .unwrap();
        assert_relative_eq!(rows.scores.row(0).sum(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_file_error_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        let err = load_prediction_set(&p, None, false).unwrap_err();
        assert!(err.to_string().contains("empty.csv"));
    }

    #[test]
    fn scaling_field_roundtrip() {
        let s = ScalingVector::from_exponents(1.05, &[0, -12, 7]).unwrap();
        assert_eq!(format_scaling(&s), "0;-12;7");
        assert_eq!(parse_scaling("0;-12;7", 1.05).unwrap(), s);
        let r = ScalingVector::new(vec![1.0, 0.1 + 0.2]).unwrap();
        assert_eq!(parse_scaling(&format_scaling(&r), 1.05).unwrap(), r);
    }
}
