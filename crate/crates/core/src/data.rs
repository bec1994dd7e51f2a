//! Dataset ingestion, normalization, splitting, and synthetic generators.
//!
//! CSV files use a comma separator, optional single header row, UTF-8, and
//! decimal floats printed with 17 significant digits so numeric values
//! round-trip bitwise. Labels serialize as +1 (normal) / -1 (anomaly).

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeded_rng;

/// n samples × d features with optional ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
    labels: Option<Vec<i8>>,
    feature_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(
        x: DMatrix<f64>,
        labels: Option<Vec<i8>>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::validation("dataset must contain at least one row"));
        }
        for (idx, v) in x.iter().enumerate() {
            if !v.is_finite() {
                let (r, c) = (idx % x.nrows(), idx / x.nrows());
                return Err(Error::validation(format!(
                    "non-finite value {v} at row {r}, column {c}"
                )));
            }
        }
        if let Some(ref l) = labels {
            if l.len() != x.nrows() {
                return Err(Error::validation(format!(
                    "label count {} does not match row count {}",
                    l.len(),
                    x.nrows()
                )));
            }
            if let Some(bad) = l.iter().find(|&&v| v != 1 && v != -1) {
                return Err(Error::validation(format!(
                    "labels must be +1 or -1, found {bad}"
                )));
            }
        }
        if let Some(ref names) = feature_names {
            if names.len() != x.ncols() {
                return Err(Error::validation("feature name count does not match d"));
            }
        }
        Ok(Self {
            x,
            labels,
            feature_names,
        })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("dataset must contain at least one row"));
        }
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(DMatrix::from_row_slice(rows.len(), d, &flat), None, None)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn with_labels(mut self, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::validation("label count does not match row count"));
        }
        if labels.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::validation("labels must be +1 or -1"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Keeps only the rows at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::validation("selection must keep at least one row"));
        }
        let mut x = DMatrix::zeros(indices.len(), self.d());
        for (out, &i) in indices.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            x.set_row(out, &self.x.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            x,
            labels,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Drops anomaly (-1) rows; returns the shrunk set and the dropped count.
    pub fn normals_only(&self) -> Result<(Self, usize)> {
        match &self.labels {
            None => Ok((self.clone(), 0)),
            Some(l) => {
                let keep: Vec<usize> = (0..self.n()).filter(|&i| l[i] == 1).collect();
                let dropped = self.n() - keep.len();
                if keep.is_empty() {
                    return Err(Error::validation(
                        "no normal (+1) rows to train on after dropping anomalies",
                    ));
                }
                Ok((self.select(&keep)?, dropped))
            }
        }
    }
}

/// Scales every row to unit L2 norm. A zero row is a validation error.
pub fn normalize_rows(dm: &DataMatrix) -> Result<DataMatrix> {
    let mut x = dm.x().clone();
    for i in 0..x.nrows() {
        let norm = x.row(i).norm();
        if norm == 0.0 {
            return Err(Error::validation(format!(
                "row {i} has zero norm and cannot be normalized"
            )));
        }
        for j in 0..x.ncols() {
            x[(i, j)] /= norm;
        }
    }
    DataMatrix::new(x, dm.labels.clone(), dm.feature_names.clone())
}

fn parse_label(raw: &str, row: usize, col: usize) -> Result<i8> {
    match raw.trim() {
        "+1" | "1" | "normal" => Ok(1),
        "-1" | "anomaly" => Ok(-1),
        other => match other.parse::<f64>() {
            Ok(v) if v == 1.0 => Ok(1),
            Ok(v) if v == -1.0 => Ok(-1),
            _ => Err(Error::Parse {
                row,
                col,
                msg: format!("label must be +1/-1 or normal/anomaly, got {other:?}"),
            }),
        },
    }
}

/// Loads a CSV file, optionally extracting one column as ±1 labels.
///
/// With a header, `label_column` matches by name; without one it must be a
/// 0-based column index.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
    has_header: bool,
) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut records = reader.records();
    let mut header: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            Some(rec) => {
                header = Some(rec?.iter().map(|s| s.trim().to_string()).collect());
            }
            None => return Err(Error::validation("empty file")),
        }
    }

    let label_idx: Option<usize> = match label_column {
        None => None,
        Some(name) => match &header {
            Some(cols) => Some(cols.iter().position(|c| c == name).ok_or_else(|| {
                Error::invalid(format!("label column {name:?} not found in header"))
            })?),
            None => Some(name.parse::<usize>().map_err(|_| {
                Error::invalid(format!(
                    "label column must be a 0-based index for headerless files, got {name:?}"
                ))
            })?),
        },
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let mut width: Option<usize> = None;
    for (li, rec) in records.enumerate() {
        let rec = rec?;
        let row_no = li + usize::from(has_header);
        match width {
            None => width = Some(rec.len()),
            Some(w) if rec.len() != w => {
                return Err(Error::Parse {
                    row: row_no,
                    col: rec.len(),
                    msg: format!("ragged row: expected {w} fields, got {}", rec.len()),
                })
            }
            _ => {}
        }
        if let Some(idx) = label_idx {
            if idx >= rec.len() {
                return Err(Error::Parse {
                    row: row_no,
                    col: idx,
                    msg: "label column index out of range".into(),
                });
            }
        }
        let mut row = Vec::with_capacity(rec.len());
        for (ci, field) in rec.iter().enumerate() {
            if Some(ci) == label_idx {
                labels.push(parse_label(field, row_no, ci)?);
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: ci,
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value at row {row_no}, column {ci}"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::validation("file contains no data rows"));
    }

    let d = rows[0].len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let x = DMatrix::from_row_slice(rows.len(), d, &flat);
    let feature_names = header.map(|cols| {
        cols.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, c)| c.clone())
            .collect()
    });
    DataMatrix::new(
        x,
        if label_idx.is_some() {
            Some(labels)
        } else {
            None
        },
        feature_names,
    )
}

/// Formats a float with 17 significant digits (exact f64 round-trip).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV with optional header and the ±1 label column appended last.
pub fn save_csv(dm: &DataMatrix, path: impl AsRef<Path>, write_header: bool) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let d = dm.d();
    if write_header {
        let names: Vec<String> = match dm.feature_names() {
            Some(n) => n.to_vec(),
            None => (0..d).map(|j| format!("x{j}")).collect(),
        };
        let mut cols = names;
        if dm.labels().is_some() {
            cols.push("y".to_string());
        }
        writeln!(out, "{}", cols.join(","))?;
    }
    for i in 0..dm.n() {
        let mut fields: Vec<String> = (0..d).map(|j| fmt_f64(dm.x()[(i, j)])).collect();
        if let Some(l) = dm.labels() {
            fields.push(if l[i] == 1 { "+1".into() } else { "-1".into() });
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

fn split_counts(n: usize, frac: f64) -> usize {
    ((n as f64) * frac).round() as usize
}

/// Seeded shuffle split. With `stratified`, each class is split separately so
/// class proportions are preserved to within one sample.
pub fn split(
    dm: &DataMatrix,
    train_frac: f64,
    seed: u64,
    stratified: bool,
) -> Result<(DataMatrix, DataMatrix)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train_frac must lie in (0,1), got {train_frac}"
        )));
    }
    if dm.n() < 2 {
        return Err(Error::validation("need at least two rows to split"));
    }
    let mut rng = seeded_rng(seed);

    let shuffled = |mut idx: Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng| {
        // Fisher-Yates, explicit so the draw sequence is pinned.
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    };

    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    if stratified {
        let labels = dm
            .labels()
            .ok_or_else(|| Error::validation("stratified split requires labels"))?;
        for class in [1i8, -1i8] {
            let members: Vec<usize> = (0..dm.n()).filter(|&i| labels[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < 2 {
                return Err(Error::validation(format!(
                    "class {class} has fewer than 2 samples; cannot stratify"
                )));
            }
            let members = shuffled(members, &mut rng);
            let n_train = split_counts(members.len(), train_frac).clamp(1, members.len() - 1);
            train_idx.extend_from_slice(&members[..n_train]);
            test_idx.extend_from_slice(&members[n_train..]);
        }
    } else {
        let idx = shuffled((0..dm.n()).collect(), &mut rng);
        let n_train = split_counts(dm.n(), train_frac).clamp(1, dm.n() - 1);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dm.select(&train_idx)?, dm.select(&test_idx)?))
}

/// One sample of the noisy-curve distribution: with abscissa `x`, sign `s`
/// and noise `u`, the ordinate is `√x·(x + s·u)`. With `u = 0` points lie
/// exactly on `y = x^{3/2}`.
pub fn arbitrary_curve_point(x: f64, s: f64, u: f64) -> [f64; 2] {
    [x, x.sqrt() * (x + s * u)]
}

/// n two-dimensional standard-normal points (seeded; one row per point, the
/// two coordinates drawn in order).
pub fn gen_gaussian(n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = seeded_rng(seed);
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        x[(i, 0)] = StandardNormal.sample(&mut rng);
        x[(i, 1)] = StandardNormal.sample(&mut rng);
    }
    DataMatrix::new(x, None, None)
}

/// n points on a noisy curve: x uniform on (0, 2], y = √x·(x + s·u) with s
/// the sign of a standard-normal draw and u uniform on [0, 1).
pub fn gen_arbitrary(n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = seeded_rng(seed);
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        // (0, 2]: flip the half-open [0, 2) around the midpoint.
        let xs = 2.0 - rng.gen_range(0.0..2.0);
        let gauss: f64 = StandardNormal.sample(&mut rng);
        let s = if gauss >= 0.0 { 1.0 } else { -1.0 };
        let u = rng.gen_range(0.0..1.0);
        let p = arbitrary_curve_point(xs, s, u);
        x[(i, 0)] = p[0];
        x[(i, 1)] = p[1];
    }
    DataMatrix::new(x, None, None)
}
