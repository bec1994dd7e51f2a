//! Versioned model persistence and the generic scoring view.
//!
//! All three model kinds serialize to one JSON schema:
//! `{format_version, model_type, d, K, eta, nu, C, normalize_rows,
//!   W1, b1, W2, b2, seed, trained_n}`
//! with frames stored as row-major float arrays. Floats are written with 17
//! significant digits so a parse-and-rewrite round trip is byte-identical.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{normalize_rows, DataMatrix};
use crate::error::{Error, Result};

use super::bods::{bods_point_score, BodsModel};
use super::gods::{gods_point_score, GodsModel};
use super::kgods::KgodsModel;
use super::{HyperParams, SlackMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bods,
    Gods,
    Kgods,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Bods => write!(f, "bods"),
            ModelKind::Gods => write!(f, "gods"),
            ModelKind::Kgods => write!(f, "kgods"),
        }
    }
}

/// The on-disk document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub format_version: u32,
    pub model_type: ModelKind,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub eta: f64,
    pub nu: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub normalize_rows: bool,
    #[serde(rename = "W1")]
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub seed: u64,
    pub trained_n: usize,
}

fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn unflatten_row_major(flat: &[f64], d: usize, k: usize) -> Result<DMatrix<f64>> {
    if flat.len() != d * k {
        return Err(Error::validation(format!(
            "frame array has {} entries, expected {}x{}={}",
            flat.len(),
            d,
            k,
            d * k
        )));
    }
    Ok(DMatrix::from_fn(d, k, |i, j| flat[i * k + j]))
}

impl ModelFile {
    pub fn from_gods(model: &GodsModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_type: ModelKind::Gods,
            d: model.feature_dim,
            k: model.hyper.k,
            eta: model.hyper.eta,
            nu: model.hyper.nu,
            c: model.hyper.c,
            normalize_rows: model.hyper.normalize_rows,
            w1: flatten_row_major(model.params.w1.mat()),
            b1: model.params.b1.iter().cloned().collect(),
            w2: flatten_row_major(model.params.w2.mat()),
            b2: model.params.b2.iter().cloned().collect(),
            seed: model.seed,
            trained_n: model.trained_n,
        }
    }

    pub fn from_bods(model: &BodsModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_type: ModelKind::Bods,
            d: model.feature_dim,
            k: 1,
            eta: model.hyper.eta,
            nu: model.hyper.nu,
            c: model.hyper.c,
            normalize_rows: model.hyper.normalize_rows,
            w1: model.w1.iter().cloned().collect(),
            b1: vec![model.b1],
            w2: model.w2.iter().cloned().collect(),
            b2: vec![model.b2],
            seed: model.seed,
            trained_n: model.trained_n,
        }
    }

    /// The dual model persists through its recovered primal frames with zero
    /// biases.
    pub fn from_kgods(model: &KgodsModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_type: ModelKind::Kgods,
            d: model.feature_dim,
            k: model.hyper.k,
            eta: model.hyper.eta,
            nu: model.hyper.nu,
            c: model.hyper.c,
            normalize_rows: model.hyper.normalize_rows,
            w1: flatten_row_major(&model.w1),
            b1: vec![0.0; model.hyper.k],
            w2: flatten_row_major(&model.w2),
            b2: vec![0.0; model.hyper.k],
            seed: model.seed,
            trained_n: model.trained_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let k = if self.model_type == ModelKind::Bods {
            1
        } else {
            self.k
        };
        if self.d == 0 || k == 0 {
            return Err(Error::validation("d and K must be positive"));
        }
        for (name, arr, expect) in [
            ("W1", &self.w1, self.d * k),
            ("W2", &self.w2, self.d * k),
            ("b1", &self.b1, k),
            ("b2", &self.b2, k),
        ] {
            if arr.len() != expect {
                return Err(Error::validation(format!(
                    "{name} has {} entries, expected {expect}",
                    arr.len()
                )));
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} contains non-finite values"
                )));
            }
        }
        Ok(())
    }
}

/// serde_json formatter that prints every f64 with 17 significant digits.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a model document with the 17-digit float convention.
pub fn model_to_json(model: &ModelFile) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
    model.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    model.validate()?;
    let json = model_to_json(model)?;
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let model: ModelFile = serde_json::from_str(&raw)?;
    model.validate()?;
    Ok(model)
}

/// A deserialized model ready to score points, independent of how it was
/// trained. Scoring follows the model type: linear hinges for the
/// hyperplane pair, squared hinges plus projection energy for the subspace
/// variants.
#[derive(Debug, Clone)]
pub struct ScoringModel {
    pub kind: ModelKind,
    pub d: usize,
    pub k: usize,
    pub eta: f64,
    pub nu: f64,
    pub normalize_rows: bool,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl ScoringModel {
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        file.validate()?;
        let k = if file.model_type == ModelKind::Bods {
            1
        } else {
            file.k
        };
        Ok(Self {
            kind: file.model_type,
            d: file.d,
            k,
            eta: file.eta,
            nu: file.nu,
            normalize_rows: file.normalize_rows,
            w1: unflatten_row_major(&file.w1, file.d, k)?,
            b1: DVector::from_vec(file.b1.clone()),
            w2: unflatten_row_major(&file.w2, file.d, k)?,
            b2: DVector::from_vec(file.b2.clone()),
        })
    }

    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::invalid(format!(
                "point dimension {} does not match model dimension {}",
                x.len(),
                self.d
            )));
        }
        Ok(match self.kind {
            ModelKind::Bods => bods_point_score(
                &self.w1.column(0).into_owned(),
                self.b1[0],
                &self.w2.column(0).into_owned(),
                self.b2[0],
                self.eta,
                x,
            ),
            ModelKind::Gods | ModelKind::Kgods => {
                gods_point_score(&self.w1, &self.b1, &self.w2, &self.b2, self.eta, self.nu, x)
            }
        })
    }

    /// Scores every row, applying the stored normalization flag.
    pub fn score_matrix(&self, dm: &DataMatrix) -> Result<Vec<f64>> {
        if dm.d() != self.d {
            return Err(Error::invalid(format!(
                "data dimension {} does not match model dimension {}",
                dm.d(),
                self.d
            )));
        }
        let prepared = if self.normalize_rows {
            normalize_rows(dm)?
        } else {
            dm.clone()
        };
        (0..prepared.n())
            .map(|i| self.score(&prepared.row(i)))
            .collect()
    }

    /// Hyperparameters reconstructed from the file (slack mode is not part
    /// of the schema; scoring never uses it).
    pub fn hyper(&self) -> HyperParams {
        HyperParams {
            k: self.k,
            eta: self.eta,
            nu: self.nu,
            c: 1.0,
            normalize_rows: self.normalize_rows,
            slack: SlackMode::Zero,
        }
    }
}
