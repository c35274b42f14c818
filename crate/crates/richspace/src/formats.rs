//! JSON/CSV interchange: embedding manifests, similarity curves, video maps
//! and witness reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use richspace_core::{
    CurveEntry, DiscreteVideoMap, Matrix, PromptEmbedding, SimilarityCurve, WitnessReport,
};
use serde::{Deserialize, Serialize};

use crate::npy::{self, NpyError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Npy { path: PathBuf, source: NpyError },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid curve file: {0}")]
    Curve(String),
    #[error("invalid map file: {0}")]
    Map(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> FormatError + '_ {
    move |source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    }
}

fn npy_err(path: &Path) -> impl FnOnce(NpyError) -> FormatError + '_ {
    move |source| FormatError::Npy {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub const MANIFEST_DTYPE: &str = "f32";

/// Sidecar describing one exported prompt embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub prompt: String,
    pub n: usize,
    pub d: usize,
    pub ids_length: usize,
    pub dtype: String,
    /// Tensor path relative to the manifest's directory.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), FormatError> {
        if self.dtype != MANIFEST_DTYPE {
            return Err(FormatError::Manifest(format!(
                "dtype must be \"{MANIFEST_DTYPE}\", got {:?}",
                self.dtype
            )));
        }
        if self.n == 0 || self.d == 0 {
            return Err(FormatError::Manifest("n and d must be at least 1".into()));
        }
        if self.ids_length == 0 || self.ids_length > self.n {
            return Err(FormatError::Manifest(format!(
                "ids_length {} outside 1..={}",
                self.ids_length, self.n
            )));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        let manifest: Manifest = read_json(path.as_ref())?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        self.validate()?;
        write_json(path.as_ref(), self)
    }
}

/// Load a manifest and its tensor as a prompt embedding.
pub fn load_prompt(manifest_path: impl AsRef<Path>) -> Result<PromptEmbedding, FormatError> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    let tensor_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.file);
    let matrix = npy::read_matrix(&tensor_path).map_err(npy_err(&tensor_path))?;
    if matrix.shape() != (manifest.n, manifest.d) {
        return Err(FormatError::Manifest(format!(
            "{} has shape {:?}, manifest says ({}, {})",
            tensor_path.display(),
            matrix.shape(),
            manifest.n,
            manifest.d
        )));
    }
    let mut prompt = PromptEmbedding::new(matrix, manifest.ids_length)
        .map_err(|e| FormatError::Manifest(e.to_string()))?
        .with_prompt(manifest.prompt);
    prompt.source = manifest.encoder;
    Ok(prompt)
}

/// Write `matrix` as `<stem>.npy` next to a `<stem>.json` manifest.
pub fn save_prompt(
    dir: impl AsRef<Path>,
    stem: &str,
    matrix: &Matrix,
    ids_length: usize,
    prompt: &str,
    encoder: Option<&str>,
) -> Result<PathBuf, FormatError> {
    let dir = dir.as_ref();
    let tensor_path = dir.join(format!("{stem}.npy"));
    npy::write_tensor(&tensor_path, &Tensor::Embedding(matrix.clone()))
        .map_err(npy_err(&tensor_path))?;
    let manifest = Manifest {
        prompt: prompt.to_string(),
        n: matrix.rows(),
        d: matrix.cols(),
        ids_length,
        dtype: MANIFEST_DTYPE.to_string(),
        file: format!("{stem}.npy"),
        encoder: encoder.map(str::to_string),
    };
    let manifest_path = dir.join(format!("{stem}.json"));
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}

pub fn write_npy(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), FormatError> {
    let path = path.as_ref();
    npy::write_tensor(path, tensor).map_err(npy_err(path))
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<Tensor, FormatError> {
    let path = path.as_ref();
    npy::read_tensor(path).map_err(npy_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum CurveFormat {
    #[default]
    Csv,
    Json,
}

impl CurveFormat {
    /// Pick the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => CurveFormat::Json,
            _ => CurveFormat::Csv,
        }
    }
}

pub const CURVE_CSV_HEADER: &str = "index,cos_trunc,cos_full,cos_sum";

/// 17 significant digits, enough to round-trip any `f64`.
fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curve_to_csv(curve: &SimilarityCurve) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for e in &curve.entries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.index,
            format_float(e.cos_trunc),
            format_float(e.cos_full),
            format_float(e.cos_sum)
        );
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<SimilarityCurve, FormatError> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_CSV_HEADER) {
        return Err(FormatError::Curve(format!(
            "header must be {CURVE_CSV_HEADER:?}"
        )));
    }
    let mut entries = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(FormatError::Curve(format!(
                "row {} has {} fields",
                row + 1,
                fields.len()
            )));
        }
        let bad = |f: &str| FormatError::Curve(format!("row {}: cannot parse {f:?}", row + 1));
        let float = |f: &str| f.parse::<f64>().map_err(|_| bad(f));
        entries.push(CurveEntry {
            index: fields[0].parse().map_err(|_| bad(fields[0]))?,
            cos_trunc: float(fields[1])?,
            cos_full: float(fields[2])?,
            cos_sum: float(fields[3])?,
        });
    }
    let curve = SimilarityCurve {
        k: entries.len(),
        entries,
    };
    curve
        .validate()
        .map_err(|e| FormatError::Curve(e.to_string()))?;
    Ok(curve)
}

pub fn write_curve(
    path: impl AsRef<Path>,
    curve: &SimilarityCurve,
    format: CurveFormat,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    match format {
        CurveFormat::Csv => fs::write(path, curve_to_csv(curve)).map_err(io_err(path)),
        CurveFormat::Json => write_json(path, curve),
    }
}

pub fn read_curve(
    path: impl AsRef<Path>,
    format: CurveFormat,
) -> Result<SimilarityCurve, FormatError> {
    let path = path.as_ref();
    let curve = match format {
        CurveFormat::Csv => curve_from_csv(&fs::read_to_string(path).map_err(io_err(path))?)?,
        CurveFormat::Json => read_json::<SimilarityCurve>(path)?,
    };
    curve
        .validate()
        .map_err(|e| FormatError::Curve(e.to_string()))?;
    Ok(curve)
}

/// On-disk video map: every output in lexicographic sentence order.
/// `words` and `lipschitz` are only consulted by the bi-Lipschitz bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    #[serde(rename = "V")]
    pub vocab: usize,
    pub n: usize,
    pub d: usize,
    pub outputs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl MapFile {
    pub fn from_map(map: &DiscreteVideoMap) -> Self {
        Self {
            vocab: map.vocab(),
            n: map.sentence_len(),
            d: map.dim(),
            outputs: map.outputs().map(<[f64]>::to_vec).collect(),
            words: None,
            lipschitz: None,
        }
    }

    pub fn to_map(&self) -> Result<DiscreteVideoMap, FormatError> {
        DiscreteVideoMap::from_rows(self.vocab, self.n, self.d, &self.outputs)
            .map_err(|e| FormatError::Map(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        let file: MapFile = read_json(path.as_ref())?;
        file.to_map()?;
        Ok(file)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        write_json(path.as_ref(), self)
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &WitnessReport) -> Result<(), FormatError> {
    write_json(path.as_ref(), report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<WitnessReport, FormatError> {
    read_json(path.as_ref())
}
