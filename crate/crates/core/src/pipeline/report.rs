use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::LayerKind;
use crate::error::{Error, Result};
use crate::rank::Method;

pub const SCHEMA: &str = "sigma-lowrank/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Frobenius,
    Sigma,
    /// Element-weighted Frobenius norm with a per-layer weight tensor.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Warm,
    Hosvd,
    Random,
}

/// The settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub method: Method,
    pub norm: NormKind,
    pub alpha: f64,
    pub epsilon: f64,
    pub sweeps: usize,
    pub tol: f64,
    pub init: InitKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub name: String,
    pub kind: LayerKind,
    pub dims: Vec<usize>,
    pub skipped: bool,
    /// Decomposition actually used (linear layers always use SVD).
    pub method: Option<Method>,
    pub ranks: Vec<usize>,
    pub r_vbmf: Vec<usize>,
    pub r_max: Vec<usize>,
    pub sweeps: Option<usize>,
    pub objective: Option<f64>,
    pub rel_error_frobenius: Option<f64>,
    pub rel_error_sigma: Option<f64>,
    pub functional_error: Option<f64>,
    pub original_params: usize,
    pub compressed_params: usize,
    /// Factor file names, relative to the output directory.
    pub factor_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub original_params: usize,
    pub compressed_params: usize,
    pub compression_ratio: f64,
    /// Seconds; only recorded when timings are requested.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub schema: String,
    pub model: String,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub status: Status,
    /// Set when `status` is `failed`; `layers` then holds the completed prefix.
    pub error: Option<String>,
    pub config: ReportConfig,
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
}

impl Totals {
    pub fn from_layers(layers: &[LayerReport]) -> Totals {
        let original: usize = layers.iter().map(|l| l.original_params).sum();
        let compressed: usize = layers.iter().map(|l| l.compressed_params).sum();
        Totals {
            original_params: original,
            compressed_params: compressed,
            compression_ratio: if compressed == 0 {
                0.0
            } else {
                original as f64 / compressed as f64
            },
            wall_time: None,
        }
    }
}

impl CompressionReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: CompressionReport = serde_json::from_str(&text)?;
        if r.schema != SCHEMA {
            return Err(Error::Invalid(format!(
                "report schema `{}` is not supported, expected `{SCHEMA}`",
                r.schema
            )));
        }
        Ok(r)
    }
}
