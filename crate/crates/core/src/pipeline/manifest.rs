use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKind,
    /// Paths are relative to the manifest's directory unless absolute.
    pub kernel_file: PathBuf,
    /// `[T, S, H, W]` for conv layers, `[out, in]` for linear layers.
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<PathBuf>,
    #[serde(default)]
    pub skip: bool,
}

impl LayerEntry {
    /// Kernel dims as a 4-way shape; linear `[m, n]` becomes `[m, n, 1, 1]`.
    pub fn dims4(&self) -> [usize; 4] {
        match self.kind {
            LayerKind::Conv => [self.dims[0], self.dims[1], self.dims[2], self.dims[3]],
            LayerKind::Linear => [self.dims[0], self.dims[1], 1, 1],
        }
    }

    /// Length of one input patch, `S·H·W` (or `n` for linear layers).
    pub fn patch_dim(&self) -> usize {
        let [_, s, h, w] = self.dims4();
        s * h * w
    }

    pub fn param_count(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub model: String,
    pub layers: Vec<LayerEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ModelManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ModelManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Manifest("manifest lists no layers".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.layers {
            if l.name.is_empty() || l.name.contains(['/', '\\']) || l.name.starts_with('.') {
                return Err(Error::Manifest(format!(
                    "layer name `{}` must be non-empty, not start with '.', and contain no path separators",
                    l.name
                )));
            }
            if !seen.insert(&l.name) {
                return Err(Error::Manifest(format!(
                    "duplicate layer name `{}`",
                    l.name
                )));
            }
            let want = match l.kind {
                LayerKind::Conv => 4,
                LayerKind::Linear => 2,
            };
            if l.dims.len() != want || l.dims.contains(&0) {
                return Err(Error::Manifest(format!(
                    "layer `{}`: {:?} layers need {want} positive dims, got {:?}",
                    l.name, l.kind, l.dims
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ModelManifest> {
        let m: ModelManifest =
            serde_json::from_str(s).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    #[test]
    fn parses_minimal_manifest() {
        let m = parse(
            r#"{"model": "toy", "layers": [
                {"name": "conv1", "kind": "conv", "kernel_file": "c1.npy", "dims": [4, 3, 3, 3], "skip": true},
                {"name": "fc", "kind": "linear", "kernel_file": "fc.npy", "dims": [10, 4], "sigma_file": "fc.sigma.npy"}
            ]}"#,
        )
        .unwrap();
        assert!(m.layers[0].skip);
        assert!(!m.layers[1].skip);
        assert_eq!(m.layers[1].dims4(), [10, 4, 1, 1]);
        assert_eq!(m.layers[0].patch_dim(), 27);
        assert_eq!(m.layers[0].param_count(), 108);
    }

    #[test]
    fn rejects_bad_manifests() {
        let bad = [
            r#"{"model": "m", "layers": []}"#,
            r#"{"model": "m", "layers": [{"name": "a", "kind": "conv", "kernel_file": "a", "dims": [1, 2]}]}"#,
            r#"{"model": "m", "layers": [{"name": "a/b", "kind": "linear", "kernel_file": "a", "dims": [1, 2]}]}"#,
            r#"{"model": "m", "layers": [{"name": "a", "kind": "linear", "kernel_file": "a", "dims": [1, 2]},
                                        {"name": "a", "kind": "linear", "kernel_file": "b", "dims": [1, 2]}]}"#,
            r#"{"model": "m", "layers": [{"name": "a", "kind": "dense", "kernel_file": "a", "dims": [1, 2]}]}"#,
            r#"{"model": "m", "layers": [{"name": "a", "kind": "linear", "kernel_file": "a", "dims": [1, 2], "extra": 1}]}"#,
        ];
        for b in bad {
            assert!(matches!(parse(b), Err(Error::Manifest(_))), "{b}");
        }
    }
}
