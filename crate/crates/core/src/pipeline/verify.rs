use std::fs;
use std::path::{Path, PathBuf};

use super::compress::{functional_error_of, load_inputs, skipped_report, LayerFactors};
use super::manifest::ModelManifest;
use super::report::{CompressionReport, Totals};
use crate::covariance::{relative_recon_error, Norm};
use crate::error::{Error, Result};

/// Absolute or relative deviation allowed between reported and recomputed errors.
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub layers_checked: usize,
    /// Largest deviation seen between a reported and a recomputed error.
    pub max_deviation: f64,
}

fn close(
    name: &str,
    field: &str,
    reported: Option<f64>,
    actual: Option<f64>,
    worst: &mut f64,
) -> Result<()> {
    match (reported, actual) {
        (None, None) => Ok(()),
        (Some(r), Some(a)) => {
            let dev = (r - a).abs() / a.abs().max(1.0);
            *worst = worst.max(dev);
            if dev > VERIFY_TOL {
                return Err(Error::Verify(format!(
                    "layer `{name}`: {field} is {r:e} in the report but {a:e} from the factor files"
                )));
            }
            Ok(())
        }
        (r, a) => Err(Error::Verify(format!(
            "layer `{name}`: {field} reported as {r:?} but recomputed as {a:?}"
        ))),
    }
}

fn mismatch<T: std::fmt::Debug + PartialEq>(
    name: &str,
    field: &str,
    reported: T,
    actual: T,
) -> Result<()> {
    if reported != actual {
        return Err(Error::Verify(format!(
            "layer `{name}`: {field} is {reported:?} in the report, expected {actual:?}"
        )));
    }
    Ok(())
}

/// Re-check a report against its factor files and the manifest inputs: shapes,
/// parameter counts, totals, and all recorded errors (to [`VERIFY_TOL`]).
pub fn verify_report(
    report_path: &Path,
    manifest_override: Option<&Path>,
    out_override: Option<&Path>,
) -> Result<VerifySummary> {
    let report = CompressionReport::load(report_path)?;
    let manifest_path: PathBuf = manifest_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report.manifest.clone());
    let manifest = ModelManifest::load(&manifest_path)?;
    let out_dir: PathBuf = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report.out_dir.clone());
    verify(&report, &manifest, &out_dir)
}

pub fn verify(
    report: &CompressionReport,
    manifest: &ModelManifest,
    out_dir: &Path,
) -> Result<VerifySummary> {
    let mut worst = 0.0f64;
    for layer in &report.layers {
        let entry = manifest
            .layers
            .iter()
            .find(|e| e.name == layer.name)
            .ok_or_else(|| {
                Error::Verify(format!("layer `{}` is not in the manifest", layer.name))
            })?;
        let name = &layer.name;
        mismatch(name, "kind", layer.kind, entry.kind)?;
        mismatch(name, "dims", &layer.dims, &entry.dims)?;
        mismatch(name, "skipped", layer.skipped, entry.skip)?;
        mismatch(
            name,
            "original_params",
            layer.original_params,
            entry.param_count(),
        )?;

        if layer.skipped {
            let expected = skipped_report(entry);
            mismatch(
                name,
                "compressed_params",
                layer.compressed_params,
                expected.compressed_params,
            )?;
            mismatch(
                name,
                "factor_files",
                &layer.factor_files,
                &expected.factor_files,
            )?;
            let src = manifest.resolve(&entry.kernel_file);
            let copy = out_dir.join(&layer.factor_files[0]);
            let a = fs::read(&src).map_err(|e| Error::io(&src, e))?;
            let b = fs::read(&copy).map_err(|e| Error::io(&copy, e))?;
            if a != b {
                return Err(Error::Verify(format!(
                    "layer `{name}`: copied kernel differs from the original"
                )));
            }
            continue;
        }

        let method = layer
            .method
            .ok_or_else(|| Error::Verify(format!("layer `{name}` has no method")))?;
        mismatch(
            name,
            "factor_files",
            layer.factor_files.clone(),
            LayerFactors::file_names(method, name),
        )?;
        let factors = LayerFactors::read(out_dir, method, name)?;
        mismatch(name, "ranks", layer.ranks.clone(), factors.ranks())?;
        mismatch(
            name,
            "compressed_params",
            layer.compressed_params,
            factors.param_count(),
        )?;

        let inputs = load_inputs(manifest, entry, report.config.epsilon)?;
        let k = &inputs.kernel;
        let approx = factors.reconstruct(k.dims()).map_err(|e| {
            Error::Verify(format!(
                "layer `{name}`: factors do not fit the kernel: {e}"
            ))
        })?;
        let frob = relative_recon_error(k, &approx, Norm::Frobenius)?;
        close(
            name,
            "rel_error_frobenius",
            layer.rel_error_frobenius,
            Some(frob),
            &mut worst,
        )?;
        let sigma = match &inputs.root {
            Some(root) => Some(relative_recon_error(k, &approx, Norm::Sigma(root))?),
            None => None,
        };
        close(
            name,
            "rel_error_sigma",
            layer.rel_error_sigma,
            sigma,
            &mut worst,
        )?;
        let functional = match &inputs.patches {
            Some(p) => Some(functional_error_of(k, &approx, p)?),
            None => None,
        };
        close(
            name,
            "functional_error",
            layer.functional_error,
            functional,
            &mut worst,
        )?;
    }

    let totals = Totals::from_layers(&report.layers);
    if totals.original_params != report.totals.original_params
        || totals.compressed_params != report.totals.compressed_params
        || totals.compression_ratio != report.totals.compression_ratio
    {
        return Err(Error::Verify(format!(
            "totals {:?} do not match the per-layer counts {:?}",
            report.totals, totals
        )));
    }
    Ok(VerifySummary {
        layers_checked: report.layers.len(),
        max_deviation: worst,
    })
}
