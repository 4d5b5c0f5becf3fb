use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::manifest::{LayerEntry, LayerKind, ModelManifest};
use super::npy::{read_tensor, write_tensor, Array};
use super::report::{
    CompressionReport, InitKind, LayerReport, NormKind, ReportConfig, Status, Totals, SCHEMA,
};
use crate::covariance::{estimate_sigma, relative_recon_error, Norm, SigmaRoot};
use crate::decomp::{
    cp_als, cp_als_sigma, svd_sigma, tucker2_als, tucker2_als_sigma, wals_tucker2, AlsConfig, Init,
    SvdFactors,
};
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, SymSolveConfig};
use crate::rank::{plan_ranks, Method};
use crate::tensor::{
    cp_reconstruct, fold_mode, tucker2_reconstruct, unfold_mode, CpFactors, Mat, Tensor4,
    Tucker2Factors,
};

pub const THREADS_ENV: &str = "SIGMA_LOWRANK_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CompressConfig {
    pub method: Method,
    pub norm: NormKind,
    pub alpha: f64,
    /// Ridge added to Σ, relative to `trace(Σ) / dim`.
    pub epsilon: f64,
    pub sweeps: usize,
    pub tol: f64,
    pub init: InitKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub jobs: usize,
    /// Record wall time in the report. Off by default so reports are reproducible byte for byte.
    pub timings: bool,
}

impl Default for CompressConfig {
    fn default() -> Self {
        CompressConfig {
            method: Method::Tucker2,
            norm: NormKind::Sigma,
            alpha: 1.0,
            epsilon: SymSolveConfig::default().epsilon_scale,
            sweeps: AlsConfig::default().max_sweeps,
            tol: AlsConfig::default().rel_tol,
            init: InitKind::Warm,
            seed: 0,
            out_dir: PathBuf::from("."),
            jobs: 1,
            timings: false,
        }
    }
}

impl CompressConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::Invalid(format!(
                "alpha must be finite, got {}",
                self.alpha
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Invalid("jobs must be at least 1".into()));
        }
        if self.norm == NormKind::Weighted && self.method != Method::Tucker2 {
            return Err(Error::Invalid(
                "the weighted norm is only available with --method tucker2".into(),
            ));
        }
        self.als_config().validate()
    }

    pub fn als_config(&self) -> AlsConfig {
        AlsConfig {
            max_sweeps: self.sweeps,
            rel_tol: self.tol,
            init: match self.init {
                InitKind::Warm => Init::FrobeniusWarmStart,
                InitKind::Hosvd => Init::Hosvd,
                InitKind::Random => Init::Random(self.seed),
            },
            solver: SymSolveConfig {
                epsilon_scale: self.epsilon,
                ..Default::default()
            },
        }
    }

    pub fn report_config(&self) -> ReportConfig {
        ReportConfig {
            method: self.method,
            norm: self.norm,
            alpha: self.alpha,
            epsilon: self.epsilon,
            sweeps: self.sweeps,
            tol: self.tol,
            init: self.init,
            seed: self.seed,
        }
    }
}

/// Worker count: the environment variable wins over the flag.
pub fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Invalid(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(flag.unwrap_or(1).max(1)),
    }
}

/// Factors of one compressed layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerFactors {
    Cp(CpFactors),
    Tucker2(Tucker2Factors),
    Svd(SvdFactors),
}

impl LayerFactors {
    pub fn method(&self) -> Method {
        match self {
            LayerFactors::Cp(_) => Method::Cp,
            LayerFactors::Tucker2(_) => Method::Tucker2,
            LayerFactors::Svd(_) => Method::Svd,
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match self {
            LayerFactors::Cp(f) => vec![f.rank()],
            LayerFactors::Tucker2(f) => {
                let (rt, rs) = f.ranks();
                vec![rt, rs]
            }
            LayerFactors::Svd(f) => vec![f.rank()],
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerFactors::Cp(f) => f.param_count(),
            LayerFactors::Tucker2(f) => f.param_count(),
            LayerFactors::Svd(f) => f.param_count(),
        }
    }

    /// The approximated kernel as a `T x S x H x W` tensor.
    pub fn reconstruct(&self, dims: [usize; 4]) -> Result<Tensor4> {
        let k = match self {
            LayerFactors::Cp(f) => cp_reconstruct(f),
            LayerFactors::Tucker2(f) => tucker2_reconstruct(f),
            LayerFactors::Svd(f) => fold_mode(&f.reconstruct(), 1, dims)?,
        };
        if k.dims() != dims {
            return Err(Error::shape(format!(
                "factors give {:?}, expected {dims:?}",
                k.dims()
            )));
        }
        Ok(k)
    }

    fn parts(&self) -> Vec<(&'static str, Array)> {
        let m = |a: &Mat| Array::Matrix(a.clone());
        match self {
            LayerFactors::Cp(f) => vec![
                ("U_T", m(&f.u_t)),
                ("U_S", m(&f.u_s)),
                ("U_H", m(&f.u_h)),
                ("U_W", m(&f.u_w)),
            ],
            LayerFactors::Tucker2(f) => vec![
                ("U_T", m(&f.u_t)),
                ("U_S", m(&f.u_s)),
                ("G", Array::Tensor(f.core.clone())),
            ],
            LayerFactors::Svd(f) => vec![("A", m(&f.a)), ("B", m(&f.b))],
        }
    }

    pub fn file_names(method: Method, layer: &str) -> Vec<String> {
        let parts: &[&str] = match method {
            Method::Cp => &["U_T", "U_S", "U_H", "U_W"],
            Method::Tucker2 => &["U_T", "U_S", "G"],
            Method::Svd => &["A", "B"],
        };
        parts.iter().map(|p| format!("{layer}.{p}.npy")).collect()
    }

    pub fn write(&self, dir: &Path, layer: &str) -> Result<Vec<String>> {
        let names = Self::file_names(self.method(), layer);
        for (name, (_, arr)) in names.iter().zip(self.parts()) {
            write_tensor(dir.join(name), &arr)?;
        }
        Ok(names)
    }

    pub fn read(dir: &Path, method: Method, layer: &str) -> Result<LayerFactors> {
        let names = Self::file_names(method, layer);
        let load = |i: usize| read_tensor(dir.join(&names[i]));
        let mat = |i: usize| -> Result<Mat> {
            match load(i)? {
                Array::Matrix(m) => Ok(m),
                Array::Tensor(_) => Err(Error::shape(format!("{} should hold a matrix", names[i]))),
            }
        };
        Ok(match method {
            Method::Cp => LayerFactors::Cp(CpFactors::new(mat(0)?, mat(1)?, mat(2)?, mat(3)?)?),
            Method::Tucker2 => {
                let core = match load(2)? {
                    Array::Tensor(t) => t,
                    Array::Matrix(_) => {
                        return Err(Error::shape(format!("{} should hold a 4-d core", names[2])))
                    }
                };
                LayerFactors::Tucker2(Tucker2Factors::new(core, mat(0)?, mat(1)?)?)
            }
            Method::Svd => {
                let (a, b) = (mat(0)?, mat(1)?);
                if a.ncols() != b.nrows() {
                    return Err(Error::shape(
                        "SVD factors A and B do not share an inner dimension",
                    ));
                }
                LayerFactors::Svd(SvdFactors { a, b })
            }
        })
    }
}

/// `√(mean over patch columns of ‖(K₍₁₎ − K̃₍₁₎) u‖²)`: the empirical RMS
/// output discrepancy of the layer over the given patches.
pub fn evaluate_functional_error(f: &LayerFactors, k: &Tensor4, patches: &Mat) -> Result<f64> {
    let approx = f.reconstruct(k.dims())?;
    functional_error_of(k, &approx, patches)
}

pub(crate) fn functional_error_of(k: &Tensor4, approx: &Tensor4, patches: &Mat) -> Result<f64> {
    let [_, s, h, w] = k.dims();
    if patches.nrows() != s * h * w {
        return Err(Error::shape(format!(
            "patches have {} rows but the kernel needs S*H*W = {}",
            patches.nrows(),
            s * h * w
        )));
    }
    if patches.ncols() == 0 {
        return Err(Error::Invalid("no patch columns".into()));
    }
    let diff = unfold_mode(&k.sub(approx)?, 1)?;
    let y = diff * patches;
    Ok((y.norm_squared() / patches.ncols() as f64).sqrt())
}

/// Kernel and optional side inputs of one layer, loaded from the manifest.
pub(crate) struct LayerInputs {
    pub kernel: Tensor4,
    pub patches: Option<Mat>,
    pub root: Option<SigmaRoot>,
    pub weights: Option<Tensor4>,
}

fn load_4way(
    manifest: &ModelManifest,
    entry: &LayerEntry,
    file: &Path,
    what: &str,
) -> Result<Tensor4> {
    let path = manifest.resolve(file);
    let t = match (entry.kind, read_tensor(&path)?) {
        (LayerKind::Conv, Array::Tensor(t)) => t,
        (LayerKind::Linear, Array::Matrix(m)) => Tensor4::from_matrix(&m),
        (_, _) => {
            return Err(Error::Manifest(format!(
                "layer `{}`: {what} {} has the wrong number of dimensions for a {:?} layer",
                entry.name,
                path.display(),
                entry.kind
            )))
        }
    };
    if t.dims() != entry.dims4() {
        return Err(Error::Manifest(format!(
            "layer `{}`: {what} {} has shape {:?}, manifest says {:?}",
            entry.name,
            path.display(),
            t.dims(),
            entry.dims
        )));
    }
    Ok(t)
}

fn load_matrix(
    manifest: &ModelManifest,
    file: &Path,
    rows: usize,
    layer: &str,
    what: &str,
) -> Result<Mat> {
    let path = manifest.resolve(file);
    match read_tensor(&path)? {
        Array::Matrix(m) if m.nrows() == rows => Ok(m),
        Array::Matrix(m) => Err(Error::Manifest(format!(
            "layer `{layer}`: {what} {} has {} rows, expected {rows}",
            path.display(),
            m.nrows()
        ))),
        Array::Tensor(_) => Err(Error::Manifest(format!(
            "layer `{layer}`: {what} {} must be a matrix",
            path.display()
        ))),
    }
}

pub(crate) fn load_inputs(
    manifest: &ModelManifest,
    entry: &LayerEntry,
    epsilon: f64,
) -> Result<LayerInputs> {
    let kernel = load_4way(manifest, entry, &entry.kernel_file, "kernel")?;
    let d = entry.patch_dim();
    let patches = match &entry.patches_file {
        Some(p) => Some(load_matrix(manifest, p, d, &entry.name, "patches file")?),
        None => None,
    };
    let cfg = SymSolveConfig {
        epsilon_scale: epsilon,
        ..Default::default()
    };
    let root = match (&entry.sigma_file, &patches) {
        (Some(p), _) => {
            let sigma = load_matrix(manifest, p, d, &entry.name, "sigma file")?;
            Some(
                SigmaRoot::from_sigma_auto(&sigma, &cfg)?
                    .with_provenance(p.display().to_string(), 0),
            )
        }
        (None, Some(pm)) => {
            let acc = estimate_sigma([pm])?;
            let sigma = acc.finalize(Default::default())?;
            let source = entry.patches_file.as_ref().unwrap().display().to_string();
            Some(SigmaRoot::from_sigma_auto(&sigma, &cfg)?.with_provenance(source, acc.count()))
        }
        (None, None) => None,
    };
    let weights = match &entry.weights_file {
        Some(p) => Some(load_4way(manifest, entry, p, "weights file")?),
        None => None,
    };
    Ok(LayerInputs {
        kernel,
        patches,
        root,
        weights,
    })
}

pub(crate) fn skipped_report(entry: &LayerEntry) -> LayerReport {
    LayerReport {
        name: entry.name.clone(),
        kind: entry.kind,
        dims: entry.dims.clone(),
        skipped: true,
        method: None,
        ranks: vec![],
        r_vbmf: vec![],
        r_max: vec![],
        sweeps: None,
        objective: None,
        rel_error_frobenius: None,
        rel_error_sigma: None,
        functional_error: None,
        original_params: entry.param_count(),
        compressed_params: entry.param_count(),
        factor_files: vec![format!("{}.kernel.npy", entry.name)],
    }
}

fn compress_layer(
    manifest: &ModelManifest,
    entry: &LayerEntry,
    cfg: &CompressConfig,
) -> Result<LayerReport> {
    if entry.skip {
        let report = skipped_report(entry);
        let src = manifest.resolve(&entry.kernel_file);
        let dst = cfg.out_dir.join(&report.factor_files[0]);
        // validate before copying so a bad kernel is caught here too
        load_4way(manifest, entry, &entry.kernel_file, "kernel")?;
        fs::copy(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        return Ok(report);
    }
    let inputs = load_inputs(manifest, entry, cfg.epsilon)?;
    let k = &inputs.kernel;
    let method = match entry.kind {
        LayerKind::Linear => Method::Svd,
        LayerKind::Conv => cfg.method,
    };
    match cfg.norm {
        NormKind::Sigma if inputs.root.is_none() => return Err(Error::MissingSigma(entry.name.clone())),
        NormKind::Weighted if method != Method::Tucker2 => {
            return Err(Error::Invalid(format!(
                "layer `{}`: the weighted norm needs Tucker2, linear layers use SVD; mark the layer skip",
                entry.name
            )))
        }
        NormKind::Weighted if inputs.weights.is_none() => {
            return Err(Error::Manifest(format!(
                "layer `{}` needs a weights_file under the weighted norm",
                entry.name
            )))
        }
        _ => {}
    }

    let plan = plan_ranks(k, method, cfg.alpha)?;
    let als = cfg.als_config();
    let (factors, sweeps, objective) = match (method, cfg.norm, inputs.root.as_ref()) {
        (Method::Cp, NormKind::Sigma, Some(root)) => {
            let out = cp_als_sigma(k, root, plan.ranks[0], &als)?;
            let obj = out.final_objective();
            (LayerFactors::Cp(out.factors), Some(out.sweeps), obj)
        }
        (Method::Cp, _, _) => {
            let out = cp_als(k, plan.ranks[0], &als)?;
            let obj = out.final_objective();
            (LayerFactors::Cp(out.factors), Some(out.sweeps), obj)
        }
        (Method::Tucker2, NormKind::Sigma, Some(root)) => {
            let out = tucker2_als_sigma(k, root, plan.ranks[0], plan.ranks[1], &als)?;
            let obj = out.final_objective();
            (LayerFactors::Tucker2(out.factors), Some(out.sweeps), obj)
        }
        (Method::Tucker2, NormKind::Weighted, _) => {
            let h = inputs.weights.as_ref().expect("checked above");
            let out = wals_tucker2(k, h, plan.ranks[0], plan.ranks[1], &als)?;
            let obj = out.final_objective();
            (LayerFactors::Tucker2(out.factors), Some(out.sweeps), obj)
        }
        (Method::Tucker2, _, _) => {
            let out = tucker2_als(k, plan.ranks[0], plan.ranks[1], &als)?;
            let obj = out.final_objective();
            (LayerFactors::Tucker2(out.factors), Some(out.sweeps), obj)
        }
        (Method::Svd, norm, root) => {
            let w = unfold_mode(k, 1)?;
            let f = match (norm, root) {
                (NormKind::Sigma, Some(root)) => svd_sigma(&w, root, plan.ranks[0])?,
                _ => {
                    let t = truncated_svd(&w, plan.ranks[0])?;
                    let mut b = t.v.transpose();
                    for (i, s) in t.s.iter().enumerate() {
                        b.row_mut(i).scale_mut(*s);
                    }
                    SvdFactors { a: t.u, b }
                }
            };
            let diff = &w - f.reconstruct();
            let obj = match (norm, root) {
                (NormKind::Sigma, Some(root)) => (diff * root.factor()).norm(),
                _ => diff.norm(),
            };
            (LayerFactors::Svd(f), None, obj)
        }
    };

    let approx = factors.reconstruct(k.dims())?;
    let rel_error_frobenius = relative_recon_error(k, &approx, Norm::Frobenius)?;
    let rel_error_sigma = match &inputs.root {
        Some(root) => Some(relative_recon_error(k, &approx, Norm::Sigma(root))?),
        None => None,
    };
    let functional_error = match &inputs.patches {
        Some(p) => Some(functional_error_of(k, &approx, p)?),
        None => None,
    };
    let factor_files = factors.write(&cfg.out_dir, &entry.name)?;
    Ok(LayerReport {
        name: entry.name.clone(),
        kind: entry.kind,
        dims: entry.dims.clone(),
        skipped: false,
        method: Some(method),
        ranks: factors.ranks(),
        r_vbmf: plan.r_vbmf,
        r_max: plan.r_max,
        sweeps,
        objective: Some(objective),
        rel_error_frobenius: Some(rel_error_frobenius),
        rel_error_sigma,
        functional_error,
        original_params: entry.param_count(),
        compressed_params: factors.param_count(),
        factor_files,
    })
}

/// A finished run. When `error` is set the report holds only the layers that
/// completed before the first failing layer (in manifest order).
#[derive(Debug)]
pub struct CompressOutcome {
    pub report: CompressionReport,
    pub error: Option<Error>,
}

/// Compress every layer of a manifest, writing factor files into `cfg.out_dir`.
pub fn compress_model(
    manifest: &ModelManifest,
    manifest_path: &Path,
    cfg: &CompressConfig,
) -> Result<CompressOutcome> {
    cfg.validate()?;
    manifest.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<LayerReport>> = pool.install(|| {
        manifest
            .layers
            .par_iter()
            .map(|entry| {
                compress_layer(manifest, entry, cfg).map_err(|e| Error::Layer {
                    layer: entry.name.clone(),
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let mut layers = Vec::with_capacity(results.len());
    let mut error = None;
    for r in results {
        match r {
            Ok(l) => layers.push(l),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let mut totals = Totals::from_layers(&layers);
    if cfg.timings {
        totals.wall_time = Some(start.elapsed().as_secs_f64());
    }
    let report = CompressionReport {
        schema: SCHEMA.to_string(),
        model: manifest.model.clone(),
        manifest: manifest_path.to_path_buf(),
        out_dir: cfg.out_dir.clone(),
        status: if error.is_some() {
            Status::Failed
        } else {
            Status::Ok
        },
        error: error.as_ref().map(|e| e.to_string()),
        config: cfg.report_config(),
        layers,
        totals,
    };
    Ok(CompressOutcome { report, error })
}
