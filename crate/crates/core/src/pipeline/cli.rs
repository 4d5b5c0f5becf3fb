//! Command-line front end. The binary only forwards to [`run`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};

use super::compress::{compress_model, resolve_jobs, CompressConfig};
use super::manifest::ModelManifest;
use super::npy::{read_matrix, read_tensor, write_matrix, Array};
use super::report::{InitKind, NormKind};
use super::verify::verify_report;
use crate::covariance::{Normalization, SigmaAccumulator};
use crate::error::{Error, Result};
use crate::rank::{plan_ranks, Method};
use crate::tensor::Tensor4;

#[derive(Debug, Parser)]
#[command(
    name = "sigma-lowrank",
    version,
    about = "Distribution-aware low-rank compression of conv and linear layers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose every layer of a manifest and write factors plus a JSON report.
    Compress(CompressArgs),
    /// Accumulate the patch second-moment matrix from one or more patch files.
    EstimateSigma {
        /// Patch matrices, (S*H*W) x N each.
        #[arg(long, num_args = 1.., required = true)]
        patches: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mean", value_parser = PossibleValuesParser::new(["mean", "sum"]))]
        normalization: String,
    },
    /// Print the ranks VBMF and alpha select for one kernel, as JSON.
    PlanRanks {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, value_parser = method_parser())]
        method: String,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        alpha: f64,
    },
    /// Recompute a report's numbers from its factor files.
    Verify {
        #[arg(long)]
        report: PathBuf,
        /// Manifest to check against; defaults to the one named in the report.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Factor directory; defaults to the one named in the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn method_parser() -> PossibleValuesParser {
    PossibleValuesParser::new(["cp", "tucker2", "svd"])
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "tucker2", value_parser = method_parser())]
    method: String,
    /// `weighted` minimizes the element-weighted error with each layer's weights_file (Tucker2 only).
    #[arg(long, default_value = "sigma", value_parser = PossibleValuesParser::new(["frobenius", "sigma", "weighted"]))]
    norm: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Ridge added to Σ, relative to trace(Σ)/dim.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 50)]
    sweeps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value = "warm", value_parser = PossibleValuesParser::new(["warm", "hosvd", "random"]))]
    init: String,
    /// Seed for `--init random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Report path; defaults to OUT/report.json.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Layers processed in parallel; SIGMA_LOWRANK_THREADS overrides this.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall time in the report (makes reports differ between runs).
    #[arg(long)]
    timings: bool,
}

/// Exit status for an error: 3 for numerical failures, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Compress(a) => compress(a),
        Command::EstimateSigma {
            patches,
            out,
            normalization,
        } => {
            let mut acc: Option<SigmaAccumulator> = None;
            for p in &patches {
                let m = read_matrix(p)?;
                let acc = acc.get_or_insert_with(|| SigmaAccumulator::new(m.nrows()));
                acc.add_patches(&m)?;
            }
            let acc = acc.expect("clap requires at least one patch file");
            let norm = if normalization == "sum" {
                Normalization::Sum
            } else {
                Normalization::Mean
            };
            write_matrix(&out, &acc.finalize(norm)?)?;
            println!(
                "sigma ({0}x{0}) from {1} patch columns written to {2}",
                acc.dim(),
                acc.count(),
                out.display()
            );
            Ok(())
        }
        Command::PlanRanks {
            kernel,
            method,
            alpha,
        } => {
            let method: Method = method.parse()?;
            let k = match read_tensor(&kernel)? {
                Array::Tensor(t) => t,
                Array::Matrix(m) => Tensor4::from_matrix(&m),
            };
            let plan = plan_ranks(&k, method, alpha)?;
            match method {
                Method::Tucker2 => {
                    println!("{{\"R_T\":{},\"R_S\":{}}}", plan.ranks[0], plan.ranks[1])
                }
                Method::Cp | Method::Svd => println!("{{\"R\":{}}}", plan.ranks[0]),
            }
            Ok(())
        }
        Command::Verify {
            report,
            manifest,
            out,
        } => {
            let s = verify_report(&report, manifest.as_deref(), out.as_deref())?;
            println!(
                "ok: {} layers verified, max deviation {:e}",
                s.layers_checked, s.max_deviation
            );
            Ok(())
        }
    }
}

fn compress(a: CompressArgs) -> Result<()> {
    let cfg = CompressConfig {
        method: a.method.parse()?,
        norm: match a.norm.as_str() {
            "frobenius" => NormKind::Frobenius,
            "weighted" => NormKind::Weighted,
            _ => NormKind::Sigma,
        },
        alpha: a.alpha,
        epsilon: a.epsilon,
        sweeps: a.sweeps,
        tol: a.tol,
        init: match a.init.as_str() {
            "hosvd" => InitKind::Hosvd,
            "random" => InitKind::Random,
            _ => InitKind::Warm,
        },
        seed: a.seed,
        out_dir: a.out.clone(),
        jobs: resolve_jobs(a.jobs)?,
        timings: a.timings,
    };
    let manifest = ModelManifest::load(&a.manifest)?;
    let outcome = compress_model(&manifest, &a.manifest, &cfg)?;
    let report_path = a.report.unwrap_or_else(|| a.out.join("report.json"));
    outcome.report.save(&report_path)?;
    if let Some(e) = outcome.error {
        eprintln!("partial report written to {}", report_path.display());
        return Err(e);
    }
    let t = &outcome.report.totals;
    println!(
        "{} layers, {} -> {} parameters (ratio {:.4}), report {}",
        outcome.report.layers.len(),
        t.original_params,
        t.compressed_params,
        t.compression_ratio,
        report_path.display()
    );
    Ok(())
}
