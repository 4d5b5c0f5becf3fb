//! End to end: write a small model to disk, compress it, verify the report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::pipeline::{
    compress_model, verify_report, write_matrix, write_tensor, Array, CompressConfig, ModelManifest,
};
use sigma_lowrank::{Mat, Tensor4};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir = std::env::temp_dir().join("sigma-lowrank-example");
    std::fs::create_dir_all(&dir)?;

    let conv = Tensor4::from_fn([16, 8, 3, 3], |_, _, _, _| rng.random_range(-1.0..1.0));
    write_tensor(dir.join("conv.npy"), &Array::Tensor(conv))?;
    write_matrix(
        dir.join("conv.patches.npy"),
        &Mat::from_fn(72, 1000, |_, _| rng.random_range(-1.0..1.0)),
    )?;
    let fc = Mat::from_fn(10, 64, |_, _| rng.random_range(-1.0..1.0));
    write_tensor(dir.join("fc.npy"), &Array::Matrix(fc))?;
    write_matrix(
        dir.join("fc.patches.npy"),
        &Mat::from_fn(64, 500, |_, _| rng.random_range(-1.0..1.0)),
    )?;
    let manifest = r#"{"model": "demo", "layers": [
        {"name": "conv", "kind": "conv", "kernel_file": "conv.npy", "dims": [16, 8, 3, 3], "patches_file": "conv.patches.npy"},
        {"name": "fc", "kind": "linear", "kernel_file": "fc.npy", "dims": [10, 64], "patches_file": "fc.patches.npy"}
    ]}"#;
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest)?;

    let cfg = CompressConfig {
        alpha: 0.5,
        out_dir: dir.join("out"),
        ..Default::default()
    };
    let outcome = compress_model(&ModelManifest::load(&manifest_path)?, &manifest_path, &cfg)?;
    let report_path = dir.join("out/report.json");
    outcome.report.save(&report_path)?;
    print!("{}", outcome.report.to_json()?);
    let summary = verify_report(&report_path, None, None)?;
    println!(
        "verified {} layers, max deviation {:e}",
        summary.layers_checked, summary.max_deviation
    );
    Ok(())
}
