//! CP decomposition fitted in the Sigma norm versus the Frobenius norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sigma_lowrank::decomp::{cp_als, cp_als_sigma, AlsConfig};
use sigma_lowrank::linalg::SymSolveConfig;
use sigma_lowrank::{cp_reconstruct, relative_recon_error, Mat, Norm, SigmaRoot, Tensor4};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = [16, 8, 3, 3];
    let k = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    // strongly anisotropic input covariance
    let q = Mat::from_fn(72, 72, |_, _| StandardNormal.sample(&mut rng))
        .qr()
        .q();
    let lam = Mat::from_diagonal(&nalgebra::DVector::from_fn(72, |i, _| {
        1e-3f64.powf(i as f64 / 71.0)
    }));
    let sigma = &q * lam * q.transpose();
    let root = SigmaRoot::from_sigma_auto(&sigma, &SymSolveConfig::default())?;

    let cfg = AlsConfig::default();
    let plain = cp_als(&k, 6, &cfg)?;
    let weighted = cp_als_sigma(&k, &root, 6, &cfg)?;
    for (name, f) in [("frobenius", &plain.factors), ("sigma", &weighted.factors)] {
        let approx = cp_reconstruct(f);
        println!(
            "{name:>9} fit: frobenius error {:.4}, sigma error {:.4}",
            relative_recon_error(&k, &approx, Norm::Frobenius)?,
            relative_recon_error(&k, &approx, Norm::Sigma(&root))?
        );
    }
    println!(
        "sigma ALS: objective {:.4} -> {:.4} in {} sweeps",
        weighted.trace[0],
        weighted.final_objective(),
        weighted.sweeps
    );
    Ok(())
}
