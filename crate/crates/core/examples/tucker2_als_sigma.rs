//! Tucker2 compression of a conv kernel under a Sigma estimated from patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::conv::tucker2_param_count;
use sigma_lowrank::covariance::{Normalization, SigmaAccumulator};
use sigma_lowrank::decomp::{tucker2_als, tucker2_als_sigma, AlsConfig};
use sigma_lowrank::linalg::SymSolveConfig;
use sigma_lowrank::{relative_recon_error, tucker2_reconstruct, Mat, Norm, SigmaRoot, Tensor4};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = [32, 16, 3, 3];
    let k = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));

    // patches whose first few channels carry most of the energy
    let d = 16 * 9;
    let patches = Mat::from_fn(d, 2000, |i, _| {
        rng.random_range(-1.0..1.0) * if i < 36 { 1.0 } else { 0.05 }
    });
    let mut acc = SigmaAccumulator::new(d);
    acc.add_patches(&patches)?;
    let root = SigmaRoot::from_sigma_auto(
        &acc.finalize(Normalization::Mean)?,
        &SymSolveConfig::default(),
    )?;

    let cfg = AlsConfig::default();
    let plain = tucker2_als(&k, 12, 6, &cfg)?;
    let weighted = tucker2_als_sigma(&k, &root, 12, 6, &cfg)?;
    println!(
        "parameters {} -> {}",
        k.len(),
        tucker2_param_count(&weighted.factors)
    );
    for (name, out) in [("frobenius", &plain), ("sigma", &weighted)] {
        let approx = tucker2_reconstruct(&out.factors);
        println!(
            "{name:>9} ALS: sigma error {:.4} after {} sweeps",
            relative_recon_error(&k, &approx, Norm::Sigma(&root))?,
            out.sweeps
        );
    }
    Ok(())
}
