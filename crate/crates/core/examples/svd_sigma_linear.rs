//! Closed-form Sigma-weighted SVD for a fully connected layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::decomp::svd_sigma;
use sigma_lowrank::linalg::{truncated_svd, SymSolveConfig};
use sigma_lowrank::{Mat, SigmaRoot};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = Mat::from_fn(64, 48, |_, _| rng.random_range(-1.0..1.0));
    // inputs concentrated on a few directions
    let x = Mat::from_fn(48, 500, |i, _| {
        rng.random_range(-1.0..1.0) * (1.0 / (1.0 + i as f64))
    });
    let sigma = &x * x.transpose() / 500.0;
    let root = SigmaRoot::from_sigma_auto(&sigma, &SymSolveConfig::default())?;
    let l = root.factor();
    for rank in [4, 8, 16] {
        let ours = svd_sigma(&w, &root, rank)?;
        let plain = truncated_svd(&w, rank)?.reconstruct();
        println!(
            "rank {rank:>2} ({} params): sigma error {:.4} weighted SVD, {:.4} plain SVD",
            ours.param_count(),
            ((&w - ours.reconstruct()) * l).norm(),
            ((&w - plain) * l).norm()
        );
    }
    Ok(())
}
