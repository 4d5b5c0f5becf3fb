//! Greedy rank-one deflation against joint CP ALS in the Sigma norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::decomp::{cp_als_sigma, greedy_deflation_sigma, AlsConfig};
use sigma_lowrank::linalg::SymSolveConfig;
use sigma_lowrank::{Mat, SigmaRoot, Tensor4};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = Tensor4::from_fn([6, 4, 3, 3], |_, _, _, _| rng.random_range(-1.0..1.0));
    let a = Mat::from_fn(36, 36, |_, _| rng.random_range(-1.0..1.0));
    let root = SigmaRoot::from_sigma_auto(&(&a * a.transpose()), &SymSolveConfig::default())?;
    let cfg = AlsConfig::default();
    for rank in 1..=4 {
        let greedy = greedy_deflation_sigma(&k, &root, rank, &cfg)?;
        let joint = cp_als_sigma(&k, &root, rank, &cfg)?;
        println!(
            "R={rank}: greedy {:.5}  joint ALS {:.5}",
            greedy.residual_trace.last().unwrap(),
            joint.final_objective()
        );
    }
    Ok(())
}
