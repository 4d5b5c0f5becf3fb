//! VBMF rank estimates and the alpha interpolation towards R_max.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::decomp::tucker2_hosvd;
use sigma_lowrank::rank::{plan_ranks, vbmf, Method};
use sigma_lowrank::tensor::unfold_mode;
use sigma_lowrank::{tucker2_reconstruct, Tensor4};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = [48, 32, 3, 3];
    let dense = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let planted = tucker2_reconstruct(&tucker2_hosvd(&dense, 6, 5)?).scale(10.0);
    let noise = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-0.01..0.01));
    let k = planted.add(&noise)?;

    let est = vbmf(&unfold_mode(&k, 1)?, None)?;
    println!(
        "mode-1 VBMF: rank {}, noise variance {:.3e}",
        est.rank, est.noise_variance
    );
    for alpha in [1.0, 0.75, 0.5, 0.0] {
        let plan = plan_ranks(&k, Method::Tucker2, alpha)?;
        println!(
            "alpha {alpha:.2}: ranks {:?} (vbmf {:?}, max {:?})",
            plan.ranks, plan.r_vbmf, plan.r_max
        );
    }
    Ok(())
}
