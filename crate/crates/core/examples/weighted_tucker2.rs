//! Element-weighted Tucker2: zero weights mark entries the fit may ignore.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::decomp::{wals_tucker2, AlsConfig};
use sigma_lowrank::Tensor4;

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims = [12, 8, 3, 3];
    let k = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    // centre taps matter ten times more; a tenth of entries are masked out
    let h = Tensor4::from_fn(dims, |_, _, y, x| {
        if rng.random_range(0.0..1.0) < 0.1 {
            0.0
        } else if y == 1 && x == 1 {
            10.0
        } else {
            1.0
        }
    });
    let out = wals_tucker2(
        &k,
        &h,
        6,
        4,
        &AlsConfig {
            max_sweeps: 200,
            ..Default::default()
        },
    )?;
    println!("weighted error per sweep:");
    for (i, v) in out.trace.iter().enumerate().step_by(20) {
        println!("  {i:>3}  {v:.6}");
    }
    println!(
        "final {:.6} after {} sweeps",
        out.final_objective(),
        out.sweeps
    );
    Ok(())
}
