//! The Sigma norm of a kernel difference equals the RMS difference of the
//! layer outputs over the images Σ was estimated from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::conv::{conv_direct, im2col, ConvSpec, Image};
use sigma_lowrank::covariance::{sigma_norm, Normalization, SigmaAccumulator};
use sigma_lowrank::linalg::SymSolveConfig;
use sigma_lowrank::{SigmaRoot, Tensor4};

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dims = [8, 3, 3, 3];
    let spec = ConvSpec::same(dims)?;
    let k = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let k_tilde = k.scale(0.9);

    let mut acc = SigmaAccumulator::new(27);
    let (mut sq, mut positions) = (0.0, 0usize);
    for _ in 0..50 {
        // correlated inputs: a smooth ramp plus noise
        let data = (0..3 * 16 * 16)
            .map(|i| ((i % 16) as f64 / 16.0) + 0.2 * rng.random_range(-1.0..1.0))
            .collect();
        let x = Image::new(3, 16, 16, data)?;
        acc.add_patches(&im2col(&x, &spec)?)?;
        let (y, yt) = (
            conv_direct(&k, &x, &spec)?,
            conv_direct(&k_tilde, &x, &spec)?,
        );
        sq += y
            .data()
            .iter()
            .zip(yt.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        positions += y.height() * y.width();
    }
    let cfg = SymSolveConfig {
        epsilon_scale: 0.0,
        ..Default::default()
    };
    let root = SigmaRoot::from_sigma_auto(&acc.finalize(Normalization::Mean)?, &cfg)?;
    println!("sigma norm        {:.12}", sigma_norm(&k, &k_tilde, &root)?);
    println!("output RMS error  {:.12}", (sq / positions as f64).sqrt());
    Ok(())
}
