//! Running a layer through its CP and Tucker2 factors gives the same output
//! as convolving with the reconstructed kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigma_lowrank::conv::{
    conv_direct, conv_im2col, cp_forward, cp_param_count, tucker2_forward, tucker2_param_count,
    ConvSpec, Image,
};
use sigma_lowrank::decomp::{cp_als, tucker2_hosvd, AlsConfig};
use sigma_lowrank::{cp_reconstruct, tucker2_reconstruct, Tensor4};

fn max_gap(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn main() -> sigma_lowrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = [16, 8, 3, 3];
    let spec = ConvSpec::same(dims)?;
    let k = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let x = Image::new(
        8,
        20,
        20,
        (0..8 * 400).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;

    let cp = cp_als(&k, 8, &AlsConfig::default())?.factors;
    let tk = tucker2_hosvd(&k, 8, 4)?;
    let y_cp = cp_forward(&cp, &x, &spec)?;
    let y_tk = tucker2_forward(&tk, &x, &spec)?;
    println!("dense kernel: {} params", k.len());
    println!(
        "CP R=8: {} params, gap {:.2e}",
        cp_param_count(&cp),
        max_gap(&y_cp, &conv_direct(&cp_reconstruct(&cp), &x, &spec)?)
    );
    println!(
        "Tucker2 (8,4): {} params, gap {:.2e}",
        tucker2_param_count(&tk),
        max_gap(&y_tk, &conv_direct(&tucker2_reconstruct(&tk), &x, &spec)?)
    );
    println!(
        "im2col vs direct: gap {:.2e}",
        max_gap(&conv_im2col(&k, &x, &spec)?, &conv_direct(&k, &x, &spec)?)
    );
    Ok(())
}
