use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{als_loop, AlsConfig, AlsOutcome, Init, SigmaProblem};
use crate::covariance::{sigma_norm_of, SigmaRoot};
use crate::error::{Error, Result};
use crate::linalg::{pinv, truncated_svd};
use crate::tensor::{tucker2_reconstruct, unfold_mode, Mat, Tensor4, Tucker2Factors};

pub(crate) fn check_ranks(dims: [usize; 4], rt: usize, rs: usize) -> Result<()> {
    if rt == 0 || rt > dims[0] {
        return Err(Error::Rank {
            rank: rt,
            max: dims[0],
            what: "Tucker2 output rank",
        });
    }
    if rs == 0 || rs > dims[1] {
        return Err(Error::Rank {
            rank: rs,
            max: dims[1],
            what: "Tucker2 input rank",
        });
    }
    Ok(())
}

fn leading_vectors(a: &Mat, rank: usize, rng: &mut ChaCha8Rng) -> Result<Mat> {
    let n = a.nrows();
    let mut u = Mat::from_fn(n, rank, |_, _| StandardNormal.sample(rng));
    let lead = rank.min(a.ncols());
    if a.norm() > 0.0 {
        let svd = truncated_svd(a, lead)?;
        u.columns_mut(0, lead).copy_from(&svd.u);
    }
    Ok(u.qr().q())
}

/// Core of the orthogonal projection onto the given factor spans.
fn project_core(k: &Tensor4, u_t: &Mat, u_s: &Mat) -> Result<Tensor4> {
    k.mode_product(1, &u_t.transpose())?
        .mode_product(2, &u_s.transpose())
}

/// Truncated higher-order SVD on the two channel modes.
pub fn tucker2_hosvd(k: &Tensor4, rt: usize, rs: usize) -> Result<Tucker2Factors> {
    check_ranks(k.dims(), rt, rs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u_t = leading_vectors(&unfold_mode(k, 1)?, rt, &mut rng)?;
    let u_s = leading_vectors(&unfold_mode(k, 2)?, rs, &mut rng)?;
    let core = project_core(k, &u_t, &u_s)?;
    Tucker2Factors::new(core, u_t, u_s)
}

pub(crate) fn tucker2_init(
    k: &Tensor4,
    rt: usize,
    rs: usize,
    init: Init,
) -> Result<Tucker2Factors> {
    match init {
        Init::Random(seed) => {
            check_ranks(k.dims(), rt, rs)?;
            let [t, s, _, _] = k.dims();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u_t = Mat::from_fn(t, rt, |_, _| StandardNormal.sample(&mut rng))
                .qr()
                .q();
            let u_s = Mat::from_fn(s, rs, |_, _| StandardNormal.sample(&mut rng))
                .qr()
                .q();
            let core = project_core(k, &u_t, &u_s)?;
            Tucker2Factors::new(core, u_t, u_s)
        }
        Init::Hosvd | Init::FrobeniusWarmStart => tucker2_hosvd(k, rt, rs),
    }
}

/// Replace `U_T`, `U_S` by orthonormal bases of their spans and absorb the
/// triangular factors into the core.
pub(crate) fn orthonormalize(f: &mut Tucker2Factors) -> Result<()> {
    let qr = f.u_t.clone().qr();
    let core = f.core.mode_product(1, &qr.r())?;
    f.u_t = qr.q();
    let qr = f.u_s.clone().qr();
    f.core = core.mode_product(2, &qr.r())?;
    f.u_s = qr.q();
    Ok(())
}

pub(crate) fn frobenius_update(
    k1: &Mat,
    k2: &Mat,
    k: &Tensor4,
    f: &mut Tucker2Factors,
    block: usize,
) -> Result<()> {
    match block {
        0 => {
            let z = unfold_mode(&f.core.mode_product(2, &f.u_s)?, 1)?.transpose();
            f.u_t = k1 * &z * pinv(&(z.transpose() * &z), 1e-13);
        }
        1 => {
            let z = unfold_mode(&f.core.mode_product(1, &f.u_t)?, 2)?.transpose();
            f.u_s = k2 * &z * pinv(&(z.transpose() * &z), 1e-13);
        }
        _ => {
            f.core = k
                .mode_product(1, &pinv(&f.u_t, 1e-13))?
                .mode_product(2, &pinv(&f.u_s, 1e-13))?;
        }
    }
    Ok(())
}

/// Unweighted least-squares Tucker2 sweeps starting from `f`.
pub(crate) fn tucker2_als_from(
    k: &Tensor4,
    f: Tucker2Factors,
    cfg: &AlsConfig,
) -> Result<AlsOutcome<Tucker2Factors>> {
    if f.dims() != k.dims() {
        return Err(Error::shape("starting factors do not match the kernel"));
    }
    let k1 = unfold_mode(k, 1)?;
    let k2 = unfold_mode(k, 2)?;
    als_loop(
        f,
        3,
        cfg,
        k.frobenius_norm(),
        |f| Ok(k.sub(&tucker2_reconstruct(f))?.frobenius_norm()),
        |f, b| frobenius_update(&k1, &k2, k, f, b),
        orthonormalize,
    )
}

/// Unweighted Tucker2 on the channel modes by alternating least squares over
/// `U_T`, `U_S` and the core, starting from the truncated HOSVD.
pub fn tucker2_als(
    k: &Tensor4,
    rt: usize,
    rs: usize,
    cfg: &AlsConfig,
) -> Result<AlsOutcome<Tucker2Factors>> {
    cfg.validate()?;
    let f = tucker2_init(k, rt, rs, cfg.init)?;
    tucker2_als_from(k, f, cfg)
}

/// Tucker2 minimizing `‖(K₍₁₎ − K̃₍₁₎) L‖_F`, block order `U_T, U_S, G`.
pub fn tucker2_als_sigma(
    k: &Tensor4,
    root: &SigmaRoot,
    rt: usize,
    rs: usize,
    cfg: &AlsConfig,
) -> Result<AlsOutcome<Tucker2Factors>> {
    cfg.validate()?;
    let problem = SigmaProblem::new(k, root)?;
    let f = match cfg.init {
        Init::FrobeniusWarmStart => tucker2_als(k, rt, rs, &cfg.with_init(Init::Hosvd))?.factors,
        other => tucker2_init(k, rt, rs, other)?,
    };
    let mut out = als_loop(
        f,
        3,
        cfg,
        sigma_norm_of(k, root)?,
        |f| problem.objective(&tucker2_reconstruct(f)),
        |f, b| {
            match b {
                0 => f.u_t = problem.tucker2_update_t(f)?,
                1 => f.u_s = problem.tucker2_update_s(f, &cfg.solver)?,
                _ => f.core = problem.tucker2_update_core(f)?,
            }
            Ok(())
        },
        orthonormalize,
    )?;
    out.fallbacks = problem.fallbacks();
    Ok(out)
}
