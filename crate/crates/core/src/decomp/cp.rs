use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{als_loop, AlsConfig, AlsOutcome, Init, SigmaProblem};
use crate::covariance::SigmaRoot;
use crate::error::{Error, Result};
use crate::linalg::{pinv, truncated_svd};
use crate::tensor::{cp_reconstruct, khatri_rao, unfold_mode, CpFactors, Mat, Tensor4};

/// Largest CP rank accepted for a kernel: `T·S·H·W / max(T, S, H, W)`.
pub fn cp_rank_max(dims: [usize; 4]) -> usize {
    let prod: usize = dims.iter().product();
    let max = *dims.iter().max().unwrap();
    prod.checked_div(max).unwrap_or(0)
}

fn check_rank(k: &Tensor4, rank: usize) -> Result<()> {
    let max = cp_rank_max(k.dims());
    if rank == 0 || rank > max {
        return Err(Error::Rank {
            rank,
            max,
            what: "CP rank",
        });
    }
    Ok(())
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Starting factors. The SVD start takes the leading left singular vectors of
/// each unfolding and fills columns beyond the mode size with seeded noise.
pub fn cp_init(k: &Tensor4, rank: usize, init: Init) -> Result<CpFactors> {
    check_rank(k, rank)?;
    let dims = k.dims();
    let mut modes = Vec::with_capacity(4);
    match init {
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for &n in &dims {
                modes.push(gaussian(n, rank, &mut rng));
            }
        }
        Init::Hosvd | Init::FrobeniusWarmStart => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for (i, &n) in dims.iter().enumerate() {
                let unf = unfold_mode(k, i + 1)?;
                let lead = rank.min(n).min(unf.ncols());
                let mut u = gaussian(n, rank, &mut rng) / (n as f64).sqrt();
                if unf.norm() > 0.0 {
                    let svd = truncated_svd(&unf, lead)?;
                    u.columns_mut(0, lead).copy_from(&svd.u);
                }
                modes.push(u);
            }
        }
    }
    let u_w = modes.pop().unwrap();
    let u_h = modes.pop().unwrap();
    let u_s = modes.pop().unwrap();
    let u_t = modes.pop().unwrap();
    CpFactors::new(u_t, u_s, u_h, u_w)
}

/// Rescale each component so its four factor columns share the norm `λ^{1/4}`.
pub(crate) fn balance(f: &mut CpFactors) {
    for r in 0..f.rank() {
        let norms: Vec<f64> = (1..=4).map(|m| f.factor(m).column(r).norm()).collect();
        let lambda: f64 = norms.iter().product();
        if lambda == 0.0 || !lambda.is_finite() {
            continue;
        }
        let target = lambda.powf(0.25);
        for (m, n) in (1..=4).zip(norms) {
            f.factor_mut(m).column_mut(r).scale_mut(target / n);
        }
    }
}

fn others(f: &CpFactors, mode: usize) -> Vec<&Mat> {
    (1..=4)
        .filter(|&m| m != mode)
        .map(|m| f.factor(m))
        .collect()
}

/// Unweighted least-squares CP by alternating updates
/// `U_n = K₍ₙ₎ Z (ZᵀZ)⁺`, `Z` the Khatri-Rao product of the other factors.
pub fn cp_als(k: &Tensor4, rank: usize, cfg: &AlsConfig) -> Result<AlsOutcome<CpFactors>> {
    cfg.validate()?;
    let init = match cfg.init {
        Init::Random(seed) => Init::Random(seed),
        _ => Init::Hosvd,
    };
    let f = cp_init(k, rank, init)?;
    let unfoldings: Vec<Mat> = (1..=4).map(|n| unfold_mode(k, n)).collect::<Result<_>>()?;
    als_loop(
        f,
        4,
        cfg,
        k.frobenius_norm(),
        |f| Ok(k.sub(&cp_reconstruct(f))?.frobenius_norm()),
        |f, b| {
            let mode = b + 1;
            let rest = others(f, mode);
            let z = khatri_rao(&rest)?;
            let mut gram = Mat::from_element(rank, rank, 1.0);
            for u in &rest {
                gram.component_mul_assign(&(u.transpose() * *u));
            }
            let next = &unfoldings[b] * z * pinv(&gram, 1e-13);
            *f.factor_mut(mode) = next;
            Ok(())
        },
        |f| {
            balance(f);
            Ok(())
        },
    )
}

/// CP minimizing `‖(K₍₁₎ − K̃₍₁₎) L‖_F`, one factor at a time in the order
/// `U_T, U_S, U_H, U_W`.
pub fn cp_als_sigma(
    k: &Tensor4,
    root: &SigmaRoot,
    rank: usize,
    cfg: &AlsConfig,
) -> Result<AlsOutcome<CpFactors>> {
    cfg.validate()?;
    let problem = SigmaProblem::new(k, root)?;
    let f = match cfg.init {
        Init::FrobeniusWarmStart => cp_als(k, rank, &cfg.with_init(Init::Hosvd))?.factors,
        other => cp_init(k, rank, other)?,
    };
    let scale = crate::covariance::sigma_norm_of(k, root)?;
    let mut out = als_loop(
        f,
        4,
        cfg,
        scale,
        |f| problem.objective(&cp_reconstruct(f)),
        |f, b| {
            let next = problem.cp_update(f, b + 1, &cfg.solver)?;
            *f.factor_mut(b + 1) = next;
            Ok(())
        },
        |f| {
            balance(f);
            Ok(())
        },
    )?;
    out.fallbacks = problem.fallbacks();
    Ok(out)
}
