use super::tucker::{frobenius_update, orthonormalize, tucker2_als, tucker2_init};
use super::{at_floor, converged, AlsConfig, AlsOutcome, Init};
use crate::error::{Error, Result};
use crate::tensor::{tucker2_reconstruct, unfold_mode, Tensor4, Tucker2Factors};

fn weighted_error(k: &Tensor4, approx: &Tensor4, h: &Tensor4) -> f64 {
    k.data()
        .iter()
        .zip(approx.data())
        .zip(h.data())
        .map(|((a, b), w)| (w * (a - b)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Tucker2 minimizing the element-weighted error `‖H ∘ (K − K̃)‖_F`.
///
/// Each iteration fills the target with the current model where the
/// normalized weights are small, `X = Hₙ∘K + (1 − Hₙ)∘K̃`, `Hₙ = (H / max H)²`,
/// and runs one unweighted ALS sweep on `X`. This is a majorize-minimize
/// scheme, so the weighted error never increases.
pub fn wals_tucker2(
    k: &Tensor4,
    h: &Tensor4,
    rt: usize,
    rs: usize,
    cfg: &AlsConfig,
) -> Result<AlsOutcome<Tucker2Factors>> {
    cfg.validate()?;
    k.check_same_dims(h)?;
    if h.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights"));
    }
    if h.data().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeWeights);
    }
    let hmax = h.data().iter().copied().fold(0.0, f64::max);
    if hmax == 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let hn: Vec<f64> = h.data().iter().map(|v| (v / hmax).powi(2)).collect();

    let mut f = match cfg.init {
        Init::FrobeniusWarmStart => tucker2_als(k, rt, rs, &cfg.with_init(Init::Hosvd))?.factors,
        other => tucker2_init(k, rt, rs, other)?,
    };
    let scale = weighted_error(k, &Tensor4::zeros(k.dims()), h);
    let mut approx = tucker2_reconstruct(&f);
    let start = weighted_error(k, &approx, h);
    let mut trace = vec![start];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps && !at_floor(start, cfg, scale) {
        let filled: Vec<f64> = k
            .data()
            .iter()
            .zip(approx.data())
            .zip(&hn)
            .map(|((a, b), w)| w * a + (1.0 - w) * b)
            .collect();
        let x = Tensor4::new(k.dims(), filled)?;
        let x1 = unfold_mode(&x, 1)?;
        let x2 = unfold_mode(&x, 2)?;
        for b in 0..3 {
            frobenius_update(&x1, &x2, &x, &mut f, b)?;
        }
        orthonormalize(&mut f)?;
        sweeps += 1;
        approx = tucker2_reconstruct(&f);
        let cur = weighted_error(k, &approx, h);
        if !cur.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        let prev = *trace.last().unwrap();
        trace.push(cur);
        if converged(prev, cur, cfg, scale) {
            break;
        }
    }
    Ok(AlsOutcome {
        factors: f,
        update_trace: trace.clone(),
        trace,
        sweeps,
        fallbacks: 0,
    })
}
