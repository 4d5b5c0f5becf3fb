//! Rank selection: empirical variational Bayes matrix factorization (VBMF) on
//! kernel unfoldings, and the interpolated rank
//! `R_α = R_vbmf + (1 − α)(R_max − R_vbmf)`.

use serde::{Deserialize, Serialize};

use crate::decomp::cp_rank_max;
use crate::error::{Error, Result};
use crate::tensor::{unfold_mode, Mat, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cp,
    Tucker2,
    Svd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Tucker2 => "tucker2",
            Method::Svd => "svd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cp" => Ok(Method::Cp),
            "tucker2" => Ok(Method::Tucker2),
            "svd" => Ok(Method::Svd),
            other => Err(Error::Invalid(format!(
                "unknown method `{other}`, expected cp, tucker2 or svd"
            ))),
        }
    }
}

/// `Φ(z) = log(1 + z)/z − 1/2`, decreasing from 1/2 to −1/2.
fn phi(z: f64) -> f64 {
    if z < 1e-8 {
        0.5 - z / 2.0
    } else {
        z.ln_1p() / z - 0.5
    }
}

/// The EVB threshold constant: the zero of `Φ(τ) + Φ(τ/α)`. Close to
/// `2.5129 √α`, which is the usual closed-form approximation.
pub fn evb_tau_bar(alpha: f64) -> f64 {
    let f = |t: f64| phi(t) + phi(t / alpha);
    let (mut lo, mut hi) = (1e-12f64.ln(), 1e12f64.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn tau(x: f64, alpha: f64) -> f64 {
    let b = x - (1.0 + alpha);
    0.5 * (b + (b * b - 4.0 * alpha).max(0.0).sqrt())
}

struct Spectrum {
    l: f64,
    m: f64,
    s2: Vec<f64>,
    residual: f64,
    alpha: f64,
    x_bar: f64,
}

impl Spectrum {
    /// Free energy (up to constants) of the EVB solution at noise variance `sigma2`.
    fn free_energy(&self, sigma2: f64) -> f64 {
        let mut obj = 0.0;
        for &s2 in &self.s2 {
            let x = s2 / (self.m * sigma2);
            if x > self.x_bar {
                let t = tau(x, self.alpha);
                obj += x - t + ((t + 1.0) / x).ln() + self.alpha * (t / self.alpha + 1.0).ln();
            } else {
                obj += x - x.ln();
            }
        }
        let h = self.s2.len() as f64;
        obj + self.residual / (self.m * sigma2) + (self.l - h) * sigma2.ln()
    }
}

/// VBMF estimate returned by [`vbmf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbmfEstimate {
    pub rank: usize,
    pub noise_variance: f64,
    pub threshold: f64,
}

/// Rank of the empirical VB solution for `y`. Without `noise_variance` the
/// variance is estimated by minimizing the free energy over a bracket
/// (log-spaced scan, then golden-section refinement).
pub fn vbmf(y: &Mat, noise_variance: Option<f64>) -> Result<VbmfEstimate> {
    if y.is_empty() {
        return Err(Error::Invalid("VBMF needs a non-empty matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("VBMF input"));
    }
    if let Some(v) = noise_variance {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Invalid(format!(
                "noise variance must be positive, got {v}"
            )));
        }
    }
    let (l, m) = if y.nrows() <= y.ncols() {
        (y.nrows(), y.ncols())
    } else {
        (y.ncols(), y.nrows())
    };
    let total: f64 = y.norm_squared();
    if total == 0.0 {
        return Ok(VbmfEstimate {
            rank: 0,
            noise_variance: noise_variance.unwrap_or(0.0),
            threshold: 0.0,
        });
    }
    let mut s = crate::linalg::singular_values(y);
    // numerically zero singular values carry no information; drop them and
    // let their (negligible) energy go to the residual
    let cutoff = s[0] * (m as f64) * f64::EPSILON;
    s.retain(|&v| v > cutoff);
    let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
    let residual = (total - s2.iter().sum::<f64>()).max(0.0);

    let alpha = l as f64 / m as f64;
    let tau_bar = evb_tau_bar(alpha);
    let x_bar = (1.0 + tau_bar) * (1.0 + alpha / tau_bar);
    let spec = Spectrum {
        l: l as f64,
        m: m as f64,
        s2,
        residual,
        alpha,
        x_bar,
    };

    let sigma2 = match noise_variance {
        Some(v) => v,
        None => estimate_noise(&spec),
    };
    let threshold = (spec.m * sigma2 * x_bar).sqrt();
    let rank = s.iter().filter(|&&v| v > threshold).count();
    Ok(VbmfEstimate {
        rank,
        noise_variance: sigma2,
        threshold,
    })
}

fn estimate_noise(spec: &Spectrum) -> f64 {
    let h = spec.s2.len();
    let upper = (spec.s2.iter().sum::<f64>() + spec.residual) / (spec.l * spec.m);
    let k = ((spec.l / (1.0 + spec.alpha)).ceil() as usize)
        .saturating_sub(1)
        .min(h);
    let tail = &spec.s2[k.min(h)..];
    let at_k = tail.first().copied().unwrap_or(0.0);
    let tail_mean = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let mut lower = (at_k / (spec.m * spec.x_bar)).max(tail_mean / spec.m);
    lower = lower.max(upper * 1e-12);
    if lower >= upper {
        lower = upper * 1e-3;
    }

    let (a, b) = (lower.ln(), upper.ln());
    const GRID: usize = 400;
    let at = |i: usize| (a + (b - a) * i as f64 / GRID as f64).exp();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..=GRID {
        let v = spec.free_energy(at(i));
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let mut lo = at(best.saturating_sub(1)).ln();
    let mut hi = at((best + 1).min(GRID)).ln();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| spec.free_energy(t.exp());
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let refined = (0.5 * (lo + hi)).exp();
    if spec.free_energy(refined) <= best_val {
        refined
    } else {
        at(best)
    }
}

pub fn vbmf_rank(y: &Mat, noise_variance: Option<f64>) -> Result<usize> {
    Ok(vbmf(y, noise_variance)?.rank)
}

/// `round(R_vbmf + (1 − α)(R_max − R_vbmf))`, half away from zero, clamped to `[1, R_max]`.
pub fn r_alpha(r_vbmf: usize, r_max: usize, alpha: f64) -> Result<usize> {
    if !alpha.is_finite() {
        return Err(Error::Invalid(format!("alpha must be finite, got {alpha}")));
    }
    if r_max == 0 {
        return Err(Error::Invalid("R_max must be at least 1".into()));
    }
    if r_vbmf > r_max {
        return Err(Error::Rank {
            rank: r_vbmf,
            max: r_max,
            what: "VBMF rank",
        });
    }
    let v = r_vbmf as f64 + (1.0 - alpha) * (r_max as f64 - r_vbmf as f64);
    Ok((v.round().max(1.0) as usize).min(r_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPlan {
    pub method: Method,
    /// `[R]` for CP and SVD, `[R_T, R_S]` for Tucker2.
    pub ranks: Vec<usize>,
    pub alpha: f64,
    /// VBMF rank per unfolding that was analyzed.
    pub r_vbmf: Vec<usize>,
    pub r_max: Vec<usize>,
}

/// Plan ranks for a kernel. CP uses the largest VBMF rank over the four
/// unfoldings with `R_max = TSHW / max(T,S,H,W)`; Tucker2 plans each channel
/// mode separately; SVD works on the mode-1 unfolding.
pub fn plan_ranks(k: &Tensor4, method: Method, alpha: f64) -> Result<RankPlan> {
    if k.is_empty() {
        return Err(Error::Invalid(
            "cannot plan ranks for an empty kernel".into(),
        ));
    }
    let dims = k.dims();
    let (ranks, r_vbmf, r_max) = match method {
        Method::Cp => {
            let per_mode = (1..=4)
                .map(|n| vbmf_rank(&unfold_mode(k, n)?, None))
                .collect::<Result<Vec<_>>>()?;
            let rmax = cp_rank_max(dims);
            let rv = *per_mode.iter().max().unwrap();
            (vec![r_alpha(rv, rmax, alpha)?], per_mode, vec![rmax])
        }
        Method::Tucker2 => {
            let rt = vbmf_rank(&unfold_mode(k, 1)?, None)?;
            let rs = vbmf_rank(&unfold_mode(k, 2)?, None)?;
            (
                vec![r_alpha(rt, dims[0], alpha)?, r_alpha(rs, dims[1], alpha)?],
                vec![rt, rs],
                vec![dims[0], dims[1]],
            )
        }
        Method::Svd => {
            let unf = unfold_mode(k, 1)?;
            let rmax = unf.nrows().min(unf.ncols());
            let rv = vbmf_rank(&unf, None)?;
            (vec![r_alpha(rv, rmax, alpha)?], vec![rv], vec![rmax])
        }
    };
    Ok(RankPlan {
        method,
        ranks,
        alpha,
        r_vbmf,
        r_max,
    })
}
