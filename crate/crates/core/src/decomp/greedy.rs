use super::{cp_als_sigma, AlsConfig};
use crate::covariance::{sigma_norm_of, SigmaRoot};
use crate::error::{Error, Result};
use crate::tensor::{cp_reconstruct, CpFactors, Tensor4};

use super::cp::cp_rank_max;

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// All components, in the order they were extracted.
    pub factors: CpFactors,
    /// Sigma norm of the residual before the first step and after each step.
    pub residual_trace: Vec<f64>,
    pub fallbacks: usize,
}

/// Rank-`R` CP built one component at a time: each step fits a rank-one
/// [`cp_als_sigma`] model to the current residual and subtracts it.
pub fn greedy_deflation_sigma(
    k: &Tensor4,
    root: &SigmaRoot,
    rank: usize,
    cfg: &AlsConfig,
) -> Result<GreedyOutcome> {
    let max = cp_rank_max(k.dims());
    if rank == 0 || rank > max {
        return Err(Error::Rank {
            rank,
            max,
            what: "CP rank",
        });
    }
    let mut residual = k.clone();
    let mut residual_trace = vec![sigma_norm_of(k, root)?];
    let mut factors: Option<CpFactors> = None;
    let mut fallbacks = 0;
    for _ in 0..rank {
        let step = cp_als_sigma(&residual, root, 1, cfg)?;
        fallbacks += step.fallbacks;
        residual = residual.sub(&cp_reconstruct(&step.factors))?;
        residual_trace.push(sigma_norm_of(&residual, root)?);
        factors = Some(match factors {
            None => step.factors,
            Some(acc) => acc.concat(&step.factors)?,
        });
    }
    Ok(GreedyOutcome {
        factors: factors.expect("rank is at least one"),
        residual_trace,
        fallbacks,
    })
}
