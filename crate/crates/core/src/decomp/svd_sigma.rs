use crate::covariance::SigmaRoot;
use crate::error::{Error, Result};
use crate::linalg::truncated_svd;
use crate::tensor::Mat;

/// `W ≈ A B` with `A` of size `m x R` and `B` of size `R x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub a: Mat,
    pub b: Mat,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn reconstruct(&self) -> Mat {
        &self.a * &self.b
    }

    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// Best rank-`R` approximation of a linear layer `W` (`m x n`) in
/// `‖(W − A B) L‖_F`: truncate the SVD of `W L`, then undo `L` on the right.
pub fn svd_sigma(w: &Mat, root: &SigmaRoot, rank: usize) -> Result<SvdFactors> {
    if root.dim() != w.ncols() {
        return Err(Error::shape(format!(
            "Sigma root has dim {} but the layer has {} inputs",
            root.dim(),
            w.ncols()
        )));
    }
    let l = root.factor();
    let diag_max = l.diagonal().amax();
    let tsvd = truncated_svd(&(w * l), rank)?;
    let mut y = tsvd.v.transpose();
    for (i, s) in tsvd.s.iter().enumerate() {
        y.row_mut(i).scale_mut(*s);
    }
    // B = Y L⁻¹, i.e. Lᵀ Bᵀ = Yᵀ
    let lt = l.transpose();
    let bt = if root.is_lower_triangular() {
        if diag_max == 0.0 || l.diagonal().iter().any(|d| d.abs() <= 1e-14 * diag_max) {
            return Err(Error::SingularRoot);
        }
        lt.solve_upper_triangular(&y.transpose())
            .ok_or(Error::SingularRoot)?
    } else {
        let lu = lt.lu();
        let sol = lu.solve(&y.transpose()).ok_or(Error::SingularRoot)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularRoot);
        }
        sol
    };
    Ok(SvdFactors {
        a: tsvd.u,
        b: bt.transpose(),
    })
}
