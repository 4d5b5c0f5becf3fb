//! Factorizations and solvers used by the decompositions: regularized
//! symmetric square roots, MINRES, pseudo-inverses and truncated SVDs.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymSolveConfig {
    /// Relative residual threshold for MINRES.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the system dimension.
    pub max_iters: Option<usize>,
    /// Ridge added before taking square roots, relative to `trace / dim`.
    pub epsilon_scale: f64,
}

impl Default for SymSolveConfig {
    fn default() -> Self {
        SymSolveConfig {
            tol: 1e-12,
            max_iters: None,
            epsilon_scale: 1e-6,
        }
    }
}

impl SymSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Invalid(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == Some(0) {
            return Err(Error::Invalid("solver max_iters must be at least 1".into()));
        }
        if !(self.epsilon_scale >= 0.0) {
            return Err(Error::Invalid(format!(
                "epsilon_scale must be non-negative, got {}",
                self.epsilon_scale
            )));
        }
        Ok(())
    }

    fn iters_for(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or(10 * dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SqrtMethod {
    #[default]
    Cholesky,
    /// Eigendecomposition of the (regularized) symmetric matrix; works for
    /// singular input where Cholesky breaks down.
    Svd,
}

#[derive(Debug, Clone)]
pub struct SymSqrt {
    pub factor: Mat,
    pub epsilon: f64,
    pub lower_triangular: bool,
}

fn check_square(a: &Mat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_symmetric(a: &Mat, rel: f64) -> Result<()> {
    check_square(a)?;
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > rel * scale {
        return Err(Error::NotSymmetric(if scale > 0.0 {
            asym / scale
        } else {
            asym
        }));
    }
    Ok(())
}

/// Square root `L` with `L Lᵀ = S + ε I`, `ε = epsilon_scale * trace(S) / dim`.
pub fn sym_sqrt(s: &Mat, cfg: &SymSolveConfig, method: SqrtMethod) -> Result<SymSqrt> {
    check_symmetric(s, 1e-8)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_sqrt input"));
    }
    let n = s.nrows();
    let epsilon = cfg.epsilon_scale * s.trace() / n.max(1) as f64;
    // symmetrize exactly so both methods see the same matrix
    let mut reg = (s + s.transpose()) * 0.5;
    for i in 0..n {
        reg[(i, i)] += epsilon;
    }
    match method {
        SqrtMethod::Cholesky => {
            let chol = reg.cholesky().ok_or(Error::CholeskyBreakdown)?;
            Ok(SymSqrt {
                factor: chol.l(),
                epsilon,
                lower_triangular: true,
            })
        }
        SqrtMethod::Svd => {
            let (vals, vecs) = sorted_eigen(reg);
            let mut factor = vecs;
            for (j, &lam) in vals.iter().enumerate() {
                factor.column_mut(j).scale_mut(lam.max(0.0).sqrt());
            }
            Ok(SymSqrt {
                factor,
                epsilon,
                lower_triangular: false,
            })
        }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub(crate) fn sorted_eigen(a: Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Estimated `‖b − A x‖ / ‖b‖` at exit.
    pub rel_residual: f64,
    pub converged: bool,
    /// Set when the residual estimate stopped decreasing (see [`solve_gram`]).
    pub stalled: bool,
}

/// MINRES for symmetric, possibly singular, systems `A x = b`, started at
/// `x = 0` so that consistent singular systems yield the minimum-norm solution.
pub fn minres_solve<F>(apply_a: F, b: &DVector<f64>, cfg: &SymSolveConfig) -> Result<MinresOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    minres_impl(apply_a, b, cfg, None)
}

fn minres_impl<F>(
    apply_a: F,
    b: &DVector<f64>,
    cfg: &SymSolveConfig,
    stall_window: Option<usize>,
) -> Result<MinresOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("minres right-hand side"));
    }
    let n = b.len();
    let mut x = DVector::zeros(n);
    let beta1 = b.norm();
    if beta1 == 0.0 {
        return Ok(MinresOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            stalled: false,
        });
    }

    // Paige & Saunders recurrences, no preconditioner.
    let mut r1 = b.clone();
    let mut r2 = b.clone();
    let mut y = b.clone();
    let mut beta = beta1;
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);
    let mut history = Vec::new();
    let max_iters = cfg.iters_for(n);
    let mut iterations = 0;
    let mut stalled = false;

    while iterations < max_iters {
        iterations += 1;
        let v = &y / beta;
        y = apply_a(&v);
        if y.len() != n {
            return Err(Error::shape(format!(
                "operator returned {} values, expected {n}",
                y.len()
            )));
        }
        if iterations >= 2 {
            y.axpy(-beta / oldb, &r1, 1.0);
        }
        let alfa = v.dot(&y);
        y.axpy(-alfa / beta, &r2, 1.0);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = y.norm();
        if !alfa.is_finite() || !beta.is_finite() {
            return Err(Error::NonFinite("minres iteration"));
        }

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (v - &w1 * oldeps - &w2 * delta) / gamma;
        x.axpy(phi, &w, 1.0);

        let rel = phibar / beta1;
        history.push(rel);
        if rel <= cfg.tol || beta <= f64::EPSILON * beta1 {
            break;
        }
        if let Some(win) = stall_window {
            if history.len() > win && rel > 0.99 * history[history.len() - 1 - win] {
                stalled = true;
                break;
            }
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("minres solution"));
    }
    let rel_residual = *history.last().unwrap_or(&0.0);
    Ok(MinresOutcome {
        x,
        iterations,
        rel_residual,
        converged: rel_residual <= cfg.tol || beta <= f64::EPSILON * beta1,
        stalled,
    })
}

/// Thin SVD `A = U diag(s) Vᵀ`, singular values descending.
pub fn thin_svd(a: &Mat) -> (Mat, Vec<f64>, Mat) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (Mat::zeros(m, 0), Vec::new(), Mat::zeros(n, 0));
    }
    let fm = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fm.thin_svd().expect("SVD did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| fs[j].total_cmp(&fs[i]));
    let u = Mat::from_fn(m, k, |i, c| fu[(i, order[c])]);
    let v = Mat::from_fn(n, k, |i, c| fv[(i, order[c])]);
    let s = order.iter().map(|&i| fs[i].max(0.0)).collect();
    (u, s, v)
}

/// Singular values, descending.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    thin_svd(a).1
}

/// Moore-Penrose pseudo-inverse; singular values below `rcond * σ_max` are dropped.
pub fn pinv(a: &Mat, rcond: f64) -> Mat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Mat::zeros(n, m);
    }
    let (u, s, v) = thin_svd(a);
    let cut = rcond * s[0];
    let mut out = Mat::zeros(n, m);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cut && sk > 0.0 {
            out += (v.column(k) * u.column(k).transpose()) / sk;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.transpose()
    }
}

/// Leading `rank` singular triplets, singular values descending. Each left
/// singular vector is signed so its largest-magnitude entry is positive.
pub fn truncated_svd(a: &Mat, rank: usize) -> Result<TruncatedSvd> {
    let (m, n) = a.shape();
    let kmax = m.min(n);
    if rank == 0 || rank > kmax {
        return Err(Error::Rank {
            rank,
            max: kmax,
            what: "truncated SVD",
        });
    }
    let (u_full, s_full, v_full) = thin_svd(a);
    let mut u = u_full.columns(0, rank).into_owned();
    let mut v = v_full.columns(0, rank).into_owned();
    for j in 0..rank {
        let pivot =
            u.column(j)
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    let s = s_full[..rank].to_vec();
    Ok(TruncatedSvd { u, s, v })
}

/// Outcome of [`solve_gram`].
#[derive(Debug, Clone)]
pub struct GramSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub used_fallback: bool,
}

const STALL_WINDOW: usize = 20;

/// Least-squares solve through the normal equations `(PᵀP) x = Pᵀb`, with
/// `PᵀP` given only as an operator. MINRES first; on a stall, on hitting the
/// iteration cap, or when the true residual disagrees with the estimate, the
/// Gram matrix is assembled column by column and solved with a pseudo-inverse.
pub fn solve_gram<F>(
    apply_gram: F,
    rhs: &DVector<f64>,
    cfg: &SymSolveConfig,
) -> Result<GramSolution>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let out = minres_impl(&apply_gram, rhs, cfg, Some(STALL_WINDOW))?;
    let bnorm = rhs.norm();
    let true_res = (rhs - apply_gram(&out.x)).norm();
    if out.converged && !out.stalled && true_res <= 100.0 * cfg.tol * bnorm.max(f64::MIN_POSITIVE) {
        return Ok(GramSolution {
            x: out.x,
            iterations: out.iterations,
            used_fallback: false,
        });
    }

    let n = rhs.len();
    let mut gram = Mat::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        gram.set_column(j, &apply_gram(&e));
        e[j] = 0.0;
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    let x = pinv(&gram, 1e-13) * rhs;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense Gram fallback"));
    }
    Ok(GramSolution {
        x,
        iterations: out.iterations,
        used_fallback: true,
    })
}

/// Dense-matrix convenience wrapper around [`solve_gram`].
pub fn solve_gram_dense(
    gram: &Mat,
    rhs: &DVector<f64>,
    cfg: &SymSolveConfig,
) -> Result<GramSolution> {
    check_square(gram)?;
    if gram.nrows() != rhs.len() {
        return Err(Error::shape(format!(
            "Gram is {}x{} but rhs has {} entries",
            gram.nrows(),
            gram.ncols(),
            rhs.len()
        )));
    }
    solve_gram(|v| gram * v, rhs, cfg)
}
