//! Low-rank decompositions of layer kernels.
//!
//! Frobenius baselines ([`cp_als`], [`tucker2_als`]), their distribution-aware
//! counterparts ([`cp_als_sigma`], [`tucker2_als_sigma`]), greedy rank-one
//! deflation, the weighted SVD for linear layers and element-weighted Tucker2.
//!
//! The Sigma-weighted factor updates all minimize
//! `‖(K₍₁₎ − K̃₍₁₎) L‖_F` over one block with the others fixed. Writing the
//! block linearly, `vec(K̃₍₁₎ L) = P x`, each update solves the normal
//! equations `(PᵀP) x = Pᵀ vec(K₍₁₎ L)`. `P` itself (`T·S·H·W` rows) is never
//! formed: the Gram matrix or operator is assembled from the `S·H·W`-sized
//! pieces in [`SigmaProblem`] and handed to [`solve_gram`].
//!
//! Where `P` is a Kronecker product (the output factor and the Tucker2 core),
//! `P⁺ = A⁺ ⊗ B⁺` gives the same minimum-norm solution from two small
//! pseudo-inverses without squaring the conditioning.

mod cp;
mod greedy;
mod svd_sigma;
mod tucker;
mod wals;

use std::cell::Cell;

use nalgebra::DVector;

use crate::covariance::SigmaRoot;
use crate::error::{Error, Result};
use crate::linalg::{pinv, solve_gram, SymSolveConfig};
use crate::tensor::{
    cp_reconstruct, fold_mode, khatri_rao, tucker2_reconstruct, unfold_mode, CpFactors, Mat,
    Tensor4, Tucker2Factors,
};

pub use cp::{cp_als, cp_als_sigma, cp_init, cp_rank_max};
pub use greedy::{greedy_deflation_sigma, GreedyOutcome};
pub use svd_sigma::{svd_sigma, SvdFactors};
pub use tucker::{tucker2_als, tucker2_als_sigma, tucker2_hosvd};
pub use wals::wals_tucker2;

/// Relative cutoff for the pseudo-inverses in the Kronecker-structured updates.
const PINV_RCOND: f64 = 1e-13;

/// Refinement steps after each Gram solve.
const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Run the unweighted ALS first and start from its result. For the
    /// unweighted solvers themselves this is the SVD-based start.
    #[default]
    FrobeniusWarmStart,
    /// Leading singular vectors of the mode unfoldings.
    Hosvd,
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsConfig {
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub rel_tol: f64,
    pub init: Init,
    pub solver: SymSolveConfig,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            max_sweeps: 50,
            rel_tol: 1e-6,
            init: Init::FrobeniusWarmStart,
            solver: SymSolveConfig::default(),
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Invalid("max_sweeps must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Invalid(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        self.solver.validate()
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Result of an alternating solver.
#[derive(Debug, Clone)]
pub struct AlsOutcome<F> {
    pub factors: F,
    /// Objective at the starting point, then after every sweep.
    pub trace: Vec<f64>,
    /// Objective at the starting point, then after every single block update.
    pub update_trace: Vec<f64>,
    pub sweeps: usize,
    /// Number of Gram solves that fell back from MINRES to a dense pseudo-inverse.
    pub fallbacks: usize,
}

impl<F> AlsOutcome<F> {
    pub fn final_objective(&self) -> f64 {
        *self
            .trace
            .last()
            .expect("trace holds the initial objective")
    }
}

/// Stops on a small relative decrease, or once the objective is at the level
/// the inner solver can resolve, where further sweeps only move round-off.
pub(crate) fn converged(prev: f64, cur: f64, cfg: &AlsConfig, scale: f64) -> bool {
    at_floor(cur, cfg, scale) || prev - cur <= cfg.rel_tol * prev
}

pub(crate) fn at_floor(objective: f64, cfg: &AlsConfig, scale: f64) -> bool {
    objective <= cfg.solver.tol.max(1e-14) * scale
}

/// Shared sweep loop. `update(f, b)` replaces block `b` in place; `tidy` runs
/// after each sweep and must not change the reconstruction.
pub(crate) fn als_loop<F>(
    mut f: F,
    blocks: usize,
    cfg: &AlsConfig,
    scale: f64,
    objective: impl Fn(&F) -> Result<f64>,
    mut update: impl FnMut(&mut F, usize) -> Result<()>,
    tidy: impl Fn(&mut F) -> Result<()>,
) -> Result<AlsOutcome<F>> {
    let checked = |f: &F| -> Result<f64> {
        let v = objective(f)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        Ok(v)
    };
    let start = checked(&f)?;
    let mut trace = vec![start];
    let mut update_trace = vec![start];
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps && !at_floor(start, cfg, scale) {
        for b in 0..blocks {
            update(&mut f, b)?;
            update_trace.push(checked(&f)?);
        }
        tidy(&mut f)?;
        sweeps += 1;
        let cur = checked(&f)?;
        let prev = *trace.last().unwrap();
        trace.push(cur);
        if converged(prev, cur, cfg, scale) {
            break;
        }
    }
    Ok(AlsOutcome {
        factors: f,
        trace,
        update_trace,
        sweeps,
        fallbacks: 0,
    })
}

/// Precomputed pieces of `‖(K₍₁₎ − K̃₍₁₎) L‖_F` for one kernel and one root.
pub struct SigmaProblem<'a> {
    k: &'a Tensor4,
    root: &'a SigmaRoot,
    k1: Mat,
    k1_root: Mat,
    k1_sigma: Mat,
    fallbacks: Cell<usize>,
}

impl<'a> SigmaProblem<'a> {
    pub fn new(k: &'a Tensor4, root: &'a SigmaRoot) -> Result<Self> {
        root.check_kernel(k.dims())?;
        let k1 = unfold_mode(k, 1)?;
        let k1_root = &k1 * root.factor();
        let k1_sigma = &k1_root * root.factor().transpose();
        Ok(SigmaProblem {
            k,
            root,
            k1,
            k1_root,
            k1_sigma,
            fallbacks: Cell::new(0),
        })
    }

    pub fn kernel(&self) -> &Tensor4 {
        self.k
    }

    pub fn root(&self) -> &SigmaRoot {
        self.root
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks.get()
    }

    pub fn objective(&self, approx: &Tensor4) -> Result<f64> {
        self.k.check_same_dims(approx)?;
        let diff = &self.k1 - unfold_mode(approx, 1)?;
        Ok((diff * self.root.factor()).norm())
    }

    fn solve(
        &self,
        apply: impl Fn(&DVector<f64>) -> DVector<f64>,
        rhs: &DVector<f64>,
        cfg: &SymSolveConfig,
    ) -> Result<DVector<f64>> {
        let out = solve_gram(apply, rhs, cfg)?;
        if out.used_fallback {
            self.fallbacks.set(self.fallbacks.get() + 1);
        }
        Ok(out.x)
    }

    /// Solve `gram x = rhs`, then apply corrected semi-normal steps: each
    /// correction solves against `Pᵀ vec(E L)` with `E` the explicit residual
    /// at the current `x`, which brings the error from `κ(P)² ε` to about
    /// `κ(P) ε` without forming `P`.
    fn solve_refined(
        &self,
        gram: &Mat,
        rhs: &DVector<f64>,
        cfg: &SymSolveConfig,
        gradient: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    ) -> Result<DVector<f64>> {
        let mut x = self.solve(|v| gram * v, rhs, cfg)?;
        for _ in 0..REFINE_STEPS {
            let g = gradient(&x)?;
            if g.norm() == 0.0 {
                break;
            }
            let dx = self.solve(|v| gram * v, &g, cfg)?;
            x += &dx;
            if dx.norm() <= f64::EPSILON * x.norm() {
                break;
            }
        }
        Ok(x)
    }

    /// `(K₍₁₎ − K̃₍₁₎) L Lᵀ` folded back to kernel shape.
    fn weighted_residual(&self, approx: &Tensor4) -> Result<Tensor4> {
        let l = self.root.factor();
        let e1 = (&self.k1 - unfold_mode(approx, 1)?) * l * l.transpose();
        fold_mode(&e1, 1, self.k.dims())
    }

    /// Output-channel factor given `K̃₍₁₎ = U_T Zᵀ`. `K̃₍₁₎ L = U_T Mᵀ` with
    /// `M = LᵀZ`, so the minimum-norm solution is `(K₍₁₎ L) (Mᵀ)⁺`.
    fn output_factor_update(&self, z: &Mat) -> Mat {
        let m = self.root.factor().transpose() * z;
        &self.k1_root * pinv(&m.transpose(), PINV_RCOND)
    }

    /// Solve for factor `mode` (1..=4) of a CP model, the other three fixed.
    pub fn cp_update(&self, f: &CpFactors, mode: usize, cfg: &SymSolveConfig) -> Result<Mat> {
        if f.dims() != self.k.dims() {
            return Err(Error::shape(format!(
                "CP factors {:?} do not match kernel {:?}",
                f.dims(),
                self.k.dims()
            )));
        }
        if mode == 1 {
            let z = khatri_rao(&[&f.u_s, &f.u_h, &f.u_w])?;
            return Ok(self.output_factor_update(&z));
        }
        if !(2..=4).contains(&mode) {
            return Err(Error::InvalidMode(mode));
        }
        let [_, s, h, w] = self.k.dims();
        let d = s * h * w;
        let r = f.rank();
        let size = f.factor(mode).nrows();

        // V: column (i, r) is the S·H·W vector of component r with the mode
        // factor replaced by the unit vector e_i.
        let mut v = Mat::zeros(d, size * r);
        for c in 0..r {
            for i in 0..size {
                let col = c * size + i;
                let pick = |m: usize, idx: usize| -> f64 {
                    if m == mode {
                        if idx == i {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        f.factor(m)[(idx, c)]
                    }
                };
                let mut o = 0;
                for si in 0..s {
                    let a = pick(2, si);
                    for hi in 0..h {
                        let b = a * pick(3, hi);
                        for wi in 0..w {
                            v[(o, col)] = b * pick(4, wi);
                            o += 1;
                        }
                    }
                }
            }
        }
        let n = self.root.factor().transpose() * &v;
        let ntn = n.transpose() * &n;
        let c = f.u_t.transpose() * &f.u_t;
        let gram = Mat::from_fn(size * r, size * r, |a, b| {
            ntn[(a, b)] * c[(a / size, b / size)]
        });
        let q = self.k1_sigma.transpose() * &f.u_t;
        let rhs = DVector::from_fn(size * r, |a, _| v.column(a).dot(&q.column(a / size)));
        let x = self.solve_refined(&gram, &rhs, cfg, |x| {
            let mut g = f.clone();
            *g.factor_mut(mode) = Mat::from_column_slice(size, r, x.as_slice());
            let e = self.weighted_residual(&cp_reconstruct(&g))?;
            let rest: Vec<&Mat> = (1..=4)
                .filter(|&m| m != mode)
                .map(|m| g.factor(m))
                .collect();
            let grad = unfold_mode(&e, mode)? * khatri_rao(&rest)?;
            Ok(DVector::from_column_slice(grad.as_slice()))
        })?;
        Ok(Mat::from_column_slice(size, r, x.as_slice()))
    }

    /// Tucker2 output-channel factor, `K̃₍₁₎ = U_T · unfold(G ×₂ U_S, 1)`.
    pub fn tucker2_update_t(&self, f: &Tucker2Factors) -> Result<Mat> {
        self.check_tucker(f)?;
        let zt = unfold_mode(&f.core.mode_product(2, &f.u_s)?, 1)?;
        Ok(self.output_factor_update(&zt.transpose()))
    }

    /// Tucker2 input-channel factor. Row `t` of `K̃₍₁₎` is `B_t vec(U_S)` with
    /// column `(s, b)` of `B_t` equal to `e_s ⊗ Y[t, b, :, :]`, `Y = G ×₁ U_T`.
    pub fn tucker2_update_s(&self, f: &Tucker2Factors, cfg: &SymSolveConfig) -> Result<Mat> {
        self.check_tucker(f)?;
        let [t, s, h, w] = self.k.dims();
        let hw = h * w;
        let d = s * hw;
        let (_, rs) = f.ranks();
        let y = f.core.mode_product(1, &f.u_t)?;
        let lt = self.root.factor().transpose();
        let n_unknown = s * rs;
        let mut gram = Mat::zeros(n_unknown, n_unknown);
        let mut rhs = DVector::zeros(n_unknown);
        let mut bt = Mat::zeros(d, n_unknown);
        for ti in 0..t {
            bt.fill(0.0);
            for b in 0..rs {
                for si in 0..s {
                    let col = b * s + si;
                    for p in 0..hw {
                        bt[(si * hw + p, col)] = y.get(ti, b, p / w, p % w);
                    }
                }
            }
            let nt = &lt * &bt;
            gram += nt.tr_mul(&nt);
            rhs += nt.tr_mul(&self.k1_root.row(ti).transpose());
        }
        let y2 = unfold_mode(&y, 2)?;
        let x = self.solve_refined(&gram, &rhs, cfg, |x| {
            let mut g = f.clone();
            g.u_s = Mat::from_column_slice(s, rs, x.as_slice());
            let e = self.weighted_residual(&tucker2_reconstruct(&g))?;
            let grad = unfold_mode(&e, 2)? * y2.transpose();
            Ok(DVector::from_column_slice(grad.as_slice()))
        })?;
        Ok(Mat::from_column_slice(s, rs, x.as_slice()))
    }

    /// Tucker2 core. `K̃₍₁₎ L = U_T G₍₁₎ Nᵀ` with `N = Lᵀ (U_S ⊗ I_HW)`, so
    /// `G₍₁₎ = U_T⁺ (K₍₁₎ L) (Nᵀ)⁺`.
    pub fn tucker2_update_core(&self, f: &Tucker2Factors) -> Result<Tensor4> {
        self.check_tucker(f)?;
        let [_, _, h, w] = self.k.dims();
        let (rt, rs) = f.ranks();
        let n = self.root.factor().transpose()
            * crate::tensor::kronecker(&f.u_s, &Mat::identity(h * w, h * w));
        let g1 = pinv(&f.u_t, PINV_RCOND) * &self.k1_root * pinv(&n.transpose(), PINV_RCOND);
        fold_mode(&g1, 1, [rt, rs, h, w])
    }

    fn check_tucker(&self, f: &Tucker2Factors) -> Result<()> {
        if f.dims() != self.k.dims() {
            return Err(Error::shape(format!(
                "Tucker2 factors {:?} do not match kernel {:?}",
                f.dims(),
                self.k.dims()
            )));
        }
        Ok(())
    }
}
