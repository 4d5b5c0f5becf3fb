//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sigma_lowrank::tensor::{cp_reconstruct, tucker2_reconstruct, unfold_mode};
use sigma_lowrank::{CpFactors, Mat, SigmaRoot, Tensor4, Tucker2Factors};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
}

pub fn rand_dims(rng: &mut ChaCha8Rng, max: [usize; 4]) -> [usize; 4] {
    [
        rng.random_range(1..=max[0]),
        rng.random_range(1..=max[1]),
        rng.random_range(1..=max[2]),
        rng.random_range(1..=max[3]),
    ]
}

pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
    Mat::from_fn(n, k, |_, _| gauss(rng)).qr().q()
}

pub fn random_cp(rng: &mut ChaCha8Rng, dims: [usize; 4], rank: usize) -> CpFactors {
    CpFactors::new(
        rand_mat(rng, dims[0], rank),
        rand_mat(rng, dims[1], rank),
        rand_mat(rng, dims[2], rank),
        rand_mat(rng, dims[3], rank),
    )
    .unwrap()
}

pub fn random_tucker(
    rng: &mut ChaCha8Rng,
    dims: [usize; 4],
    rt: usize,
    rs: usize,
) -> Tucker2Factors {
    let core = rand_tensor(rng, [rt, rs, dims[2], dims[3]]);
    Tucker2Factors::new(core, rand_mat(rng, dims[0], rt), rand_mat(rng, dims[1], rs)).unwrap()
}

/// `Σ = Q diag(λ) Qᵀ` with eigenvalues log-spaced over `[1/cond, 1]`.
pub fn sigma_with_condition(rng: &mut ChaCha8Rng, d: usize, cond: f64) -> Mat {
    let q = orthonormal(rng, d, d);
    let lam = DVector::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            cond.powf(-(i as f64) / (d - 1) as f64)
        }
    });
    let s = &q * Mat::from_diagonal(&lam) * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// A root of a random, generally anisotropic, PSD matrix.
pub fn random_root(rng: &mut ChaCha8Rng, d: usize) -> SigmaRoot {
    SigmaRoot::from_factor(rand_mat(rng, d, d)).unwrap()
}

/// Dense `P` for a block: column `j` is `vec(unfold₁(K̃(e_j)) L)` where
/// `K̃(e_j)` rebuilds the model with the block set to the `j`-th unit entry.
pub fn dense_p(n_params: usize, root: &SigmaRoot, build: impl Fn(&DVector<f64>) -> Tensor4) -> Mat {
    let mut cols = Vec::with_capacity(n_params);
    for j in 0..n_params {
        let mut e = DVector::zeros(n_params);
        e[j] = 1.0;
        let kt = build(&e);
        let y = unfold_mode(&kt, 1).unwrap() * root.factor();
        cols.push(DVector::from_column_slice(y.as_slice()));
    }
    Mat::from_columns(&cols)
}

/// Minimum-norm least-squares solution `P⁺ b`, straight from faer's SVD.
pub fn oracle_solve(p: &Mat, b: &DVector<f64>) -> DVector<f64> {
    let fp = faer::Mat::<f64>::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)]);
    let svd = fp.thin_svd().unwrap();
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let k = p.nrows().min(p.ncols());
    let smax = (0..k).map(|i| s[i]).fold(0.0f64, f64::max);
    let mut x = DVector::zeros(p.ncols());
    for c in 0..k {
        if s[c] <= 1e-12 * smax {
            continue;
        }
        let coef = (0..p.nrows()).map(|i| u[(i, c)] * b[i]).sum::<f64>() / s[c];
        for i in 0..p.ncols() {
            x[i] += coef * v[(i, c)];
        }
    }
    x
}

pub fn target(k: &Tensor4, root: &SigmaRoot) -> DVector<f64> {
    let y = unfold_mode(k, 1).unwrap() * root.factor();
    DVector::from_column_slice(y.as_slice())
}

/// Oracle for a CP factor update: every factor fixed except `mode`.
pub fn cp_oracle(k: &Tensor4, root: &SigmaRoot, f: &CpFactors, mode: usize) -> Mat {
    let rows = f.factor(mode).nrows();
    let r = f.rank();
    let build = |x: &DVector<f64>| {
        let mut g = f.clone();
        let m = Mat::from_column_slice(rows, r, x.as_slice());
        match mode {
            1 => g.u_t = m,
            2 => g.u_s = m,
            3 => g.u_h = m,
            _ => g.u_w = m,
        }
        cp_reconstruct(&g)
    };
    let p = dense_p(rows * r, root, build);
    Mat::from_column_slice(rows, r, oracle_solve(&p, &target(k, root)).as_slice())
}

pub fn tucker_oracle_t(k: &Tensor4, root: &SigmaRoot, f: &Tucker2Factors) -> Mat {
    let (t, rt) = (f.u_t.nrows(), f.u_t.ncols());
    let p = dense_p(t * rt, root, |x| {
        let mut g = f.clone();
        g.u_t = Mat::from_column_slice(t, rt, x.as_slice());
        tucker2_reconstruct(&g)
    });
    Mat::from_column_slice(t, rt, oracle_solve(&p, &target(k, root)).as_slice())
}

pub fn tucker_oracle_s(k: &Tensor4, root: &SigmaRoot, f: &Tucker2Factors) -> Mat {
    let (s, rs) = (f.u_s.nrows(), f.u_s.ncols());
    let p = dense_p(s * rs, root, |x| {
        let mut g = f.clone();
        g.u_s = Mat::from_column_slice(s, rs, x.as_slice());
        tucker2_reconstruct(&g)
    });
    Mat::from_column_slice(s, rs, oracle_solve(&p, &target(k, root)).as_slice())
}

pub fn tucker_oracle_core(k: &Tensor4, root: &SigmaRoot, f: &Tucker2Factors) -> Tensor4 {
    let dims = f.core.dims();
    let n: usize = dims.iter().product();
    let p = dense_p(n, root, |x| {
        let mut g = f.clone();
        g.core = Tensor4::new(dims, x.as_slice().to_vec()).unwrap();
        tucker2_reconstruct(&g)
    });
    Tensor4::new(dims, oracle_solve(&p, &target(k, root)).as_slice().to_vec()).unwrap()
}

pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn rel_diff_t(a: &Tensor4, b: &Tensor4) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1.0)
}

pub fn dmat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}
