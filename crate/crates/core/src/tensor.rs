//! Dense 4-way kernels and the unfolding / Khatri-Rao / Kronecker algebra.
//!
//! Every tensor is stored row-major over `(t, s, h, w)`, `w` fastest. A mode-n
//! unfolding places mode `n` on the rows and linearizes the three remaining
//! modes in their original order with the last one fastest, so the mode-1
//! unfolding of a kernel has its columns ordered `(s, h, w)` exactly like the
//! rows of [`crate::conv::im2col`]. The Khatri-Rao product uses the same
//! ordering (last factor fastest), which gives
//!
//! ```text
//! unfold(cp(U_T, U_S, U_H, U_W), 1) = U_T * khatri_rao([U_S, U_H, U_W])^T
//! ```
//!
//! Matrices are `nalgebra` column-major, so `vec(A)` is the plain storage
//! order and `vec(A X B) = (B^T ⊗ A) vec(X)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix, column-major storage.
pub type Mat = DMatrix<f64>;

/// Column-major vectorization, `vec(A)[m*j + i] = A[i, j]`.
pub fn vec(a: &Mat) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Dense `T x S x H x W` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape(format!(
                "tensor dims must be positive, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "tensor dims {dims:?} need {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for t in 0..dims[0] {
            for s in 0..dims[1] {
                for h in 0..dims[2] {
                    for w in 0..dims[3] {
                        data.push(f(t, s, h, w));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    /// A linear layer `out x in` viewed as a `(out, in, 1, 1)` kernel.
    pub fn from_matrix(m: &Mat) -> Self {
        Tensor4::from_fn([m.nrows(), m.ncols(), 1, 1], |t, s, _, _| m[(t, s)])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, t: usize, s: usize, h: usize, w: usize) -> usize {
        let [_, sd, hd, wd] = self.dims;
        ((t * sd + s) * hd + h) * wd + w
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(t, s, h, w)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, s: usize, h: usize, w: usize, v: f64) {
        let o = self.offset(t, s, h, w);
        self.data[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Tensor4) -> Result<Tensor4> {
        self.check_same_dims(other)?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        self.check_same_dims(other)?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn check_same_dims(&self, other: &Tensor4) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "tensor dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Mode-n product `X ×_n M`: mode `n` (1-based) is contracted against the
    /// columns of `m`, its size becomes `m.nrows()`.
    pub fn mode_product(&self, n: usize, m: &Mat) -> Result<Tensor4> {
        let unfolded = unfold_mode(self, n)?;
        if m.ncols() != unfolded.nrows() {
            return Err(Error::shape(format!(
                "mode-{n} product needs {} columns, got {}",
                unfolded.nrows(),
                m.ncols()
            )));
        }
        let mut dims = self.dims;
        dims[n - 1] = m.nrows();
        fold_mode(&(m * unfolded), n, dims)
    }
}

fn check_mode(n: usize) -> Result<()> {
    if (1..=4).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidMode(n))
    }
}

// Strides of the three non-`n` modes inside an unfolding column index.
fn unfold_layout(dims: [usize; 4], n: usize) -> ([usize; 4], usize) {
    let mut col_stride = [0usize; 4];
    let mut stride = 1;
    for k in (0..4).rev() {
        if k == n - 1 {
            continue;
        }
        col_stride[k] = stride;
        stride *= dims[k];
    }
    (col_stride, stride)
}

/// Mode-n unfolding (`n` in `1..=4`).
pub fn unfold_mode(k: &Tensor4, n: usize) -> Result<Mat> {
    check_mode(n)?;
    let dims = k.dims;
    let (col_stride, ncols) = unfold_layout(dims, n);
    let mut out = Mat::zeros(dims[n - 1], ncols);
    let mut idx = 0;
    for t in 0..dims[0] {
        for s in 0..dims[1] {
            for h in 0..dims[2] {
                for w in 0..dims[3] {
                    let ix = [t, s, h, w];
                    let col: usize = (0..4).map(|q| ix[q] * col_stride[q]).sum();
                    out[(ix[n - 1], col)] = k.data[idx];
                    idx += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold_mode`].
pub fn fold_mode(m: &Mat, n: usize, dims: [usize; 4]) -> Result<Tensor4> {
    check_mode(n)?;
    if dims.contains(&0) {
        return Err(Error::shape(format!(
            "tensor dims must be positive, got {dims:?}"
        )));
    }
    let (col_stride, ncols) = unfold_layout(dims, n);
    if m.nrows() != dims[n - 1] || m.ncols() != ncols {
        return Err(Error::shape(format!(
            "cannot fold a {}x{} matrix along mode {n} into {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(Tensor4::from_fn(dims, |t, s, h, w| {
        let ix = [t, s, h, w];
        let col: usize = (0..4).map(|q| ix[q] * col_stride[q]).sum();
        m[(ix[n - 1], col)]
    }))
}

/// Column-wise Kronecker product; the last factor varies fastest along rows.
pub fn khatri_rao(factors: &[&Mat]) -> Result<Mat> {
    if factors.len() < 2 {
        return Err(Error::Invalid(
            "khatri_rao needs at least two factors".into(),
        ));
    }
    let r = factors[0].ncols();
    if let Some(bad) = factors.iter().find(|f| f.ncols() != r) {
        return Err(Error::shape(format!(
            "khatri_rao column counts differ: {r} vs {}",
            bad.ncols()
        )));
    }
    let rows: usize = factors.iter().map(|f| f.nrows()).product();
    let mut out = Mat::zeros(rows, r);
    for c in 0..r {
        let mut col = vec![1.0];
        for f in factors {
            let mut next = Vec::with_capacity(col.len() * f.nrows());
            for &a in &col {
                for i in 0..f.nrows() {
                    next.push(a * f[(i, c)]);
                }
            }
            col = next;
        }
        out.column_mut(c).copy_from_slice(&col);
    }
    Ok(out)
}

/// Standard Kronecker product, `(A ⊗ B)[i*p + k, j*q + l] = A[i,j] B[k,l]`.
pub fn kronecker(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// CP factors of a 4-way kernel; all four share the rank `R` as column count.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub u_t: Mat,
    pub u_s: Mat,
    pub u_h: Mat,
    pub u_w: Mat,
}

impl CpFactors {
    pub fn new(u_t: Mat, u_s: Mat, u_h: Mat, u_w: Mat) -> Result<Self> {
        let r = u_t.ncols();
        if r == 0 || u_s.ncols() != r || u_h.ncols() != r || u_w.ncols() != r {
            return Err(Error::shape(format!(
                "CP factors need equal positive column counts, got {}, {}, {}, {}",
                r,
                u_s.ncols(),
                u_h.ncols(),
                u_w.ncols()
            )));
        }
        Ok(CpFactors { u_t, u_s, u_h, u_w })
    }

    pub fn rank(&self) -> usize {
        self.u_t.ncols()
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.u_t.nrows(),
            self.u_s.nrows(),
            self.u_h.nrows(),
            self.u_w.nrows(),
        ]
    }

    pub fn factor(&self, mode: usize) -> &Mat {
        match mode {
            1 => &self.u_t,
            2 => &self.u_s,
            3 => &self.u_h,
            _ => &self.u_w,
        }
    }

    pub(crate) fn factor_mut(&mut self, mode: usize) -> &mut Mat {
        match mode {
            1 => &mut self.u_t,
            2 => &mut self.u_s,
            3 => &mut self.u_h,
            _ => &mut self.u_w,
        }
    }

    pub fn param_count(&self) -> usize {
        self.rank() * self.dims().iter().sum::<usize>()
    }

    /// Stack the components of `other` after those of `self`.
    pub fn concat(&self, other: &CpFactors) -> Result<CpFactors> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                "cannot concatenate CP factors of different dims",
            ));
        }
        let cat = |a: &Mat, b: &Mat| {
            let mut m = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
            m.columns_mut(0, a.ncols()).copy_from(a);
            m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            m
        };
        CpFactors::new(
            cat(&self.u_t, &other.u_t),
            cat(&self.u_s, &other.u_s),
            cat(&self.u_h, &other.u_h),
            cat(&self.u_w, &other.u_w),
        )
    }
}

/// Tucker2 factors: core `R_T x R_S x H x W`, `U_T` is `T x R_T`, `U_S` is `S x R_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tucker2Factors {
    pub core: Tensor4,
    pub u_t: Mat,
    pub u_s: Mat,
}

impl Tucker2Factors {
    pub fn new(core: Tensor4, u_t: Mat, u_s: Mat) -> Result<Self> {
        let [rt, rs, _, _] = core.dims();
        if u_t.ncols() != rt || u_s.ncols() != rs {
            return Err(Error::shape(format!(
                "core {:?} does not match U_T ({}x{}) and U_S ({}x{})",
                core.dims(),
                u_t.nrows(),
                u_t.ncols(),
                u_s.nrows(),
                u_s.ncols()
            )));
        }
        Ok(Tucker2Factors { core, u_t, u_s })
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.u_t.ncols(), self.u_s.ncols())
    }

    pub fn dims(&self) -> [usize; 4] {
        let [_, _, h, w] = self.core.dims();
        [self.u_t.nrows(), self.u_s.nrows(), h, w]
    }

    pub fn param_count(&self) -> usize {
        let [t, s, h, w] = self.dims();
        let (rt, rs) = self.ranks();
        t * rt + s * rs + rt * rs * h * w
    }
}

pub fn cp_reconstruct(f: &CpFactors) -> Tensor4 {
    let [t, s, h, w] = f.dims();
    let r = f.rank();
    let mut out = Tensor4::zeros([t, s, h, w]);
    for c in 0..r {
        let mut o = 0;
        for ti in 0..t {
            let a = f.u_t[(ti, c)];
            for si in 0..s {
                let b = a * f.u_s[(si, c)];
                for hi in 0..h {
                    let d = b * f.u_h[(hi, c)];
                    for wi in 0..w {
                        out.data[o] += d * f.u_w[(wi, c)];
                        o += 1;
                    }
                }
            }
        }
    }
    out
}

pub fn tucker2_reconstruct(f: &Tucker2Factors) -> Tensor4 {
    f.core
        .mode_product(2, &f.u_s)
        .and_then(|y| y.mode_product(1, &f.u_t))
        .expect("Tucker2Factors invariants guarantee conformable mode products")
}
