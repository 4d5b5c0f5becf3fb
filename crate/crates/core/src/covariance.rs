//! Input-patch second moments, their square roots, and the distribution-aware
//! ("Sigma") norm `‖unfold(K − K̃, 1) · Σ^{1/2}‖_F`.

use crate::error::{Error, Result};
use crate::linalg::{sym_sqrt, SqrtMethod, SymSolveConfig};
use crate::tensor::{unfold_mode, Mat, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by the number of accumulated patch columns.
    #[default]
    Mean,
    Sum,
}

/// Running `Σ u uᵀ` over patch columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaAccumulator {
    dim: usize,
    sum: Mat,
    count: u64,
}

impl SigmaAccumulator {
    pub fn new(dim: usize) -> Self {
        SigmaAccumulator {
            dim,
            sum: Mat::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum_matrix(&self) -> &Mat {
        &self.sum
    }

    /// Add every column of a `dim x n` patch matrix.
    pub fn add_patches(&mut self, patches: &Mat) -> Result<()> {
        if patches.nrows() != self.dim {
            return Err(Error::shape(format!(
                "patch rows {} differ from accumulator dim {}",
                patches.nrows(),
                self.dim
            )));
        }
        if patches.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("patch matrix"));
        }
        self.sum += patches * patches.transpose();
        // mirror so the result is exactly symmetric
        for j in 0..self.dim {
            for i in 0..j {
                self.sum[(i, j)] = self.sum[(j, i)];
            }
        }
        self.count += patches.ncols() as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &SigmaAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::shape(format!(
                "cannot merge accumulators of dim {} and {}",
                self.dim, other.dim
            )));
        }
        self.sum += &other.sum;
        self.count += other.count;
        Ok(())
    }

    pub fn finalize(&self, normalization: Normalization) -> Result<Mat> {
        match normalization {
            Normalization::Sum => Ok(self.sum.clone()),
            Normalization::Mean => {
                if self.count == 0 {
                    return Err(Error::Invalid("no patches accumulated".into()));
                }
                Ok(&self.sum / self.count as f64)
            }
        }
    }
}

/// Accumulate `Σ u uᵀ` over a stream of patch matrices sharing one row dimension.
pub fn estimate_sigma<'a, I>(patches: I) -> Result<SigmaAccumulator>
where
    I: IntoIterator<Item = &'a Mat>,
{
    let mut iter = patches.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Invalid("no patch matrices given".into()))?;
    let mut acc = SigmaAccumulator::new(first.nrows());
    acc.add_patches(first)?;
    for p in iter {
        acc.add_patches(p)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub source: String,
    pub samples: u64,
}

/// A factor `L` with `L Lᵀ = Σ + ε I`.
#[derive(Debug, Clone)]
pub struct SigmaRoot {
    factor: Mat,
    epsilon: f64,
    lower_triangular: bool,
    pub provenance: Option<Provenance>,
}

impl SigmaRoot {
    pub fn from_sigma(sigma: &Mat, cfg: &SymSolveConfig, method: SqrtMethod) -> Result<Self> {
        let sq = sym_sqrt(sigma, cfg, method)?;
        Ok(SigmaRoot {
            factor: sq.factor,
            epsilon: sq.epsilon,
            lower_triangular: sq.lower_triangular,
            provenance: None,
        })
    }

    /// Cholesky first, the eigen route if Cholesky breaks down.
    pub fn from_sigma_auto(sigma: &Mat, cfg: &SymSolveConfig) -> Result<Self> {
        match Self::from_sigma(sigma, cfg, SqrtMethod::Cholesky) {
            Err(Error::CholeskyBreakdown) => Self::from_sigma(sigma, cfg, SqrtMethod::Svd),
            other => other,
        }
    }

    /// Wrap an existing factor; it is used as given.
    pub fn from_factor(factor: Mat) -> Result<Self> {
        if factor.nrows() != factor.ncols() {
            return Err(Error::NotSquare {
                rows: factor.nrows(),
                cols: factor.ncols(),
            });
        }
        let lower_triangular = (0..factor.ncols()).all(|j| (0..j).all(|i| factor[(i, j)] == 0.0));
        Ok(SigmaRoot {
            factor,
            epsilon: 0.0,
            lower_triangular,
            provenance: None,
        })
    }

    pub fn identity(dim: usize) -> Self {
        SigmaRoot {
            factor: Mat::identity(dim, dim),
            epsilon: 0.0,
            lower_triangular: true,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, source: impl Into<String>, samples: u64) -> Self {
        self.provenance = Some(Provenance {
            source: source.into(),
            samples,
        });
        self
    }

    pub fn factor(&self) -> &Mat {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.lower_triangular
    }

    /// `L Lᵀ`, the (regularized) second-moment matrix this root represents.
    pub fn sigma(&self) -> Mat {
        &self.factor * self.factor.transpose()
    }

    pub(crate) fn check_kernel(&self, dims: [usize; 4]) -> Result<()> {
        let d = dims[1] * dims[2] * dims[3];
        if d != self.dim() {
            return Err(Error::shape(format!(
                "Sigma root has dim {} but kernel {dims:?} needs S*H*W = {d}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `‖unfold(K − K̃, 1) L‖_F`.
pub fn sigma_norm(k: &Tensor4, k_tilde: &Tensor4, root: &SigmaRoot) -> Result<f64> {
    root.check_kernel(k.dims())?;
    let diff = k.sub(k_tilde)?;
    Ok((unfold_mode(&diff, 1)? * root.factor()).norm())
}

/// `‖unfold(K, 1) L‖_F`.
pub fn sigma_norm_of(k: &Tensor4, root: &SigmaRoot) -> Result<f64> {
    root.check_kernel(k.dims())?;
    Ok((unfold_mode(k, 1)? * root.factor()).norm())
}

#[derive(Debug, Clone, Copy)]
pub enum Norm<'a> {
    Frobenius,
    Sigma(&'a SigmaRoot),
}

/// `‖K − K̃‖ / ‖K‖` in the requested norm.
pub fn relative_recon_error(k: &Tensor4, k_tilde: &Tensor4, norm: Norm<'_>) -> Result<f64> {
    let (num, den) = match norm {
        Norm::Frobenius => (k.sub(k_tilde)?.frobenius_norm(), k.frobenius_norm()),
        Norm::Sigma(root) => (sigma_norm(k, k_tilde, root)?, sigma_norm_of(k, root)?),
    };
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::{conv_direct, im2col, ConvSpec, Image};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
        Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    fn exact_cfg() -> SymSolveConfig {
        SymSolveConfig {
            epsilon_scale: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_unit_patch() {
        let mut e1 = Mat::zeros(3, 1);
        e1[0] = 1.0;
        let acc = estimate_sigma([&e1]).unwrap();
        assert_eq!(acc.count(), 1);
        assert_eq!(
            acc.finalize(Normalization::Mean).unwrap(),
            &e1 * e1.transpose()
        );
    }

    #[test]
    fn identity_patches() {
        let id = Mat::identity(4, 4);
        let acc = estimate_sigma([&id]).unwrap();
        assert_eq!(
            acc.finalize(Normalization::Mean).unwrap(),
            Mat::identity(4, 4) / 4.0
        );
        assert_eq!(
            acc.finalize(Normalization::Sum).unwrap(),
            Mat::identity(4, 4)
        );
    }

    #[test]
    fn split_accumulation_merges_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = Mat::from_fn(5, 40, |_, _| rng.random_range(-1.0..1.0));
        let single = estimate_sigma([&all]).unwrap();
        // oracle: explicit sum of outer products
        let mut oracle = Mat::zeros(5, 5);
        for c in 0..40 {
            let u = all.column(c);
            oracle += u * u.transpose();
        }
        assert!((single.sum_matrix() - &oracle).amax() < 1e-12);

        let a = all.columns(0, 17).into_owned();
        let b = all.columns(17, 23).into_owned();
        let mut left = estimate_sigma([&a]).unwrap();
        let right = estimate_sigma([&b]).unwrap();
        let mut other_order = right.clone();
        left.merge(&right).unwrap();
        other_order.merge(&estimate_sigma([&a]).unwrap()).unwrap();
        assert_eq!(left.count(), 40);
        assert!((left.sum_matrix() - single.sum_matrix()).amax() < 1e-12);
        assert!((left.sum_matrix() - other_order.sum_matrix()).amax() < 1e-12);
    }

    #[test]
    fn accumulator_errors() {
        let mut acc = SigmaAccumulator::new(3);
        assert!(acc.add_patches(&Mat::zeros(2, 4)).is_err());
        assert!(acc.merge(&SigmaAccumulator::new(2)).is_err());
        assert!(acc.finalize(Normalization::Mean).is_err());
        let no_patches: [&Mat; 0] = [];
        assert!(estimate_sigma(no_patches).is_err());
        assert!(estimate_sigma([&Mat::zeros(2, 1), &Mat::zeros(3, 1)]).is_err());
    }

    #[test]
    fn sigma_norm_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = rand_tensor(&mut rng, [3, 2, 2, 2]);
        let kt = rand_tensor(&mut rng, [3, 2, 2, 2]);
        let id = SigmaRoot::identity(8);
        assert_eq!(sigma_norm(&k, &k, &id).unwrap(), 0.0);
        let frob = k.sub(&kt).unwrap().frobenius_norm();
        assert!((sigma_norm(&k, &kt, &id).unwrap() - frob).abs() < 1e-14);
        assert!(sigma_norm(&k, &kt, &SigmaRoot::identity(7)).is_err());
    }

    #[test]
    fn relative_error_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = rand_tensor(&mut rng, [2, 2, 1, 3]);
        let zero = Tensor4::zeros(k.dims());
        let a = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let root = SigmaRoot::from_factor(a).unwrap();
        for norm in [Norm::Frobenius, Norm::Sigma(&root)] {
            assert_eq!(relative_recon_error(&k, &k, norm).unwrap(), 0.0);
            assert!((relative_recon_error(&k, &zero, norm).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(
            relative_recon_error(&zero, &k, Norm::Frobenius),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn sigma_norm_equals_empirical_functional_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = [3, 2, 3, 3];
        let spec = ConvSpec::valid(dims);
        let k = rand_tensor(&mut rng, dims);
        let kt = rand_tensor(&mut rng, dims);
        let mut acc = SigmaAccumulator::new(18);
        let mut sq = 0.0;
        let mut positions = 0usize;
        for _ in 0..200 {
            let x = Image::new(
                2,
                8,
                8,
                (0..128).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            acc.add_patches(&im2col(&x, &spec).unwrap()).unwrap();
            let y = conv_direct(&k, &x, &spec).unwrap();
            let yt = conv_direct(&kt, &x, &spec).unwrap();
            sq += y
                .data()
                .iter()
                .zip(yt.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            positions += y.height() * y.width();
        }
        let empirical = (sq / positions as f64).sqrt();
        let sigma = acc.finalize(Normalization::Mean).unwrap();
        let root = SigmaRoot::from_sigma(&sigma, &exact_cfg(), SqrtMethod::Cholesky).unwrap();
        let ours = sigma_norm(&k, &kt, &root).unwrap();
        assert!((ours - empirical).abs() / empirical < 1e-6);
    }

    #[test]
    fn sigma_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Mat::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let sigma = estimate_sigma([&p])
            .unwrap()
            .finalize(Normalization::Mean)
            .unwrap();
        let eig = sigma.clone().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * sigma.norm());
        assert_eq!(sigma, sigma.transpose());
        // rank deficient: Cholesky without ridge fails, auto falls back
        let root = SigmaRoot::from_sigma_auto(&sigma, &exact_cfg()).unwrap();
        assert!(!root.is_lower_triangular());
        assert!((root.sigma() - &sigma).amax() < 1e-12);
    }
}
