//! Distribution-aware low-rank compression of convolution and linear layers.
//!
//! Kernels are approximated in the norm `‖unfold(K − K̃, 1) Σ^{1/2}‖_F`, where
//! `Σ` is the second moment of the layer's input patches. Under that norm the
//! approximation error equals the expected output error of the layer over the
//! observed input distribution.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod covariance;
pub mod decomp;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod rank;
pub mod tensor;

pub use covariance::{relative_recon_error, sigma_norm, Norm, SigmaAccumulator, SigmaRoot};
pub use error::{Error, Result};
pub use tensor::{cp_reconstruct, tucker2_reconstruct, CpFactors, Mat, Tensor4, Tucker2Factors};
