//! Robust singular value decomposition by minimum density power divergence.
//!
//! The estimator fits `X ~ sum_k lambda_k u_k v_k^T + E` one rank-one layer at
//! a time. Each layer is obtained by an alternating weighted regression where
//! every cell carries the weight `exp(-alpha (x_ij - a_i b_j)^2 / (2 sigma^2))`:
//! cells that sit far from the current fit contribute less, so gross outliers
//! do not drag the factors around. `alpha = 0` recovers the classical SVD;
//! larger `alpha` buys robustness at some efficiency cost.
//!
//! On top of the decomposition the crate provides tuning-parameter selection
//! (`select`), video background/foreground modelling (`video`, `pgm`) and an
//! evaluation harness with synthetic data generators (`eval`).

pub mod dpd;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod pgm;
pub mod select;
pub mod svd;
pub mod video;

pub use error::{Error, Result};
pub use matrix::DataMatrix;
pub use svd::{rank_one_dpd, rsvd_dpd, RSvdConfig, RSvdModel, SvdTriple};
