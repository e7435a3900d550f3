//! Random-intercept generalized linear mixed models for tall clustered data.
//!
//! Three ways of shrinking the problem are provided next to the full-data fit:
//!
//! - [`data::collapse`] + weighted likelihood: replicated rows become integer
//!   weights, which is exact when every model column is discrete.
//! - [`meta`]: per-cluster GLM fits pooled by fixed-effect, univariate or
//!   multivariate random-effects meta-analysis (REML or method of moments).
//! - [`subsample`]: sequential D-optimal subsampling, in its original
//!   whole-design form and a fractional variant.
//!
//! [`simulate`] generates data shaped like the two motivating case studies,
//! and [`cli`] ties everything into runnable commands.

pub mod cli;
pub mod data;
pub mod error;
pub mod family;
pub mod glm;
pub mod glmm;
pub mod linalg;
pub mod meta;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod simulate;
pub mod subsample;

pub use error::{Error, Result};
