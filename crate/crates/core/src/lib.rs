//! Kronecker-product-sum approximation of image blur operators and split
//! Bregman total-variation deblurring driven by that approximation.
//!
//! Pipeline: [`blurmodel`] builds `A` and the data, [`rearrange`] forms
//! `R(A)`, [`lowrank`] computes its truncated SVD, [`kronop`] turns the
//! factors into `Ã_k`, and [`splitbregman`] restores the image with
//! [`cgls`] on the system from [`regularizers`].

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blurmodel;
pub mod cgls;
pub mod error;
pub mod io;
pub mod kronop;
pub mod lowrank;
pub mod metrics;
pub mod rearrange;
pub mod regularizers;
pub mod splitbregman;
pub mod tensorla;

pub use error::{Error, ErrorClass, Result};
