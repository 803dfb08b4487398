//! Maximization of λ₁·A within a conformal class on triangulated surfaces,
//! with certificates of extremality for the resulting density.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod certify;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod frame;
pub mod maximizer;
pub mod mesh;
pub mod reference;
pub mod sparse;

pub use error::{Error, Result};
