//! Parametrix construction of fundamental solutions for `w_t − k(x,t)w_xx + γw`
//! in one space dimension, with a Duhamel solver for rough forcing.

pub mod coeffs;
pub mod data;
pub mod duhamel;
pub mod error;
pub mod kernel;
pub mod mollify;
pub mod norms;
pub mod parametrix;
pub mod quadrature;
pub mod reference;
pub mod table;

pub use error::{Error, Result};
