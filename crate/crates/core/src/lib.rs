//! Activation-aware sparse dictionary compression of weight matrices.
//!
//! A weight matrix `W` (d1×d2) is approximated as `D_a · S`, where `D_a` is a
//! dense dictionary and `S` is column-sparse. The dictionary is learned with
//! K-SVD on whitened weights `L·W`, where `L` comes from calibration
//! activations `X`, so the fit minimizes the output error `‖XW − X D_a S‖_F`.

pub mod baselines;
pub mod codec;
pub mod error;
pub mod factorizer;
pub mod kernels;
pub mod linalg;
pub mod pipeline;
pub mod planner;
pub mod whitening;

pub use error::{Error, Result};
