//! Coded matrix products and fault-tolerant DNN training.
//!
//! The crate is layered bottom-up: dense matrices and block grids, the
//! Generalized PolyDot code, a real-number MDS decoder, a simulated cluster
//! with fault injection and a communication ledger, and a coded training
//! protocol built on top of them.

pub mod cluster;
pub mod code;
pub mod decoder;
pub mod dnn;
pub mod error;
pub mod linalg;
pub mod matrix;

pub use error::{Error, Result};
