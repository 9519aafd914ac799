//! Forward and backward kernels over flat slices. The [`crate::Tape`] wires
//! them together; they are public so they can be tested and reused directly.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod linalg;
pub mod loss;
pub mod norm;
pub mod pool;
