//! Link-level building blocks for data-dependent superimposed training (DDST):
//! frame construction, transmitter impairments, and the model-driven receiver
//! stages (LS/LMMSE channel estimation, ZF/MMSE equalization).

pub mod dsp;
pub mod error;
pub mod frame;
pub mod impairments;
pub mod link;
pub mod receiver;
pub mod rng;
pub mod rx;

pub use error::{DdstError, Result};
pub use num_complex::Complex64;
