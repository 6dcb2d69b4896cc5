//! Low-entropy matrix toolkit.
//!
//! Encodes matrices as dense, CSR, CER (compressed entropy row) or CSER
//! (compressed shared elements row), runs instrumented dot-product kernels
//! over them and prices the resulting operation traces with tiered
//! energy/latency tables. Closed-form storage and energy estimates are
//! provided alongside the exact counters so that both can be compared.

pub mod costmodel;
pub mod error;
pub mod formats;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod pipeline;
pub mod precision;
pub mod quantize;
pub mod stats;
pub mod testing;

pub use error::{Error, Result};
pub use formats::{ArrayTag, CerMatrix, CserMatrix, CsrMatrix, Encoded, FormatKind, IndexWidth};
pub use matrix::{DenseMatrix, Vector};
