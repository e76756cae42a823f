//! Dense matrix primitives, a reverse-mode gradient tape, finite-difference
//! gradient verification, and the binary checkpoint container.
//!
//! Matrices are generic over the scalar via [`num_traits::Float`]; the tape
//! and everything above it run on `f64` (see [`crate::Matrix64`]).

mod checkpoint;
mod gradcheck;
mod matrix;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use tape::{NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {op} on {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    BadDataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
}
