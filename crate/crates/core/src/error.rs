use thiserror::Error;

use crate::field::DistributionField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("collision basis is numerically singular at mode {mode} (relative residual {residual:.3e}); refine the velocity grid")]
    SingularBasis { mode: usize, residual: f64 },

    #[error("CFL violation: courant number {courant:.4} exceeds 1 (dt = {dt:.4e})")]
    Cfl { courant: f64, dt: f64 },

    #[error("non-finite value in field of order {order} at t = {time:.6}")]
    NonFinite {
        time: f64,
        order: usize,
        last_valid: Box<DistributionField>,
    },

    #[error("velocity transform leaves the grid: {0}")]
    OutOfRange(String),

    #[error("sensitivity of order {0} is not available")]
    MissingOrder(usize),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
