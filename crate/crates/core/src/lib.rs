#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod collision;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod harness;
pub mod series;
pub mod sensitivity;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
