//! High-order ADER discontinuous Galerkin solver with a-posteriori subcell
//! finite-volume limiting on cell-by-cell adaptive Cartesian meshes.

pub mod amr;
pub mod basis;
pub mod config;
pub mod corrector;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod limiter;
pub mod output;
pub mod pde;
pub mod predictor;
pub mod scenarios;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
