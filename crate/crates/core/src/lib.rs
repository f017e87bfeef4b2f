//! Numerical continuation of positive and negative solutions of
//! `−dΔu = λ⟨a,∇u⟩ + u + λu² − u^q` on an interval with Dirichlet conditions.

pub mod continuation;
pub mod diagram;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod pencil;
pub mod problem;
pub mod reduction;

pub use error::{Error, Result};
