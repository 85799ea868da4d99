//! Regularized solvers for discrete ill-posed problems in general form,
//! `min ‖A x − b‖` with a regularization matrix `L`, built on the joint
//! bidiagonalization of `{A, L}`.

pub mod bidiag;
pub mod cli;
pub mod error;
pub mod gsvd_oracle;
pub mod hybrid;
pub mod io;
pub mod jbd;
pub mod jbdqr;
pub mod linop;
pub mod param_choice;
pub mod lsqr;
pub mod problems;
pub mod projected_ls;
pub mod reference;
pub mod vecops;

pub use error::{Error, Result};
pub use linop::{DenseMatrix, LinearMap};
