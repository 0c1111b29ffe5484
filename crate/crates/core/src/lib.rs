//! Sparse linear dependencies among the logits of a classifier.
//!
//! A category `i` depends on others when its logit is, on the data, almost
//! exactly a sparse linear combination of theirs:
//! `f_i(x) ≈ Σ_{j≠i} θ_j f_j(x)`. Such relations are found by a lasso over
//! the uncentralized second-moment matrix `E[f fᵀ]` of the logits:
//!
//! ```text
//! minimize θᵀ·Cov·θ + λ‖θ‖₁   subject to θ_i = −1
//! ```
//!
//! The crate covers the whole pipeline: accumulating `Cov` from logits,
//! solving the lasso with certificates, screening and redundancy
//! diagnostics, applying a dependency to logits and measuring the effect,
//! and generating synthetic data with planted dependencies.
//!
//! ```
//! use ndep::{CovMatrixF64, LogitMatrixF64};
//! use ndep::covlasso::solve_dependency;
//!
//! // two identical categories
//! let logits = LogitMatrixF64::from_rows(&[vec![1.0, 1.0], vec![-2.0, -2.0]]).unwrap();
//! let cov = CovMatrixF64::from_logits(&logits).unwrap();
//! let dep = solve_dependency(&cov, 0, 1.0).unwrap();
//! assert!(dep.support.contains(&1));
//! ```
//!
//! All numeric types are generic over [`Scalar`] (implemented for `f32` and
//! `f64`); the `*F64` and `*F32` aliases below name the common choices.

pub mod analysis;
pub mod covariance;
pub mod covlasso;
pub mod error;
pub mod evaluation;
pub mod format;
pub mod linalg;
pub mod scalar;
pub mod synthetic;
pub mod testkit;

pub use covariance::{CovAccumulator, CovMatrix, LogitMatrix, ReducedProblem};
pub use covlasso::{DependencySolution, ReducedSolution};
pub use error::{Error, Result};
pub use linalg::{Eigendecomposition, SymmetricMatrix};
pub use scalar::Scalar;

pub type SymmetricMatrixF64 = SymmetricMatrix<f64>;
pub type SymmetricMatrixF32 = SymmetricMatrix<f32>;
pub type LogitMatrixF64 = LogitMatrix<f64>;
pub type LogitMatrixF32 = LogitMatrix<f32>;
pub type CovMatrixF64 = CovMatrix<f64>;
pub type CovMatrixF32 = CovMatrix<f32>;
pub type ReducedProblemF64 = ReducedProblem<f64>;
pub type ReducedProblemF32 = ReducedProblem<f32>;
pub type DependencySolutionF64 = DependencySolution<f64>;
pub type DependencySolutionF32 = DependencySolution<f32>;
