//! Multi-resolution Schauder construction of multivariate Gauss-Markov processes.
//!
//! A process `dX = alpha(t) X dt + sqrt(Gamma)(t) dW` on `[0, 1]` with `X_0 = 0` is expanded as
//! `X = sum psi_{n,k} Xi_{n,k}` over nested binary supports, with i.i.d. standard Gaussian
//! coefficients `Xi_{n,k}`. The crate builds the basis, synthesizes and refines paths, recovers
//! coefficients from paths, computes Dirichlet-optimal interpolants, finite-dimensional Girsanov
//! weights and first-passage times.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod error;
pub mod flow;
pub mod fpt;
pub mod girsanov;
pub mod interp;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod quadrature;
pub mod rng;
pub mod transforms;

pub use basis::{
    bridge_moments, build_element, Basis, BasisElement, BridgeMoments, DualFunctional,
};
pub use error::{GmsError, Result};
pub use flow::{FlowCache, FlowConfig};
pub use model::{ProcessModel, Specialization};
pub use partition::{NodeIndex, PartitionKind, Support, SupportTree};
