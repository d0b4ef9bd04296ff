//! Policy-iteration solver for whole-space elliptic HJB equations in an
//! exact atomic spectral Barron representation, with certified norm/error
//! ledgers, cosine two-layer network extraction, and Monte-Carlo SDE
//! verification of computed value functions.

pub mod error;
pub mod network;
pub mod policy;
pub mod problem;
pub mod rng;
pub mod sde;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use network::CosineNetwork;
pub use policy::PolicyIterationReport;
pub use problem::{ProblemSpec, ValidatedProblem};
pub use solver::LinearSolveResult;
pub use spectral::{FourierAtom, SpectralFunction};
