//! Weak and standard optimal transport, Hopf-Lax semigroups, Orlicz dual norms
//! and convex Poincaré constants for finitely supported measures on R^n.

pub mod cli;
pub mod constants;
pub mod costs;
pub mod error;
pub mod hopflax;
pub mod inequalities;
pub mod measures;
mod numeric;
pub mod report;
pub mod transport;

pub use costs::{CostFunction, CostKind};
pub use error::{Error, Result};
pub use hopflax::{ConvexFunction, MaxAffineFunction};
pub use measures::DiscreteMeasure;
pub use report::VerificationReport;
