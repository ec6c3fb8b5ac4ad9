//! Unambiguous discrimination of bipartite two-state ensembles: state
//! construction, measurement synthesis, protocol evaluation, closed-form
//! optima, Monte-Carlo sampling and numeric verification.

pub mod analysis;
pub mod closedform;
pub mod ensembles;
pub mod error;
pub mod linalg;
pub mod measurements;
pub mod montecarlo;
pub mod protocols;
pub mod quantum;

pub use error::{Error, Result};
