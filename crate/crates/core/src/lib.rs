//! Bayes factors for genetic association across heterogeneous subgroups.

pub mod abf;
pub mod casecontrol;
pub mod cefn;
pub mod configbf;
pub mod engine;
pub mod error;
pub mod laplace;
pub mod oracle;
pub mod par;
pub mod priors;
pub mod quadrature;
pub mod record;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
