//! Fell bundles over finite inverse semigroups and finite étale groupoids,
//! modeled concretely inside one matrix algebra.

pub mod absorption;
pub mod action;
pub mod analysis;
pub mod ap;
pub mod bundle;
pub mod concrete;
pub mod corpus;
pub mod cross_sectional;
pub mod envelope;
pub mod error;
pub mod linalg;
pub mod par;
pub mod report;
pub mod semigroup;

pub use error::{FellError, Result};
