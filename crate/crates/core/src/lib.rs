//! Global counterfactual explanations for black-box tabular classifiers.
//!
//! The pipeline builds two-level recourse sets (Outer-If / Inner-If / Then rules) in
//! three stages: ground set generation ([`ground_set`]), ground set evaluation
//! ([`evaluation`]) and constrained local-search selection ([`optimizer`]).
//! [`pipeline`] runs all three end to end.

pub mod apriori;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fixture;
pub mod ground_set;
pub mod itemset;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod schema;

pub use error::{Error, Result};
