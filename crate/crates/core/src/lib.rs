//! Pilot experimental designs for generalized linear models.
//!
//! The crate generates space-filling designs on the unit cube and their
//! uniform-scaled or arcsine-inverse-transformed versions on `[-1,1]^d`,
//! evaluates their kernel discrepancy against uniform and arcsine targets in
//! closed form, computes GLM Fisher-information efficiencies against locally
//! L-optimal designs solved over a candidate set, and verifies a
//! discrepancy-based efficiency lower bound through its spectral-radius form.
//!
//! Modules map onto the pipeline:
//!
//! - [`model`]: designs, model specifications, target distributions
//! - [`discrepancy`]: reproducing kernel and closed-form / Monte-Carlo
//!   discrepancies
//! - [`generator`]: scrambled Sobol, Latin hypercube, and random families
//! - [`glm`]: GLM weights, information matrices, tensor quadrature
//! - [`solver`]: L-optimal design weights with equivalence certificates and
//!   efficiency evaluation
//! - [`bound`]: the efficiency lower-bound check
//! - [`study`]: reproducible benchmark studies over design families and
//!   coefficient spaces, with CSV/JSON reporting

pub mod bound;
pub mod discrepancy;
pub mod error;
pub mod generator;
pub mod glm;
pub(crate) mod linalg;
pub mod model;
pub mod seeding;
pub mod solver;
pub mod study;

pub use error::{Error, Result};
pub use model::{
    basis_eval, linear_predictor, unit_cube_to_design, Design, Link, ModelSpec,
    TargetDistribution, TargetKind,
};
