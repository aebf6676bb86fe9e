//! Multi-class quantification under prior shift.
//!
//! Estimates the class proportions of unlabeled data by solving a
//! simplex-constrained regression `y = X pi + e`: the design matrix holds
//! per-class means of a feature transform estimated from labeled training
//! data (out-of-fold where a classifier is involved), the target holds the
//! same transform's mean over the unlabeled sample. Eight transforms (VA,
//! HDx, FM, AC, MS, Prob, MM, HDy) and three losses (least squares, least
//! absolute deviation, Hellinger divergence) cover the classical
//! quantification methods in one framework; estimated proportions can then
//! reweight classifier posteriors for better classification under shift.
//!
//! Modules:
//! - [`types`]: simplex vectors, datasets, probability matrices, systems
//! - [`solvers`]: the three constrained-regression solvers
//! - [`transforms`]: the transform catalog and system assembly
//! - [`classifier`]: built-in logistic regression + out-of-fold estimates
//! - [`quantifiers`]: the top-level `quantify` API and posterior adjustment
//! - [`evaluation`]: scenario generation, test materialization, scoring
//! - [`synth`]: synthetic Bernoulli benchmark data
//! - [`io`]: CSV/JSON file formats

pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod quantifiers;
pub mod solvers;
pub mod synth;
pub mod transforms;
pub mod types;

pub use error::{Error, Result};
pub use quantifiers::{adjust_posteriors, quantify, QuantMethod, QuantifierConfig};
pub use solvers::{binary_adjusted_count, project_to_simplex, Loss, SolverConfig};
pub use transforms::{Method, TransformSpec};
pub use types::{naive_estimate, Dataset, ProbabilityMatrix, ProportionVector};
