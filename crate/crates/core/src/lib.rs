//! Numerical tools for EPR steering of two-qubit states: a sufficient
//! criterion for unsteerability with an explicit local hidden state model,
//! a two-parameter family exhibiting one-way steering, and the related
//! joint measurability test for dichotomic qubit POVMs.

pub mod canonical_form;
pub mod convex_witness;
pub mod criterion;
pub mod error;
pub mod family;
pub mod io;
pub mod joint_measurability;
pub mod lhs_model;
pub mod qubit_algebra;
pub mod sphere;

pub use canonical_form::{canonicalize, CanonicalState, CanonicalizationRecord};
pub use convex_witness::{extract_sigma, strengthen, verify_decomposition, Decomposition};
pub use criterion::{evaluate_criterion, CriterionOptions, CriterionReport, MeasurementDirection, Method, Verdict};
pub use error::{Result, SteerError};
pub use family::{classify, povm_chsh_threshold, scan_grid, ClassificationRecord, FamilyParams, Region, ScanSpec};
pub use joint_measurability::{jm_family_sampler, jm_value, DichotomicQubitPovm, JmReport, JmVerdict, PovmFamily};
pub use lhs_model::{simulate_assemblage, CapResponse, LhsVerificationReport, MixedResponse};
pub use qubit_algebra::{EigPair, PauliForm, TwoQubitState, ValidityReport};
