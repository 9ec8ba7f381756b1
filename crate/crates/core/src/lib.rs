//! Class-wide machine unlearning by linear filtration of a classifier's
//! logit layer, plus the tooling to evaluate it: shadow-model attacks,
//! random-direction Kolmogorov–Smirnov statistics, label-change audits and
//! model inversion.

pub mod attack_eval;
pub mod data;
pub mod error;
pub mod filtration;
pub mod inversion;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
