//! Catalytic branching random walks on the integer lattice.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibrate;
pub mod engine;
pub mod error;
pub mod multi;
pub mod rng;
pub mod roots;
pub mod sampling;
pub mod spine;
pub mod stats;
pub mod walk;

pub use calibrate::{derive_params, CStarVariant, DerivedParams, ModelSpec, OffspringLaw};
pub use error::{CbrwError, Result};
pub use walk::StepLaw;
