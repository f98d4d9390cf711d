//! Finite-support integer random walks: the log-MGF and its Legendre
//! transform, exponential tilting, exact lattice DPs and path simulation.

pub mod lattice;
mod law;
mod path;

pub use lattice::{period, return_time_pmf, ReturnTimePmf, SiteTable};
pub(crate) use law::gcd;
pub use law::StepLaw;
pub use path::{
    first_passage_samples, first_passage_time, simulate_path, PassageMode, PassageSample, WalkPath,
};
