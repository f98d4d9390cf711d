//! Checks built from the spine formulas: many-to-one, many-to-two with a
//! coupled pair of walks, the single-walk martingale and the tail probes.

mod many_to_one;
mod martingale;
mod pair;
mod tails;

pub use many_to_one::{local_time_moment, many_to_one_check, LocalTimeWalkState};
pub use martingale::{delta_martingale_check, DeltaReport};
pub use pair::{
    coupled_pair_path, coupled_pair_step, decoupling_check, decoupling_product,
    occupation_pair_check, second_moment_check, CoupledPairState, DecouplingRow, OccupationPairRow,
    PairPath, SecondMomentReport,
};
pub use tails::{
    mogulskii_probe, q_identity_check, q_probe, MogulskiiReport, QIdentityReport, QProbe,
};

/// One line of `verify.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub name: String,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Relative difference for exact identities, `z` for statistical ones.
    pub diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerifyRow {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        lhs: f64,
        rhs: f64,
        diff: f64,
        tolerance: f64,
    ) -> Self {
        VerifyRow {
            name: name.into(),
            n,
            lhs,
            rhs,
            diff,
            tolerance,
            pass: diff <= tolerance,
        }
    }
}

/// `|a - b| / max(1, |a|)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}
