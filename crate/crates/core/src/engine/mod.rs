//! Forward simulation of the branching population and its exact first moments.

pub mod ensemble;
pub mod expectation;
pub mod fluctuation;
pub mod run;
pub mod state;

pub use ensemble::{ensemble, par_replicas, summarize, Ensemble, EnsembleSummary, GenSummary};
pub use expectation::{expectation_dp, occupation_profile_check, ExpectationTable, ProfileFit};
pub use fluctuation::{
    floor_frac, fluctuation_experiment, select_subsequence, subsequence_pmf_table, tail_samples,
    FluctuationReport, LambdaHorizon, PmfTable, TailRow, TailSetup, UniformBound, VariantVerdict,
};
pub use run::{
    run, simulate, survival_window, Caps, GenObservation, LambdaWeights, RunOutcome, RunRecord,
};
pub use state::{step_population, PopulationState};
