//! Models shared by the benchmarks.

use cbrw_core::{ModelSpec, OffspringLaw, StepLaw};

/// Lazy walk holding with probability 0.2, Poisson(2) offspring at the origin.
pub fn lazy_poisson2() -> ModelSpec {
    let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).expect("valid law");
    ModelSpec::single(law, OffspringLaw::Poisson(2.0)).expect("valid model")
}

/// Simple walk with `N` in {1, 2}, mean 1.83.
pub fn simple_183() -> ModelSpec {
    ModelSpec::single(
        StepLaw::simple(),
        OffspringLaw::Empirical(vec![0.0, 0.17, 0.83]),
    )
    .expect("valid model")
}

/// Lazy walk with Poisson(1.5) offspring at -1 and +1, started at -1.
pub fn two_catalysts() -> ModelSpec {
    let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).expect("valid law");
    let off = OffspringLaw::Poisson(1.5);
    ModelSpec::new(law, vec![(-1, off.clone()), (1, off)], -1).expect("valid model")
}
