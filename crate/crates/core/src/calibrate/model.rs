use crate::calibrate::offspring::OffspringLaw;
use crate::error::{CbrwError, Result};
use crate::walk::StepLaw;

/// A catalytic branching random walk: the walk, the catalyst sites with their
/// offspring laws, and the starting site of the single initial particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    walk: StepLaw,
    /// Sorted by site, sites distinct.
    catalysts: Vec<(i64, OffspringLaw)>,
    initial: i64,
}

impl ModelSpec {
    pub fn new(
        walk: StepLaw,
        mut catalysts: Vec<(i64, OffspringLaw)>,
        initial: i64,
    ) -> Result<Self> {
        if catalysts.is_empty() {
            return Err(CbrwError::InvalidModel("catalyst set is empty".into()));
        }
        for (_, law) in &catalysts {
            law.validate()?;
        }
        catalysts.sort_by_key(|(x, _)| *x);
        if catalysts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CbrwError::InvalidModel(
                "catalyst sites must be distinct".into(),
            ));
        }
        Ok(ModelSpec {
            walk,
            catalysts,
            initial,
        })
    }

    /// One catalyst at the origin, started there.
    pub fn single(walk: StepLaw, offspring: OffspringLaw) -> Result<Self> {
        ModelSpec::new(walk, vec![(0, offspring)], 0)
    }

    pub fn walk(&self) -> &StepLaw {
        &self.walk
    }

    pub fn catalysts(&self) -> &[(i64, OffspringLaw)] {
        &self.catalysts
    }

    pub fn catalyst_sites(&self) -> Vec<i64> {
        self.catalysts.iter().map(|(x, _)| *x).collect()
    }

    pub fn initial(&self) -> i64 {
        self.initial
    }

    pub fn with_initial(mut self, initial: i64) -> Self {
        self.initial = initial;
        self
    }

    pub fn offspring_at(&self, x: i64) -> Option<&OffspringLaw> {
        self.catalysts
            .binary_search_by_key(&x, |(c, _)| *c)
            .ok()
            .map(|i| &self.catalysts[i].1)
    }

    pub fn is_catalyst(&self, x: i64) -> bool {
        self.offspring_at(x).is_some()
    }

    pub fn is_single(&self) -> bool {
        self.catalysts.len() == 1
    }

    /// The catalyst site and law of a single-catalyst model.
    pub fn single_catalyst(&self) -> Result<(i64, &OffspringLaw)> {
        match self.catalysts.as_slice() {
            [(c, law)] => Ok((*c, law)),
            _ => Err(CbrwError::InvalidModel(format!(
                "operation needs exactly one catalyst, model has {}",
                self.catalysts.len()
            ))),
        }
    }

    /// `m(x)`: mean offspring at a catalyst, 1 elsewhere.
    pub fn m1(&self, x: i64) -> f64 {
        self.offspring_at(x).map_or(1.0, OffspringLaw::mean)
    }

    /// `E[N_x^2]` at a catalyst, 1 elsewhere.
    pub fn m2(&self, x: i64) -> f64 {
        self.offspring_at(x)
            .map_or(1.0, OffspringLaw::second_moment)
    }
}
