use rand::Rng;

use crate::calibrate::ModelSpec;
use crate::sampling::multinomial_into;

/// Below this many particles a site scatters particle by particle.
const PER_PARTICLE_LIMIT: u128 = 8;

/// Site-aggregated population: `counts[i]` particles at site `lo + i`.
///
/// The window is trimmed so both end cells are occupied; an empty
/// population has an empty window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationState {
    pub generation: u64,
    lo: i64,
    counts: Vec<u128>,
    total: u128,
}

impl PopulationState {
    /// One particle at `x0`, generation 0.
    pub fn single(x0: i64) -> Self {
        PopulationState {
            generation: 0,
            lo: x0,
            counts: vec![1],
            total: 1,
        }
    }

    pub fn from_sites(generation: u64, sites: &[(i64, u128)]) -> Self {
        let mut st = PopulationState {
            generation,
            lo: 0,
            counts: Vec::new(),
            total: 0,
        };
        let occupied: Vec<_> = sites.iter().filter(|(_, c)| *c > 0).collect();
        if let (Some(lo), Some(hi)) = (
            occupied.iter().map(|(x, _)| *x).min(),
            occupied.iter().map(|(x, _)| *x).max(),
        ) {
            st.lo = lo;
            st.counts = vec![0; (hi - lo + 1) as usize];
            for (x, c) in occupied {
                st.counts[(x - lo) as usize] += c;
                st.total += c;
            }
        }
        st
    }

    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count_at(&self, x: i64) -> u128 {
        if x < self.lo {
            return 0;
        }
        self.counts
            .get((x - self.lo) as usize)
            .copied()
            .unwrap_or(0)
    }

    /// `M_n`, or `None` for the empty population.
    pub fn max_site(&self) -> Option<i64> {
        (!self.is_empty()).then(|| self.lo + self.counts.len() as i64 - 1)
    }

    pub fn min_site(&self) -> Option<i64> {
        (!self.is_empty()).then_some(self.lo)
    }

    /// Occupied sites with their counts, in increasing site order.
    pub fn occupancy(&self) -> impl Iterator<Item = (i64, u128)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(i, c)| (self.lo + i as i64, *c))
    }

    /// Advances one generation in place: particles on catalysts are replaced
    /// by their offspring, then every particle takes one step.
    pub fn step<R: Rng + ?Sized>(&mut self, model: &ModelSpec, rng: &mut R) {
        self.generation += 1;
        if self.is_empty() {
            return;
        }
        let law = model.walk();
        let steps = law.steps();
        let probs = law.probs();
        let min = law.min_step();
        let new_lo = self.lo + min;
        let width = self.counts.len() + (law.max_step() - min) as usize;
        let mut next = vec![0u128; width];
        let mut split = vec![0u128; steps.len()];
        for (i, &k) in self.counts.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let x = self.lo + i as i64;
            let movers = match model.offspring_at(x) {
                Some(offspring) => offspring.sample_sum(k, rng),
                None => k,
            };
            if movers == 0 {
                continue;
            }
            let base = (x - new_lo) as usize;
            if movers <= PER_PARTICLE_LIMIT {
                for _ in 0..movers {
                    let s = law.sample(rng);
                    next[(base as i64 + s) as usize] += 1;
                }
            } else {
                multinomial_into(movers, probs, &mut split, rng);
                for (j, &c) in split.iter().enumerate() {
                    next[(base as i64 + steps[j]) as usize] += c;
                }
            }
        }
        let first = next.iter().position(|&c| c > 0);
        match first {
            None => {
                self.counts.clear();
                self.total = 0;
            }
            Some(first) => {
                let last = next.iter().rposition(|&c| c > 0).unwrap();
                self.lo = new_lo + first as i64;
                self.total = next[first..=last].iter().sum();
                next.truncate(last + 1);
                next.drain(..first);
                self.counts = next;
            }
        }
    }
}

/// Functional form of [`PopulationState::step`].
pub fn step_population<R: Rng + ?Sized>(
    state: &PopulationState,
    model: &ModelSpec,
    rng: &mut R,
) -> PopulationState {
    let mut next = state.clone();
    next.step(model, rng);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::OffspringLaw;
    use crate::rng::replica_rng;
    use crate::stats::MeanVar;
    use crate::walk::StepLaw;

    fn model(law: StepLaw, n: OffspringLaw) -> ModelSpec {
        ModelSpec::single(law, n).unwrap()
    }

    #[test]
    fn sterile_catalyst_empties_population() {
        let m = model(StepLaw::simple(), OffspringLaw::Deterministic(0));
        let next = step_population(&PopulationState::single(0), &m, &mut replica_rng(1, 0));
        assert!(next.is_empty());
        assert_eq!(next.total(), 0);
        assert_eq!(next.max_site(), None);
        assert_eq!(next.generation, 1);
    }

    #[test]
    fn binary_split_lands_on_neighbours() {
        let m = model(StepLaw::simple(), OffspringLaw::Deterministic(2));
        for seed in 0..50 {
            let next = step_population(&PopulationState::single(0), &m, &mut replica_rng(seed, 0));
            assert_eq!(next.total(), 2);
            assert!(next.occupancy().all(|(x, _)| x == -1 || x == 1));
        }
    }

    #[test]
    fn particles_are_conserved_off_catalysts() {
        let law = StepLaw::new(&[(-2, 0.3), (0, 0.2), (1, 0.5)]).unwrap();
        let m = model(law, OffspringLaw::Poisson(3.0));
        let mut rng = replica_rng(2, 0);
        for &k in &[1u128, 5, 9, 1000, 1 << 60, 1 << 100] {
            let st = PopulationState::from_sites(0, &[(5, k)]);
            let next = step_population(&st, &m, &mut rng);
            assert_eq!(next.total(), k);
            let st = PopulationState::from_sites(0, &[(5, k), (9, 3)]);
            assert_eq!(step_population(&st, &m, &mut rng).total(), k + 3);
        }
    }

    #[test]
    fn one_step_mean_matches_expectation() {
        // from a catalyst with k particles: E[count at x + s] = k m p(s)
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        let m = model(law.clone(), OffspringLaw::Poisson(2.0));
        let mut rng = replica_rng(3, 0);
        let mut at: Vec<MeanVar> = (0..3).map(|_| MeanVar::new()).collect();
        let st = PopulationState::from_sites(0, &[(0, 3)]);
        for _ in 0..20_000 {
            let next = step_population(&st, &m, &mut rng);
            for (i, x) in [-1i64, 0, 1].iter().enumerate() {
                at[i].push(next.count_at(*x) as f64);
            }
        }
        for (i, x) in [-1i64, 0, 1].iter().enumerate() {
            let target = 3.0 * 2.0 * law.prob(*x);
            assert!(at[i].estimate().z_against_value(target).abs() < 4.0);
        }
    }

    #[test]
    fn window_is_trimmed() {
        let st = PopulationState::from_sites(0, &[(-3, 0), (2, 4), (7, 1)]);
        assert_eq!(st.min_site(), Some(2));
        assert_eq!(st.max_site(), Some(7));
        assert_eq!(st.occupancy().collect::<Vec<_>>(), vec![(2, 4), (7, 1)]);
    }
}
