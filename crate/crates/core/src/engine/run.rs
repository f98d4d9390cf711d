use rand::Rng;

use crate::calibrate::ModelSpec;
use crate::engine::state::PopulationState;
use crate::walk::SiteTable;

/// Population cap; see the workspace README for why it is far above `1e8`.
pub const DEFAULT_POPULATION_CAP: u128 = 1_000_000_000_000_000_000_000_000_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// A run stops, flagged as truncated, once the population exceeds this.
    pub population: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            population: DEFAULT_POPULATION_CAP,
        }
    }
}

/// `phi` tabulated on every site a run can reach, for
/// `Lambda_n = exp(-r n) sum_x phi(x) eta_n(x)`.
#[derive(Debug, Clone)]
pub struct LambdaWeights {
    pub r: f64,
    pub table: SiteTable,
}

impl LambdaWeights {
    pub fn new(r: f64, lo: i64, hi: i64, phi: impl Fn(i64) -> f64) -> Self {
        LambdaWeights {
            r,
            table: SiteTable {
                lo,
                values: (lo..=hi).map(phi).collect(),
            },
        }
    }

    /// Covers every site reachable from the model's start in `n_max` steps.
    pub fn for_model(model: &ModelSpec, r: f64, n_max: usize, phi: impl Fn(i64) -> f64) -> Self {
        let law = model.walk();
        let x0 = model.initial();
        let n = n_max as i64;
        LambdaWeights::new(r, x0 + n * law.min_step(), x0 + n * law.max_step(), phi)
    }

    pub fn phi(&self, x: i64) -> f64 {
        self.table.get(x)
    }

    pub fn lambda(&self, state: &PopulationState) -> f64 {
        let sum: f64 = state
            .occupancy()
            .map(|(x, c)| self.table.get(x) * c as f64)
            .sum();
        (-self.r * state.generation as f64).exp() * sum
    }

    /// `max_x exp(-r n) phi(x) eta_n(x)`.
    pub fn peak(&self, state: &PopulationState) -> f64 {
        let peak = state
            .occupancy()
            .map(|(x, c)| self.table.get(x) * c as f64)
            .fold(0.0, f64::max);
        (-self.r * state.generation as f64).exp() * peak
    }
}

/// What an observer sees after each generation (including generation 0).
#[derive(Debug)]
pub struct GenObservation<'a> {
    pub n: u64,
    pub state: &'a PopulationState,
    /// Counts at the catalysts, in catalyst order.
    pub eta: &'a [u128],
    pub lambda: Option<f64>,
}

impl GenObservation<'_> {
    pub fn max(&self) -> Option<i64> {
        self.state.max_site()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    /// Finite-horizon survival proxy: some catalyst occupied in the final
    /// window, or the run hit the population cap.
    pub survived: bool,
    pub truncated_at: Option<u64>,
}

/// Final-window length `max(20, n_max / 10)`.
pub fn survival_window(n_max: usize) -> usize {
    20.max(n_max / 10)
}

/// Runs one replica from a single particle at the model's initial site,
/// calling `observe` after every generation `0..=n_max` that is simulated.
pub fn simulate<R: Rng + ?Sized, F: FnMut(&GenObservation)>(
    model: &ModelSpec,
    n_max: usize,
    weights: Option<&LambdaWeights>,
    caps: Caps,
    rng: &mut R,
    mut observe: F,
) -> RunOutcome {
    let sites = model.catalyst_sites();
    let window_start = n_max.saturating_sub(survival_window(n_max)) as u64;
    let mut state = PopulationState::single(model.initial());
    let mut eta = vec![0u128; sites.len()];
    let mut catalyst_seen = false;
    let mut truncated_at = None;
    loop {
        for (e, &c) in eta.iter_mut().zip(&sites) {
            *e = state.count_at(c);
        }
        let n = state.generation;
        if n >= window_start && eta.iter().any(|&e| e > 0) {
            catalyst_seen = true;
        }
        observe(&GenObservation {
            n,
            state: &state,
            eta: &eta,
            lambda: weights.map(|w| w.lambda(&state)),
        });
        if n as usize >= n_max || state.is_empty() {
            break;
        }
        if state.total() > caps.population {
            truncated_at = Some(n);
            break;
        }
        state.step(model, rng);
    }
    RunOutcome {
        survived: catalyst_seen || truncated_at.is_some(),
        truncated_at,
    }
}

/// Per-generation record of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub replica: u64,
    pub seed: u64,
    /// `M_n`; `None` is `sup of the empty set`, i.e. negative infinity.
    pub max: Vec<Option<i64>>,
    /// `eta_n` at each catalyst, flattened generation-major.
    pub eta: Vec<u128>,
    pub n_catalysts: usize,
    pub lambda: Option<Vec<f64>>,
    pub total: Vec<u128>,
    pub survived: bool,
    pub truncated_at: Option<u64>,
}

impl RunRecord {
    /// Generations covered, `0..=last`. Generations after extinction are
    /// filled in as empty.
    pub fn len(&self) -> usize {
        self.max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max.is_empty()
    }

    pub fn eta_at(&self, n: usize, catalyst: usize) -> u128 {
        self.eta[n * self.n_catalysts + catalyst]
    }

    pub fn lambda_at(&self, n: usize) -> Option<f64> {
        self.lambda.as_ref().and_then(|l| l.get(n).copied())
    }
}

/// One replica with the full per-generation record. After extinction the
/// remaining generations are recorded as empty (`M_n = None`, `Lambda_n = 0`);
/// after truncation they are absent.
pub fn run<R: Rng + ?Sized>(
    model: &ModelSpec,
    n_max: usize,
    weights: Option<&LambdaWeights>,
    caps: Caps,
    rng: &mut R,
) -> RunRecord {
    let k = model.catalysts().len();
    let mut rec = RunRecord {
        replica: 0,
        seed: 0,
        max: Vec::with_capacity(n_max + 1),
        eta: Vec::with_capacity((n_max + 1) * k),
        n_catalysts: k,
        lambda: weights.map(|_| Vec::with_capacity(n_max + 1)),
        total: Vec::with_capacity(n_max + 1),
        survived: false,
        truncated_at: None,
    };
    let outcome = simulate(model, n_max, weights, caps, rng, |obs| {
        rec.max.push(obs.max());
        rec.eta.extend_from_slice(obs.eta);
        if let (Some(l), Some(v)) = (rec.lambda.as_mut(), obs.lambda) {
            l.push(v);
        }
        rec.total.push(obs.state.total());
    });
    if outcome.truncated_at.is_none() {
        while rec.max.len() <= n_max {
            rec.max.push(None);
            rec.eta.extend(std::iter::repeat_n(0, k));
            if let Some(l) = rec.lambda.as_mut() {
                l.push(0.0);
            }
            rec.total.push(0);
        }
    }
    rec.survived = outcome.survived;
    rec.truncated_at = outcome.truncated_at;
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{OffspringLaw, Phi};
    use crate::rng::replica_rng;
    use crate::walk::StepLaw;

    fn lazy_model() -> ModelSpec {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        ModelSpec::single(law, OffspringLaw::Poisson(2.0)).unwrap()
    }

    #[test]
    fn lambda_starts_at_one() {
        let model = lazy_model();
        let r = 1.2f64.ln();
        let phi = Phi::for_model(&model, r).unwrap();
        let w = LambdaWeights::for_model(&model, r, 30, |x| phi.eval(x));
        let rec = run(
            &model,
            30,
            Some(&w),
            Caps::default(),
            &mut replica_rng(5, 0),
        );
        assert_eq!(rec.lambda_at(0), Some(1.0));
        assert_eq!(rec.len(), 31);
        assert!(rec.lambda.as_ref().unwrap().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn sterile_run_dies_at_once() {
        let model = ModelSpec::single(StepLaw::simple(), OffspringLaw::Deterministic(0)).unwrap();
        let rec = run(&model, 50, None, Caps::default(), &mut replica_rng(6, 0));
        assert_eq!(rec.max[0], Some(0));
        assert_eq!(rec.max[1], None);
        assert!(!rec.survived);
        assert_eq!(rec.len(), 51);
        assert!(rec.total[1..].iter().all(|&t| t == 0));
    }

    #[test]
    fn max_is_none_iff_empty() {
        let model = lazy_model();
        for seed in 0..20 {
            let rec = run(&model, 60, None, Caps::default(), &mut replica_rng(seed, 0));
            for (m, t) in rec.max.iter().zip(&rec.total) {
                assert_eq!(m.is_none(), *t == 0);
            }
        }
    }

    #[test]
    fn cap_truncates_without_panicking() {
        let model = lazy_model();
        let caps = Caps { population: 1000 };
        let mut truncated = 0;
        for seed in 0..20 {
            let rec = run(&model, 200, None, caps, &mut replica_rng(seed, 1));
            if let Some(n) = rec.truncated_at {
                truncated += 1;
                assert!(rec.survived);
                assert_eq!(rec.len() as u64, n + 1);
                assert!(*rec.total.last().unwrap() > 1000);
            }
        }
        assert!(truncated > 0);
    }

    #[test]
    fn survival_window_length() {
        assert_eq!(survival_window(100), 20);
        assert_eq!(survival_window(400), 40);
    }
}
