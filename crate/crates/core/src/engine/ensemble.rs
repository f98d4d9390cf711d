use rayon::prelude::*;

use crate::calibrate::ModelSpec;
use crate::engine::run::{run, Caps, LambdaWeights, RunRecord};
use crate::rng::{replica_rng, SimRng};
use crate::stats::{proportion, quantile_sorted, Estimate, MeanVar};

/// Maps `f` over replicas `0..replicas` on a pool of `threads` workers.
/// Replica `i` always gets the stream `(base_seed, i)` and results come back
/// in replica order, so the output does not depend on `threads`.
pub fn par_replicas<T, F>(replicas: usize, base_seed: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..replicas as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = replica_rng(base_seed, i);
                f(i, &mut rng)
            })
            .collect()
    })
}

/// Cross-replica aggregates at one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub n: usize,
    /// Replicas with a record at this generation (truncated runs drop out).
    pub recorded: usize,
    /// Survivors (by the run's survival proxy) with a finite `M_n`.
    pub survivors: usize,
    pub m_mean: f64,
    pub m_median: f64,
    pub m_q10: f64,
    pub m_q90: f64,
    pub lambda: Option<Estimate>,
    pub lambda_sq: Option<Estimate>,
    /// `eta_n` at the first catalyst over all recorded replicas.
    pub eta0: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub replicas: usize,
    pub n_max: usize,
    pub survival: Estimate,
    pub truncated: usize,
    pub per_n: Vec<GenSummary>,
}

pub fn summarize(records: &[RunRecord], n_max: usize) -> EnsembleSummary {
    let survived = records.iter().filter(|r| r.survived).count();
    let mut per_n = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let at_n: Vec<&RunRecord> = records.iter().filter(|r| r.len() > n).collect();
        let mut maxima: Vec<f64> = at_n
            .iter()
            .filter(|r| r.survived)
            .filter_map(|r| r.max[n])
            .map(|m| m as f64)
            .collect();
        maxima.sort_by(f64::total_cmp);
        let m_mean = if maxima.is_empty() {
            f64::NAN
        } else {
            maxima.iter().copied().collect::<MeanVar>().mean()
        };
        let lambda: Option<MeanVar> = at_n
            .iter()
            .map(|r| r.lambda_at(n))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().collect());
        let lambda_sq: Option<MeanVar> = at_n
            .iter()
            .map(|r| r.lambda_at(n).map(|l| l * l))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().collect());
        let eta0: MeanVar = at_n.iter().map(|r| r.eta_at(n, 0) as f64).collect();
        per_n.push(GenSummary {
            n,
            recorded: at_n.len(),
            survivors: maxima.len(),
            m_mean,
            m_median: quantile_sorted(&maxima, 0.5),
            m_q10: quantile_sorted(&maxima, 0.1),
            m_q90: quantile_sorted(&maxima, 0.9),
            lambda: lambda.filter(|l| l.count() > 0).map(|l| l.estimate()),
            lambda_sq: lambda_sq.filter(|l| l.count() > 0).map(|l| l.estimate()),
            eta0: eta0.estimate(),
        });
    }
    EnsembleSummary {
        replicas: records.len(),
        n_max,
        survival: proportion(survived, records.len()),
        truncated: records.iter().filter(|r| r.truncated_at.is_some()).count(),
        per_n,
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub records: Vec<RunRecord>,
    pub summary: EnsembleSummary,
}

/// Independent replicas of [`run`], deterministic in `(base_seed, replicas)`.
pub fn ensemble(
    model: &ModelSpec,
    n_max: usize,
    replicas: usize,
    base_seed: u64,
    threads: usize,
    weights: Option<&LambdaWeights>,
    caps: Caps,
) -> Ensemble {
    let records = par_replicas(replicas, base_seed, threads, |i, rng| {
        let mut rec = run(model, n_max, weights, caps, rng);
        rec.replica = i;
        rec.seed = base_seed;
        rec
    });
    let summary = summarize(&records, n_max);
    Ensemble { records, summary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{derive_params, OffspringLaw};
    use crate::walk::StepLaw;

    fn lazy_model() -> ModelSpec {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        ModelSpec::single(law, OffspringLaw::Poisson(2.0)).unwrap()
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = lazy_model();
        let p = derive_params(&model).unwrap();
        let w = LambdaWeights::for_model(&model, p.r.value, 40, |x| p.phi.eval(x));
        let a = ensemble(&model, 40, 64, 99, 1, Some(&w), Caps::default());
        let b = ensemble(&model, 40, 64, 99, 4, Some(&w), Caps::default());
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn summary_ignores_replica_order() {
        let model = lazy_model();
        let mut e = ensemble(&model, 30, 50, 7, 1, None, Caps::default());
        let fwd = summarize(&e.records, 30);
        e.records.reverse();
        let rev = summarize(&e.records, 30);
        for (a, b) in fwd.per_n.iter().zip(&rev.per_n) {
            assert_eq!(a.survivors, b.survivors);
            assert!((a.eta0.mean - b.eta0.mean).abs() <= 1e-9 * a.eta0.mean.abs().max(1.0));
            assert_eq!(a.m_median.to_bits(), b.m_median.to_bits());
        }
    }

    #[test]
    fn survival_matches_extinction_fixed_point() {
        let model = lazy_model();
        let p = derive_params(&model).unwrap();
        // the window proxy is biased at short horizons by long excursions
        let e = ensemble(&model, 3000, 3000, 2024, 1, None, Caps::default());
        let s = &e.summary.survival;
        assert!(
            s.z_against_value(1.0 - p.extinction).abs() < 4.0,
            "{s:?} vs {}",
            1.0 - p.extinction
        );
    }
}
