use crate::calibrate::ModelSpec;
use crate::engine::par_replicas;
use crate::stats::{Estimate, MeanVar};

#[derive(Debug, Clone)]
pub struct DeltaReport {
    /// `Delta_0 = phi(S_0)`.
    pub start: f64,
    /// Ensemble mean of `Delta_n` for `n = 0..=n_max`.
    pub means: Vec<Estimate>,
    pub z_tolerance: f64,
}

impl DeltaReport {
    pub fn z(&self, n: usize) -> f64 {
        self.means[n].z_against_value(self.start)
    }

    pub fn pass_at(&self, ns: &[usize]) -> bool {
        ns.iter().all(|&n| self.z(n) <= self.z_tolerance)
    }

    /// Ratio of the last mean to `Delta_0`; stays near 1 for a martingale and
    /// drifts to 0 or infinity when `r` or `phi` is wrong.
    pub fn trend_ratio(&self) -> f64 {
        self.means.last().map_or(1.0, |e| e.mean / self.start)
    }
}

/// `Delta_n = exp(-r n) phi(S_n) prod_{k<n} m_1(S_k)` along independent walks
/// started at the model's initial site.
pub fn delta_martingale_check(
    model: &ModelSpec,
    r: f64,
    phi: &(dyn Fn(i64) -> f64 + Sync),
    n_max: usize,
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> DeltaReport {
    let law = model.walk();
    let x0 = model.initial();
    let paths = par_replicas(replicas, base_seed, threads, |_, rng| {
        let mut out = Vec::with_capacity(n_max + 1);
        let mut s = x0;
        let mut log_w = 0.0;
        out.push(phi(s));
        for k in 1..=n_max {
            log_w += model.m1(s).ln();
            s += law.sample(rng);
            out.push((log_w - r * k as f64).exp() * phi(s));
        }
        out
    });
    let means = (0..=n_max)
        .map(|n| paths.iter().map(|p| p[n]).collect::<MeanVar>().estimate())
        .collect();
    DeltaReport {
        start: phi(x0),
        means,
        z_tolerance: 3.0,
    }
}
