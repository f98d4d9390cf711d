use rand::Rng;

use crate::error::{CbrwError, Result};
use crate::sampling;

/// Reproduction law `N` at a catalyst.
///
/// `Geometric(p)` counts failures before the first success:
/// `P(N = k) = (1 - p)^k p` for `k >= 0`.
/// `Empirical(pmf)` holds `pmf[k] = P(N = k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringLaw {
    Deterministic(u64),
    Poisson(f64),
    Binomial { n: u64, p: f64 },
    Geometric(f64),
    Empirical(Vec<f64>),
}

impl OffspringLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CbrwError::InvalidOffspring(msg));
        match self {
            OffspringLaw::Deterministic(_) => Ok(()),
            OffspringLaw::Poisson(mu) => {
                if !(mu.is_finite() && *mu > 0.0) {
                    return bad(format!("poisson mean must be positive, got {mu}"));
                }
                Ok(())
            }
            OffspringLaw::Binomial { n, p } => {
                if *n == 0 || !(*p > 0.0 && *p <= 1.0) {
                    return bad(format!(
                        "binomial needs n >= 1 and p in (0, 1], got n={n}, p={p}"
                    ));
                }
                Ok(())
            }
            OffspringLaw::Geometric(p) => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return bad(format!(
                        "geometric success probability must be in (0, 1], got {p}"
                    ));
                }
                Ok(())
            }
            OffspringLaw::Empirical(pmf) => {
                if pmf.is_empty() {
                    return bad("empirical pmf is empty".into());
                }
                if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad("empirical pmf has a negative or non-finite entry".into());
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("empirical pmf sums to {total}"));
                }
                Ok(())
            }
        }
    }

    /// `m = E[N]`.
    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Deterministic(k) => *k as f64,
            OffspringLaw::Poisson(mu) => *mu,
            OffspringLaw::Binomial { n, p } => *n as f64 * p,
            OffspringLaw::Geometric(p) => (1.0 - p) / p,
            OffspringLaw::Empirical(pmf) => pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    /// `E[N^2]`; finite for every supported kind.
    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        match self {
            OffspringLaw::Deterministic(_) => m * m,
            OffspringLaw::Poisson(mu) => mu + mu * mu,
            OffspringLaw::Binomial { n, p } => *n as f64 * p * (1.0 - p) + m * m,
            OffspringLaw::Geometric(p) => (1.0 - p) / (p * p) + m * m,
            OffspringLaw::Empirical(pmf) => pmf
                .iter()
                .enumerate()
                .map(|(k, p)| (k * k) as f64 * p)
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// Probability generating function `f(x) = E[x^N]` on `[0, 1]`.
    pub fn pgf(&self, x: f64) -> f64 {
        match self {
            OffspringLaw::Deterministic(k) => x.powi(*k as i32),
            OffspringLaw::Poisson(mu) => (mu * (x - 1.0)).exp(),
            OffspringLaw::Binomial { n, p } => (1.0 - p + p * x).powi(*n as i32),
            OffspringLaw::Geometric(p) => p / (1.0 - (1.0 - p) * x),
            OffspringLaw::Empirical(pmf) => pmf.iter().rev().fold(0.0, |acc, p| acc * x + p),
        }
    }

    /// `f'(x)`.
    pub fn pgf_prime(&self, x: f64) -> f64 {
        match self {
            OffspringLaw::Deterministic(0) => 0.0,
            OffspringLaw::Deterministic(k) => *k as f64 * x.powi(*k as i32 - 1),
            OffspringLaw::Poisson(mu) => mu * (mu * (x - 1.0)).exp(),
            OffspringLaw::Binomial { n, p } => {
                *n as f64 * p * (1.0 - p + p * x).powi(*n as i32 - 1)
            }
            OffspringLaw::Geometric(p) => {
                let q = 1.0 - p;
                p * q / (1.0 - q * x).powi(2)
            }
            OffspringLaw::Empirical(pmf) => pmf
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, p)| acc * x + k as f64 * p),
        }
    }

    /// A single draw of `N`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_sum(1, rng) as u64
    }

    /// Sum of `k` independent copies of `N`, drawn in one shot from the law
    /// of the sum.
    pub fn sample_sum<R: Rng + ?Sized>(&self, k: u128, rng: &mut R) -> u128 {
        if k == 0 {
            return 0;
        }
        match self {
            OffspringLaw::Deterministic(c) => k * *c as u128,
            OffspringLaw::Poisson(mu) => sampling::poisson(k as f64 * mu, rng),
            OffspringLaw::Binomial { n, p } => sampling::binomial(k * *n as u128, *p, rng),
            OffspringLaw::Geometric(p) => sampling::negative_binomial(k, *p, rng),
            OffspringLaw::Empirical(pmf) => {
                let mut counts = vec![0u128; pmf.len()];
                sampling::multinomial_into(k, pmf, &mut counts, rng);
                counts.iter().enumerate().map(|(j, c)| j as u128 * c).sum()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::stats::MeanVar;

    fn laws() -> Vec<OffspringLaw> {
        vec![
            OffspringLaw::Deterministic(2),
            OffspringLaw::Poisson(2.0),
            OffspringLaw::Binomial { n: 4, p: 0.45 },
            OffspringLaw::Geometric(0.3),
            OffspringLaw::Empirical(vec![0.1, 0.2, 0.3, 0.4]),
        ]
    }

    #[test]
    fn pgf_is_normalized_and_derivative_is_mean() {
        for law in laws() {
            law.validate().unwrap();
            assert!((law.pgf(1.0) - 1.0).abs() < 1e-14, "{law:?}");
            let h = 1e-6;
            let fd = (law.pgf(1.0) - law.pgf(1.0 - h)) / h;
            assert!((fd - law.mean()).abs() < 1e-5, "{law:?}: {fd}");
            assert!((law.pgf_prime(1.0) - law.mean()).abs() < 1e-10, "{law:?}");
        }
    }

    #[test]
    fn pgf_is_convex_nondecreasing() {
        for law in laws() {
            let xs: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
            for w in xs.windows(3) {
                let (a, b, c) = (law.pgf(w[0]), law.pgf(w[1]), law.pgf(w[2]));
                assert!(b >= a - 1e-15 && c >= b - 1e-15);
                assert!(a + c - 2.0 * b >= -1e-14);
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(OffspringLaw::Poisson(-1.0).validate().is_err());
        assert!(OffspringLaw::Binomial { n: 0, p: 0.5 }.validate().is_err());
        assert!(OffspringLaw::Geometric(0.0).validate().is_err());
        assert!(OffspringLaw::Empirical(vec![0.5, 0.4]).validate().is_err());
        assert!(OffspringLaw::Empirical(vec![]).validate().is_err());
    }

    #[test]
    fn sample_sums_match_moments() {
        let mut rng = replica_rng(21, 0);
        for law in laws() {
            let k = 5u128;
            let mv: MeanVar = (0..40_000)
                .map(|_| law.sample_sum(k, &mut rng) as f64)
                .collect();
            let e = mv.estimate();
            let target = k as f64 * law.mean();
            if law.variance() == 0.0 {
                assert_eq!(e.mean, target);
            } else {
                assert!(
                    e.z_against_value(target).abs() < 4.0,
                    "{law:?}: {} vs {target}",
                    e.mean
                );
                let var_target = k as f64 * law.variance();
                assert!((mv.variance() / var_target - 1.0).abs() < 0.05, "{law:?}");
            }
        }
    }

    #[test]
    fn sterile_law_has_no_children() {
        let mut rng = replica_rng(22, 0);
        assert_eq!(OffspringLaw::Deterministic(0).sample_sum(1000, &mut rng), 0);
        assert_eq!(OffspringLaw::Deterministic(0).pgf_prime(0.3), 0.0);
    }
}
