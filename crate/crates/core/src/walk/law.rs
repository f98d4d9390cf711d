use rand::Rng;

use crate::error::{CbrwError, Result};
use crate::roots::{bisect, expand_until, ABS_TOL};

const SUM_TOL: f64 = 1e-12;

/// Finite-support law of one increment of an integer random walk.
///
/// Displacements are kept sorted and distinct. Construction rejects laws
/// that are not irreducible on the integers: the support must contain a
/// negative and a positive step and the gcd of the absolute steps must be 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    steps: Vec<i64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepLaw {
    pub fn new(pairs: &[(i64, f64)]) -> Result<Self> {
        let law = Self::from_pairs_unchecked(pairs)?;
        law.check_irreducible()?;
        Ok(law)
    }

    /// Validates the pmf but not irreducibility (tilted laws, ladder DPs and
    /// tests use walks that only need to be proper distributions).
    fn from_pairs_unchecked(pairs: &[(i64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(CbrwError::InvalidStepLaw("empty support".into()));
        }
        let mut sorted = pairs.to_vec();
        sorted.sort_by_key(|&(s, _)| s);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CbrwError::InvalidStepLaw("repeated displacement".into()));
        }
        for &(s, p) in &sorted {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CbrwError::InvalidStepLaw(format!(
                    "probability {p} of step {s} is outside (0, 1]"
                )));
            }
        }
        let total: f64 = sorted.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(CbrwError::InvalidStepLaw(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let steps: Vec<i64> = sorted.iter().map(|&(s, _)| s).collect();
        let probs: Vec<f64> = sorted.iter().map(|&(_, p)| p).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            steps,
            probs,
            cumulative,
        })
    }

    fn check_irreducible(&self) -> Result<()> {
        if !(self.min_step() < 0 && self.max_step() > 0) {
            return Err(CbrwError::InvalidStepLaw(
                "walk must have both a negative and a positive step".into(),
            ));
        }
        let g = self
            .steps
            .iter()
            .fold(0u64, |g, &s| gcd(g, s.unsigned_abs()));
        if g != 1 {
            return Err(CbrwError::InvalidStepLaw(format!(
                "gcd of the steps is {g}; the walk is not irreducible on Z"
            )));
        }
        Ok(())
    }

    /// Simple symmetric walk: +/-1 with probability 1/2.
    pub fn simple() -> Self {
        Self::new(&[(-1, 0.5), (1, 0.5)]).expect("valid law")
    }

    /// Symmetric nearest-neighbour walk holding with probability `hold`.
    pub fn lazy(hold: f64) -> Result<Self> {
        let side = 0.5 * (1.0 - hold);
        Self::new(&[(-1, side), (0, hold), (1, side)])
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pairs(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.steps.iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability of displacement `s` (zero off the support).
    pub fn prob(&self, s: i64) -> f64 {
        self.steps
            .binary_search(&s)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn min_step(&self) -> i64 {
        self.steps[0]
    }

    pub fn max_step(&self) -> i64 {
        *self.steps.last().unwrap()
    }

    /// Largest absolute displacement.
    pub fn max_jump(&self) -> i64 {
        self.max_step().max(-self.min_step()).max(1)
    }

    pub fn mean(&self) -> f64 {
        self.pairs().map(|(s, p)| s as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.pairs().map(|(s, p)| (s * s) as f64 * p).sum()
    }

    /// Exact zero drift (rational check on the support, tolerance 1e-12).
    pub fn is_zero_mean(&self) -> bool {
        self.mean().abs() <= 1e-12
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.min_step() >= -1 && self.max_step() <= 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs()
            .all(|(s, p)| (self.prob(-s) - p).abs() <= 1e-12)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.steps[i.min(self.steps.len() - 1)]
    }

    /// Log moment generating function `log E[exp(t S_1)]`.
    pub fn psi(&self, t: f64) -> f64 {
        log_sum_exp(self.pairs().map(|(s, p)| p.ln() + t * s as f64))
    }

    /// Derivative of [`psi`](Self::psi): the mean of the law tilted by `t`.
    pub fn psi_prime(&self, t: f64) -> f64 {
        let lse = self.psi(t);
        self.pairs()
            .map(|(s, p)| s as f64 * (p.ln() + t * s as f64 - lse).exp())
            .sum()
    }

    /// Legendre transform `sup_{t >= 0} (a t - psi(t))` on the right branch
    /// `mean <= a <= max_step`.
    pub fn psi_star(&self, a: f64) -> Result<f64> {
        let max_step = self.max_step();
        let mean = self.mean();
        if a > max_step as f64 {
            return Err(CbrwError::InfeasibleRate { a, max_step });
        }
        if a < mean - 1e-15 {
            return Err(CbrwError::OutOfBranch { a, mean });
        }
        if a <= mean {
            return Ok(0.0);
        }
        if a == max_step as f64 {
            // supremum approached as t -> infinity
            return Ok(-self.prob(max_step).ln());
        }
        let theta = self.tilt_for_mean(a)?;
        Ok(a * theta - self.psi(theta))
    }

    /// Unique `theta >= 0` with `psi'(theta) = a`, for `mean <= a < max_step`.
    pub fn tilt_for_mean(&self, a: f64) -> Result<f64> {
        let max_step = self.max_step();
        if a >= max_step as f64 {
            return Err(CbrwError::InfeasibleRate { a, max_step });
        }
        let mean = self.mean();
        if a < mean {
            return Err(CbrwError::OutOfBranch { a, mean });
        }
        let hi = expand_until(1.0, |t| self.psi_prime(t) > a).ok_or(CbrwError::NoConvergence {
            what: "tilt bracket",
            iterations: crate::roots::MAX_ITER,
            residual: a,
        })?;
        bisect(|t| self.psi_prime(t) - a, 0.0, hi, ABS_TOL * 1e-2).ok_or(CbrwError::NoConvergence {
            what: "tilt bisection",
            iterations: crate::roots::MAX_ITER,
            residual: a,
        })
    }

    /// Exponentially tilted law `p(s) exp(theta s - psi(theta))`.
    pub fn tilt(&self, theta: f64) -> StepLaw {
        if theta == 0.0 {
            return self.clone();
        }
        let lse = self.psi(theta);
        let pairs: Vec<(i64, f64)> = self
            .pairs()
            .map(|(s, p)| (s, (p.ln() + theta * s as f64 - lse).exp()))
            .collect();
        // renormalise against rounding; the law stays a valid pmf
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        let pairs: Vec<(i64, f64)> = pairs.into_iter().map(|(s, p)| (s, p / total)).collect();
        Self::from_pairs_unchecked(&pairs).expect("tilted law is a pmf")
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub(crate) fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0_PRINTED: f64 = 0.48915;

    fn lazy() -> StepLaw {
        StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap()
    }

    fn up_two() -> StepLaw {
        StepLaw::new(&[(-1, 0.5), (2, 0.5)]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_laws() {
        assert!(StepLaw::new(&[]).is_err());
        assert!(StepLaw::new(&[(1, 0.5), (1, 0.5)]).is_err());
        assert!(StepLaw::new(&[(-1, 0.5), (1, 0.6)]).is_err());
        assert!(StepLaw::new(&[(1, 1.0)]).is_err());
        assert!(StepLaw::new(&[(-2, 0.5), (2, 0.5)]).is_err());
        assert!(StepLaw::new(&[(-2, 0.5), (3, 0.5)]).is_ok());
    }

    #[test]
    fn psi_values() {
        let simple = StepLaw::simple();
        assert_eq!(simple.psi(0.0), 0.0);
        assert!((simple.psi(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((simple.psi(1.0) - 0.43378).abs() < 1e-5);
        let expected = (0.8 * 1f64.cosh() + 0.2).ln();
        assert!((lazy().psi(1.0) - expected).abs() < 1e-15);
        assert!((lazy().psi(1.0) - 0.36090).abs() < 2e-4);
    }

    #[test]
    fn psi_large_argument_is_finite() {
        let law = StepLaw::simple();
        let v = law.psi(800.0);
        assert!((v - (800.0 - 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn psi_star_examples() {
        let simple = StepLaw::simple();
        assert_eq!(simple.psi_star(0.0).unwrap(), 0.0);
        assert!((simple.psi_star(1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let a = T0_PRINTED.tanh();
        let expected = T0_PRINTED * a - T0_PRINTED.cosh().ln();
        let got = simple.psi_star(a).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((got - 0.10673).abs() < 2e-4);
    }

    #[test]
    fn psi_star_errors() {
        let simple = StepLaw::simple();
        assert!(matches!(
            simple.psi_star(1.5),
            Err(CbrwError::InfeasibleRate { .. })
        ));
        assert!(matches!(
            simple.psi_star(-0.1),
            Err(CbrwError::OutOfBranch { .. })
        ));
    }

    #[test]
    fn tilt_examples() {
        let simple = StepLaw::simple();
        assert_eq!(simple.tilt(0.0), simple);
        let tilted = simple.tilt(T0_PRINTED);
        let up = T0_PRINTED.exp() / (2.0 * T0_PRINTED.cosh());
        assert!((tilted.prob(1) - up).abs() < 1e-15);
        assert!((tilted.prob(1) - 0.7268).abs() < 1e-4);
        // mean of the tilted law against a central finite difference of psi
        let h = 1e-5;
        let fd = (simple.psi(T0_PRINTED + h) - simple.psi(T0_PRINTED - h)) / (2.0 * h);
        assert!((tilted.mean() - fd).abs() < 1e-9);
        assert!((tilted.mean() - 0.45360).abs() < 2e-4);
    }

    #[test]
    fn psi_star_at_max_step_for_other_laws() {
        assert!((up_two().psi_star(2.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn psi_is_convex(t1 in -5.0f64..5.0, t2 in -5.0f64..5.0, lambda in 0.01f64..0.99) {
            for law in [StepLaw::simple(), lazy(), up_two()] {
                let lhs = law.psi(lambda * t1 + (1.0 - lambda) * t2);
                let rhs = lambda * law.psi(t1) + (1.0 - lambda) * law.psi(t2);
                prop_assert!(lhs <= rhs + 1e-12);
            }
        }

        #[test]
        fn psi_star_dominates_every_tangent(frac in 0.0f64..0.999, t in 0.0f64..8.0) {
            for law in [StepLaw::simple(), lazy(), up_two()] {
                let a = law.mean() + frac * (law.max_step() as f64 - law.mean());
                let value = law.psi_star(a).unwrap();
                prop_assert!(value >= a * t - law.psi(t) - 1e-9);
            }
        }

        #[test]
        fn tilt_is_normalised(theta in -5.0f64..5.0) {
            for law in [StepLaw::simple(), lazy(), up_two()] {
                let tilted = law.tilt(theta);
                let total: f64 = tilted.probs().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!((tilted.mean() - law.psi_prime(theta)).abs() < 1e-10);
            }
        }

        #[test]
        fn psi_star_nondecreasing(f1 in 0.0f64..0.99, f2 in 0.0f64..0.99) {
            let law = up_two();
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let span = law.max_step() as f64 - law.mean();
            let a = law.psi_star(law.mean() + lo * span).unwrap();
            let b = law.psi_star(law.mean() + hi * span).unwrap();
            prop_assert!(a <= b + 1e-12);
        }
    }
}
