//! Integer-valued random draws on `u128` counts.
//!
//! Draws are exact while the relevant count fits in an `f64` mantissa
//! (`EXACT_LIMIT`). Beyond that the integer value itself is not
//! representable, and a moment-matched Gaussian rounded to the nearest
//! integer is used instead.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};

pub const EXACT_LIMIT: u128 = 1 << 53;

fn gaussian_count<R: Rng + ?Sized>(mean: f64, var: f64, lo: u128, hi: u128, rng: &mut R) -> u128 {
    let z: f64 = StandardNormal.sample(rng);
    let x = (mean + z * var.max(0.0).sqrt()).round();
    if x <= lo as f64 {
        lo
    } else if x >= hi as f64 {
        hi
    } else {
        x as u128
    }
}

/// `Binomial(n, p)`.
pub fn binomial<R: Rng + ?Sized>(n: u128, p: f64, rng: &mut R) -> u128 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= EXACT_LIMIT {
        let b = Binomial::new(n as u64, p).expect("valid binomial parameters");
        return b.sample(rng) as u128;
    }
    let nf = n as f64;
    gaussian_count(nf * p, nf * p * (1.0 - p), 0, n, rng)
}

/// `Poisson(lambda)`.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u128 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= EXACT_LIMIT as f64 {
        let d = Poisson::new(lambda).expect("valid poisson parameter");
        let x: f64 = d.sample(rng);
        return x as u128;
    }
    gaussian_count(lambda, lambda, 0, u128::MAX, rng)
}

/// Negative binomial: failures before the `k`-th success, success prob `p`,
/// drawn as a Poisson-Gamma mixture.
pub fn negative_binomial<R: Rng + ?Sized>(k: u128, p: f64, rng: &mut R) -> u128 {
    if k == 0 || p >= 1.0 {
        return 0;
    }
    let kf = k as f64;
    let q = 1.0 - p;
    if k <= EXACT_LIMIT {
        let g = Gamma::new(kf, q / p).expect("valid gamma parameters");
        let lambda: f64 = g.sample(rng);
        return poisson(lambda, rng);
    }
    gaussian_count(kf * q / p, kf * q / (p * p), 0, u128::MAX, rng)
}

/// Splits `n` items over categories with probabilities `probs` by sequential
/// conditional binomials, writing the counts into `out`.
pub fn multinomial_into<R: Rng + ?Sized>(n: u128, probs: &[f64], out: &mut [u128], rng: &mut R) {
    debug_assert_eq!(probs.len(), out.len());
    let mut left = n;
    let mut rest = 1.0f64;
    let last = probs.len() - 1;
    for (i, &p) in probs[..last].iter().enumerate() {
        let c = if left == 0 {
            0
        } else {
            binomial(left, (p / rest).clamp(0.0, 1.0), rng)
        };
        out[i] = c;
        left -= c;
        rest -= p;
    }
    out[last] = left;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::stats::MeanVar;

    #[test]
    fn multinomial_conserves_counts() {
        let mut rng = replica_rng(1, 0);
        let probs = [0.2, 0.5, 0.3];
        let mut out = [0u128; 3];
        for &n in &[0u128, 1, 7, 1000, EXACT_LIMIT + 12345, 1u128 << 100] {
            multinomial_into(n, &probs, &mut out, &mut rng);
            assert_eq!(out.iter().sum::<u128>(), n);
        }
    }

    #[test]
    fn multinomial_zero_items_early_break_fills_zeros() {
        let mut rng = replica_rng(2, 0);
        let mut out = [9u128; 4];
        multinomial_into(0, &[0.25; 4], &mut out, &mut rng);
        assert_eq!(out, [0; 4]);
    }

    #[test]
    fn multinomial_means() {
        let mut rng = replica_rng(3, 0);
        let probs = [0.4, 0.2, 0.4];
        let mut out = [0u128; 3];
        let mut mv: Vec<MeanVar> = (0..3).map(|_| MeanVar::new()).collect();
        for _ in 0..20_000 {
            multinomial_into(50, &probs, &mut out, &mut rng);
            for i in 0..3 {
                mv[i].push(out[i] as f64);
            }
        }
        for i in 0..3 {
            let e = mv[i].estimate();
            assert!(e.z_against_value(50.0 * probs[i]).abs() < 4.0);
        }
    }

    #[test]
    fn huge_counts_stay_centred() {
        let mut rng = replica_rng(4, 0);
        let n = 1u128 << 80;
        let c = binomial(n, 0.25, &mut rng);
        let rel = (c as f64 / n as f64 - 0.25).abs();
        assert!(rel < 1e-9);
        let l = poisson(1e20, &mut rng) as f64;
        assert!((l / 1e20 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negative_binomial_mean() {
        let mut rng = replica_rng(5, 0);
        let mv: MeanVar = (0..50_000)
            .map(|_| negative_binomial(3, 0.4, &mut rng) as f64)
            .collect();
        // mean k q / p = 4.5
        assert!(mv.estimate().z_against_value(4.5).abs() < 4.0);
    }
}
