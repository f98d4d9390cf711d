use rand_distr::{Distribution, Exp};

use crate::calibrate::OffspringLaw;
use crate::engine::par_replicas;
use crate::error::{CbrwError, Result};
use crate::stats::{linear_fit, Estimate, MeanVar};
use crate::walk::lattice::stay_positive_above;
use crate::walk::StepLaw;

#[derive(Debug, Clone)]
pub struct MogulskiiReport {
    pub a: f64,
    pub theta: f64,
    pub psi_star: f64,
    /// `(j, P(S_j > a j, S_1..S_j > 0), -log P / j)`.
    pub rows: Vec<(usize, Estimate, f64)>,
    /// Slope of `-log P` against `j`.
    pub slope: f64,
    pub rel_err: f64,
}

/// Importance-sampled `P(S_j > a j, S_1 > 0, ..., S_j > 0)` under the walk
/// tilted to mean `a`, and the fitted decay rate against `psi*(a)`.
pub fn mogulskii_probe(
    law: &StepLaw,
    a: f64,
    j_list: &[usize],
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> Result<MogulskiiReport> {
    if j_list.len() < 2 {
        return Err(CbrwError::InvalidArgument(
            "need at least two horizons to fit a rate".into(),
        ));
    }
    let theta = law.tilt_for_mean(a)?;
    let psi_star = law.psi_star(a)?;
    let psi = law.psi(theta);
    let tilted = law.tilt(theta);
    let j_max = j_list.iter().copied().max().unwrap();
    let samples: Vec<Vec<f64>> = par_replicas(replicas, base_seed, threads, |_, rng| {
        let mut out = vec![0.0; j_list.len()];
        let mut s = 0i64;
        for j in 1..=j_max {
            s += tilted.sample(rng);
            if s <= 0 {
                break;
            }
            for (slot, _) in j_list.iter().enumerate().filter(|(_, &jj)| jj == j) {
                if s as f64 > a * j as f64 {
                    out[slot] = (-theta * s as f64 + j as f64 * psi).exp();
                }
            }
        }
        out
    });
    let rows: Vec<(usize, Estimate, f64)> = j_list
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let e = samples.iter().map(|v| v[i]).collect::<MeanVar>().estimate();
            (j, e, -e.mean.ln() / j as f64)
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| -r.1.mean.ln()).collect();
    let (slope, _, _) = linear_fit(&xs, &ys);
    Ok(MogulskiiReport {
        a,
        theta,
        psi_star,
        rows,
        slope,
        rel_err: (slope / psi_star - 1.0).abs(),
    })
}

/// `q(k, n)` and `p(k, n) = 1 - f(1 - q(k, n))` at level `alpha n + z`.
#[derive(Debug, Clone, Copy)]
pub struct QProbe {
    pub k: usize,
    pub n: usize,
    pub z: f64,
    pub q: f64,
    pub p: f64,
    /// `f'(1 - q) q <= p <= m q`.
    pub bounds_hold: bool,
}

pub fn q_probe(
    law: &StepLaw,
    offspring: &OffspringLaw,
    alpha: f64,
    k: usize,
    n: usize,
    z: f64,
) -> Result<QProbe> {
    if k > n {
        return Err(CbrwError::InvalidArgument(format!(
            "q(k, n) needs k <= n, got k={k}, n={n}"
        )));
    }
    let q = stay_positive_above(law, n - k, alpha * n as f64 + z)?;
    let p = 1.0 - offspring.pgf(1.0 - q);
    let slack = 1e-14;
    let bounds_hold =
        offspring.pgf_prime(1.0 - q) * q <= p + slack && p <= offspring.mean() * q + slack;
    Ok(QProbe {
        k,
        n,
        z,
        q,
        p,
        bounds_hold,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct QIdentityReport {
    /// `exp(r k) q(k, n)` by exact DP.
    pub lhs: f64,
    /// `exp(-t0 z) P~(S_j > 0 for j <= n-k, alpha n + z < S_{n-k} <= alpha n + z + e)`
    /// by simulation under the tilted walk with an explicit `Exp(t0)` draw.
    pub rhs: Estimate,
    pub z_score: f64,
    pub pass: bool,
}

/// Checks the tilted representation of `q(k, n)`. `r` and `t0` must satisfy
/// `psi(t0) = r` and `alpha = r / t0`.
#[allow(clippy::too_many_arguments)]
pub fn q_identity_check(
    law: &StepLaw,
    r: f64,
    t0: f64,
    k: usize,
    n: usize,
    z: f64,
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> Result<QIdentityReport> {
    if k > n || z < 0.0 {
        return Err(CbrwError::InvalidArgument(
            "q identity needs k <= n and z >= 0".into(),
        ));
    }
    let alpha = r / t0;
    let level = alpha * n as f64 + z;
    let lhs = (r * k as f64).exp() * stay_positive_above(law, n - k, level)?;
    let tilted = law.tilt(t0);
    let exp = Exp::new(t0).map_err(|_| CbrwError::InvalidRate(t0))?;
    let steps = n - k;
    let hits: Vec<f64> = par_replicas(replicas, base_seed, threads, |_, rng| {
        let e = exp.sample(rng);
        let mut s = 0i64;
        for _ in 1..=steps {
            s += tilted.sample(rng);
            if s <= 0 {
                return 0.0;
            }
        }
        let s = s as f64;
        if steps > 0 && level < s && s <= level + e {
            1.0
        } else {
            0.0
        }
    });
    let p = hits.into_iter().collect::<MeanVar>().estimate();
    let scale = (-t0 * z).exp();
    let rhs = Estimate {
        mean: scale * p.mean,
        se: scale * p.se,
        n: p.n,
    };
    let z_score = rhs.z_against_value(lhs);
    Ok(QIdentityReport {
        lhs,
        rhs,
        z_score,
        pass: z_score <= 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::solve_t0;

    #[test]
    fn simple_walk_rate() {
        let rep = mogulskii_probe(
            &StepLaw::simple(),
            0.4536,
            &[50, 100, 150, 200],
            40_000,
            40,
            2,
        )
        .unwrap();
        assert!((rep.psi_star - 0.1067315).abs() < 1e-6);
        assert!(rep.rel_err < 0.15, "{} vs {}", rep.slope, rep.psi_star);
    }

    #[test]
    fn infeasible_rate() {
        assert!(matches!(
            mogulskii_probe(&StepLaw::simple(), 1.0, &[10, 20], 10, 1, 1),
            Err(CbrwError::InfeasibleRate { .. })
        ));
    }

    #[test]
    fn q_bounds_and_identity() {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        let r = 1.2f64.ln();
        let t0 = solve_t0(&law, r).unwrap();
        let off = OffspringLaw::Poisson(2.0);
        for (k, n) in [(0usize, 8usize), (3, 10), (6, 12)] {
            let probe = q_probe(&law, &off, r / t0, k, n, 0.5).unwrap();
            assert!(probe.bounds_hold);
            assert!(probe.q > 0.0 && probe.p >= probe.q);
            let rep = q_identity_check(&law, r, t0, k, n, 0.5, 100_000, 41, 2).unwrap();
            assert!(rep.pass, "k={k} n={n}: {rep:?}");
        }
    }
}
