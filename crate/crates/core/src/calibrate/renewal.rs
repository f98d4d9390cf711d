use crate::calibrate::model::ModelSpec;
use crate::error::{CbrwError, Result};
use crate::walk::lattice::{killed_occupation, reachable_residues};
use crate::walk::{gcd, period, return_time_pmf, StepLaw};

/// Discrete renewal equation `t_n = y_n + sum_{k=1..n} s_k t_{n-k}` (`s_0 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalSystem {
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenewalMode {
    /// Proper renewal law, `sum s = 1`: Feller limit `sum y / sum n s_n`.
    Limit,
    /// Defective law, `sum s < 1`: `t_n -> y_inf / (1 - sum s)`.
    Defective,
}

#[derive(Debug, Clone)]
pub struct RenewalSolution {
    pub t: Vec<f64>,
    pub limit: f64,
    /// Mass of `s` missing from the supplied truncation (limit mode), or
    /// the change of `y` over its last step (defective mode).
    pub tail_report: f64,
}

impl RenewalSystem {
    fn coef(v: &[f64], n: usize) -> f64 {
        v.get(n).copied().unwrap_or(0.0)
    }

    /// Exact forward substitution for `n = 0..=n_max`.
    pub fn solve_terms(&self, n_max: usize) -> Vec<f64> {
        let mut t = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let conv: f64 = (1..=n.min(self.s.len().saturating_sub(1)))
                .map(|k| self.s[k] * t[n - k])
                .sum();
            t.push(Self::coef(&self.y, n) + conv);
        }
        t
    }

    /// gcd of the support of `s`.
    pub fn period(&self) -> u64 {
        self.s
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .fold(0u64, |g, (k, _)| gcd(g, k as u64))
    }
}

pub fn solve_renewal(
    system: &RenewalSystem,
    n_max: usize,
    mode: RenewalMode,
) -> Result<RenewalSolution> {
    if system.s.first().copied().unwrap_or(0.0) != 0.0 {
        return Err(CbrwError::InvalidArgument(
            "renewal law must have s_0 = 0".into(),
        ));
    }
    let total: f64 = system.s.iter().sum();
    let t = system.solve_terms(n_max);
    match mode {
        RenewalMode::Limit => {
            let d = system.period();
            if d != 1 {
                return Err(CbrwError::PeriodicRenewal { period: d });
            }
            let mean: f64 = system.s.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            let sum_y: f64 = system.y.iter().sum();
            Ok(RenewalSolution {
                t,
                limit: sum_y / mean,
                tail_report: (1.0 - total).abs(),
            })
        }
        RenewalMode::Defective => {
            if total >= 1.0 {
                return Err(CbrwError::InvalidArgument(
                    "defective mode needs sum s < 1".into(),
                ));
            }
            let y_inf = system.y.last().copied().unwrap_or(0.0);
            let n = system.y.len();
            let drift = if n >= 2 {
                (system.y[n - 1] - system.y[n - 2]).abs()
            } else {
                0.0
            };
            Ok(RenewalSolution {
                t,
                limit: y_inf / (1.0 - total),
                tail_report: drift,
            })
        }
    }
}

/// Occupation constant of the first-moment asymptotics
/// `exp(-r (n d + l)) E[eta_{n d + l}(x)] -> c` along `n`.
#[derive(Debug, Clone, Copy)]
pub struct OccupationConstant {
    pub c: f64,
    pub l: u64,
    pub period: u64,
    /// Truncation bound on `c`.
    pub error: f64,
    /// False when `x` is never occupied; `c` is then zero.
    pub reachable: bool,
}

/// `d / (m E[tau exp(-r tau)])` and its truncation bound.
pub fn occupation_constant_origin(law: &StepLaw, r: f64, m: f64) -> Result<(f64, f64)> {
    let k = ((1e16f64).ln() / r).ceil() as usize + 1;
    let pmf = return_time_pmf(law, k)?;
    let d = period(law) as f64;
    let mu = m * pmf.laplace_first_moment(r);
    // sum_{j > K} j exp(-r j) bound
    let x = (-r).exp();
    let kf = k as f64;
    let tail = x.powf(kf + 1.0) * (kf + 1.0 - kf * x) / (1.0 - x).powi(2);
    let c = d / mu;
    Ok((c, c * m * tail / mu))
}

/// Occupation constant `c_x` relative to the single catalyst of `model`.
///
/// With `a_n = exp(-r n) E[eta_n(c)]` renewing through
/// `s_k = m exp(-r k) P(tau = k)`, the last-exit decomposition gives
/// `c_x = d sum_k y_k / sum_k k s_k` with
/// `y_k = m exp(-r k) P(tau > k, S_k = x - c)` for `x != c` (and `y = delta_0`
/// at the catalyst), summed over `k = l_x mod d`.
pub fn occupation_constant_cx(model: &ModelSpec, r: f64, x: i64) -> Result<OccupationConstant> {
    let (c, offspring) = model.single_catalyst()?;
    let law = model.walk();
    let m = offspring.mean();
    let d = period(law);
    let rel = x - c;
    let (c0, c0_err) = occupation_constant_origin(law, r, m)?;
    if rel == 0 {
        return Ok(OccupationConstant {
            c: c0,
            l: 0,
            period: d,
            error: c0_err,
            reachable: true,
        });
    }
    let horizon = (rel.unsigned_abs() as usize) * 4 + 4 * d as usize + 16;
    let residues = reachable_residues(law, rel, d, horizon);
    let Some(&l) = residues.iter().next() else {
        return Ok(OccupationConstant {
            c: 0.0,
            l: 0,
            period: d,
            error: 0.0,
            reachable: false,
        });
    };
    // y_k <= m exp(-r k): truncate where the geometric tail is below 1e-16
    let k_max =
        ((m / (1.0 - (-r).exp()) * 1e16).ln() / r).ceil() as usize + rel.unsigned_abs() as usize;
    let occ = killed_occupation(law, rel, k_max)?;
    let sum_y: f64 = occ
        .iter()
        .enumerate()
        .map(|(k, p)| m * (-r * k as f64).exp() * p)
        .sum();
    let tail = m * (-r * (k_max + 1) as f64).exp() / (1.0 - (-r).exp());
    Ok(OccupationConstant {
        c: c0 * sum_y,
        l,
        period: d,
        error: c0 * tail + c0_err * sum_y,
        reachable: true,
    })
}
