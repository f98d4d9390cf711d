use rand::Rng;

use crate::calibrate::model::ModelSpec;
use crate::calibrate::offspring::OffspringLaw;
use crate::calibrate::{Bounded, Method};
use crate::error::{CbrwError, Result};
use crate::roots::{bisect, expand_until, golden_max};
use crate::stats::{proportion, Estimate};
use crate::walk::{first_passage_samples, return_time_pmf, PassageMode, ReturnTimePmf, StepLaw};

/// Truncation target for discounted return-time sums used by the solvers.
const SOLVER_EPS: f64 = 1e-13;

fn horizon_for(r: f64, eps: f64) -> usize {
    ((1.0 / eps).ln() / r).ceil().max(1.0) as usize
}

/// `E[exp(-r tau)]` from the exact return-time pmf, truncated at the first
/// `K` with `exp(-r K) <= eps`. The reported error bounds the neglected tail.
pub fn laplace_tau(law: &StepLaw, r: f64, eps: f64) -> Result<Bounded> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(CbrwError::InvalidRate(r));
    }
    let k = horizon_for(r, eps);
    let pmf = return_time_pmf(law, k)?;
    Ok(Bounded {
        value: pmf.laplace(r),
        error: (-r * (k + 1) as f64).exp() * pmf.tail.max(0.0),
        method: Method::Dp,
    })
}

/// Closed form `E[exp(-r tau)] = 1 - sqrt(1 - exp(-2r))` for the simple walk.
pub fn simple_walk_laplace(r: f64) -> f64 {
    1.0 - (1.0 - (-2.0 * r).exp()).sqrt()
}

/// Largest DP horizon tried before switching to the Green-function integral.
const RETURN_DP_MAX: usize = 1 << 12;

/// `P(tau < inf)`.
///
/// Exactly 1 for zero-mean walks (recurrence). Otherwise the exact pmf mass
/// up to a horizon plus a Chernoff bound on the remainder,
/// `P(tau = k) <= P(S_k = 0) <= exp(k min psi)`; the value is the midpoint of
/// the resulting interval and the error its half-width. When the drift is so
/// small that the bound stays loose, `1 - 1/G(0)` with the Green function
/// computed by quadrature.
pub fn return_probability(law: &StepLaw) -> Result<Bounded> {
    if law.is_zero_mean() {
        return Ok(Bounded::exact(1.0, Method::ClosedForm));
    }
    let (_, neg_min) = golden_max(|t| -law.psi(t), -50.0, 50.0, 1e-12);
    let psi_min = -neg_min;
    debug_assert!(psi_min < 0.0);
    let mut k = 256usize;
    loop {
        let pmf = return_time_pmf(law, k)?;
        let tail = ((k + 1) as f64 * psi_min).exp() / (1.0 - psi_min.exp());
        let slack = tail.min(pmf.tail);
        if slack < 1e-13 {
            let lo = pmf.total();
            return Ok(Bounded {
                value: lo + 0.5 * slack,
                error: 0.5 * slack,
                method: Method::Dp,
            });
        }
        if k >= RETURN_DP_MAX {
            return green_return_probability(law);
        }
        k *= 2;
    }
}

/// `G(0) = (1/pi) int_0^pi Re 1/(1 - phi(theta)) dtheta + 1/(2|mu|)` for a
/// transient walk, where `phi` is the characteristic function and the last
/// term is the mass the Abel limit leaves at `theta = 0`. The integrand is close
/// to a Lorentzian of half-width `~2|mu|/sigma^2` at the origin, so the
/// integral runs in `u` with `theta = w tan u`.
fn green_return_probability(law: &StepLaw) -> Result<Bounded> {
    let w = 2.0 * law.mean().abs() / law.second_moment();
    let f = |u: f64| {
        let theta = w * u.tan();
        let (mut a, mut b) = (0.0, 0.0);
        for (s, p) in law.pairs() {
            let x = s as f64 * theta;
            a += 2.0 * p * (0.5 * x).sin().powi(2);
            b += p * x.sin();
        }
        let jac = w / u.cos().powi(2);
        if a == 0.0 && b == 0.0 {
            // theta = 0: limit of a/(a^2 + b^2) is sigma^2 / (2 mu^2)
            return jac * law.second_moment() / (2.0 * law.mean().powi(2));
        }
        jac * a / (a * a + b * b)
    };
    let top = (std::f64::consts::PI / w).atan();
    let (integral, err) = integrate(&f, 0.0, top, 1e-14);
    let g = integral / std::f64::consts::PI + 0.5 / law.mean().abs();
    let g_err = err / std::f64::consts::PI;
    if !(g.is_finite() && g > 1.0) {
        return Err(CbrwError::NoConvergence {
            what: "green function quadrature",
            iterations: 0,
            residual: g,
        });
    }
    Ok(Bounded {
        value: 1.0 - 1.0 / g,
        error: g_err / (g * g),
        method: Method::Quadrature,
    })
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
// Gauss weights on the odd-indexed Kronrod nodes
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod value and `|Kronrod - Gauss|` on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let (mut k, mut g) = (GK_WEIGHTS[7] * fc, G_WEIGHTS[3] * fc);
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod: bisects the interval with the largest
/// error estimate until the summed estimate is below `tol` (relative) or the
/// interval budget is spent. Returns the integral and the error estimate.
fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    for _ in 0..2000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol * total.abs() {
            break;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].2 .1.total_cmp(&parts[j].2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
    (
        parts.iter().map(|p| p.2 .0).sum(),
        parts.iter().map(|p| p.2 .1).sum(),
    )
}

/// Result of the Malthusian calibration of a single-catalyst model.
#[derive(Debug, Clone)]
pub struct MalthusianFit {
    pub r: f64,
    /// `|m E[exp(-r tau)] - 1|` at the returned root.
    pub residual: f64,
    /// Truncation bound on `E[exp(-r tau)]` at the root.
    pub laplace_error: f64,
    pub return_probability: Bounded,
    pub pmf: ReturnTimePmf,
}

/// Unique `r > 0` with `m E[exp(-r tau)] = 1`, by bisection on the strictly
/// decreasing map `r -> m E[exp(-r tau)]`.
pub fn solve_malthusian(model: &ModelSpec) -> Result<MalthusianFit> {
    let (_, offspring) = model.single_catalyst()?;
    solve_malthusian_for(model.walk(), offspring.mean())
}

pub fn solve_malthusian_for(law: &StepLaw, m: f64) -> Result<MalthusianFit> {
    let ret = return_probability(law)?;
    let growth = m * ret.value;
    if m * (ret.value + ret.error) <= 1.0 || m <= 1.0 {
        return Err(CbrwError::Subcritical { growth });
    }
    if m * (ret.value - ret.error) <= 1.0 {
        // too close to criticality to certify a root
        return Err(CbrwError::Subcritical { growth });
    }
    let r_hi = m.ln();
    let mut r_lo = 0.5 * r_hi;
    let pmf = loop {
        let k = horizon_for(r_lo, SOLVER_EPS);
        let pmf = return_time_pmf(law, k)?;
        if m * pmf.laplace(r_lo) > 1.0 {
            break pmf;
        }
        r_lo *= 0.5;
        if r_lo < 1e-8 {
            return Err(CbrwError::Subcritical { growth });
        }
    };
    let r = bisect(|r| m * pmf.laplace(r) - 1.0, r_lo, r_hi, 1e-15).ok_or(
        CbrwError::NoConvergence {
            what: "malthusian bisection",
            iterations: crate::roots::MAX_ITER,
            residual: f64::NAN,
        },
    )?;
    let k = pmf.n_max();
    Ok(MalthusianFit {
        r,
        residual: (m * pmf.laplace(r) - 1.0).abs(),
        laplace_error: (-r * (k + 1) as f64).exp() * pmf.tail.max(0.0),
        return_probability: ret,
        pmf,
    })
}

/// Unique positive root of `psi(t) = r`.
pub fn solve_t0(law: &StepLaw, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(CbrwError::InvalidRate(r));
    }
    let hi = expand_until(1.0, |t| law.psi(t) > r).ok_or(CbrwError::NoConvergence {
        what: "t0 bracket",
        iterations: crate::roots::MAX_ITER,
        residual: f64::NAN,
    })?;
    let t0 = bisect(|t| law.psi(t) - r, 0.0, hi, 1e-15).ok_or(CbrwError::NoConvergence {
        what: "t0 bisection",
        iterations: crate::roots::MAX_ITER,
        residual: f64::NAN,
    })?;
    debug_assert!(law.psi_prime(t0) > 0.0);
    Ok(t0)
}

/// Estimate of `q_esc = P(tau = inf)`.
#[derive(Debug, Clone, Copy)]
pub struct EscapeEstimate {
    pub estimate: Estimate,
    pub method: Method,
    /// Monte Carlo estimates are of `P(tau > cap)`, an upper bound on `q_esc`.
    pub upper_bound_proxy: bool,
}

pub fn escape_probability<R: Rng + ?Sized>(
    law: &StepLaw,
    cap: u64,
    n_samples: usize,
    rng: &mut R,
) -> Result<EscapeEstimate> {
    if cap == 0 || n_samples == 0 {
        return Err(CbrwError::InvalidArgument(
            "cap and n_samples must be positive".into(),
        ));
    }
    if law.is_zero_mean() {
        return Ok(EscapeEstimate {
            estimate: Estimate::exact(0.0),
            method: Method::ClosedForm,
            upper_bound_proxy: false,
        });
    }
    let samples = first_passage_samples(law, 0, &[0], cap, PassageMode::Return, n_samples, rng);
    let escaped = samples.iter().filter(|s| !s.hit).count();
    Ok(EscapeEstimate {
        estimate: proportion(escaped, n_samples),
        method: Method::MonteCarlo,
        upper_bound_proxy: true,
    })
}

/// Unique root in `[0, 1)` of `x = f(q_esc + x (1 - q_esc))`: the extinction
/// probability of a catalytic population started at the catalyst.
pub fn extinction_fixed_point(offspring: &OffspringLaw, q_esc: f64) -> Result<f64> {
    let growth = offspring.mean() * (1.0 - q_esc);
    if !(growth > 1.0) {
        return Err(CbrwError::Subcritical { growth });
    }
    let g = |x: f64| offspring.pgf(q_esc + x * (1.0 - q_esc)) - x;
    if g(0.0) <= 0.0 {
        return Ok(0.0);
    }
    // g < 0 just below 1 because g'(1) = m (1 - q_esc) - 1 > 0
    let mut hi = 0.5;
    while g(hi) >= 0.0 {
        hi = 0.5 * (1.0 + hi);
        if 1.0 - hi < 1e-15 {
            return Err(CbrwError::NoConvergence {
                what: "extinction bracket",
                iterations: crate::roots::MAX_ITER,
                residual: g(hi),
            });
        }
    }
    bisect(g, 0.0, hi, 1e-16).ok_or(CbrwError::NoConvergence {
        what: "extinction bisection",
        iterations: crate::roots::MAX_ITER,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn lazy() -> StepLaw {
        StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap()
    }

    /// Lazy walk with hold `h`: `E[s^tau] = s h + s (1 - h) f(s)` where `f`
    /// solves `f = s (h f + (1-h)/2 + (1-h)/2 f^2)`.
    fn lazy_laplace_oracle(h: f64, r: f64) -> f64 {
        let s = (-r).exp();
        let a = s * (1.0 - h) / 2.0;
        let b = s * h - 1.0;
        let f = (-b - (b * b - 4.0 * a * a).sqrt()) / (2.0 * a);
        s * h + s * (1.0 - h) * f
    }

    #[test]
    fn laplace_matches_simple_walk_closed_form() {
        let law = StepLaw::simple();
        let b = laplace_tau(&law, 0.11515, 1e-12).unwrap();
        assert!((b.value - simple_walk_laplace(0.11515)).abs() < 2e-12);
        assert!(b.error <= 1e-12);
        assert!((b.value - 1.0 / 1.83).abs() < 1e-4);
    }

    #[test]
    fn laplace_matches_lazy_quadratic_oracle() {
        let b = laplace_tau(&lazy(), 0.05, 1e-13).unwrap();
        let oracle = lazy_laplace_oracle(0.2, 0.05);
        assert!((oracle - 0.7232225092639606).abs() < 1e-12);
        assert!((b.value - oracle).abs() < 1e-12);
    }

    #[test]
    fn laplace_decreases_to_zero() {
        let law = lazy();
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.5, 1.0, 5.0, 20.0, 60.0] {
            let v = laplace_tau(&law, r, 1e-12).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
        assert!(matches!(
            laplace_tau(&law, 0.0, 1e-12),
            Err(CbrwError::InvalidRate(_))
        ));
    }

    #[test]
    fn malthusian_simple_walk_matches_printed_value() {
        let m = 1.83;
        let fit = solve_malthusian_for(&StepLaw::simple(), m).unwrap();
        let t0 = 0.5 * (2.0 * m - 1.0f64).ln();
        assert!((fit.r - (m.ln() - t0)).abs() < 1e-9);
        assert!((fit.r - 0.11515).abs() < 1e-4);
        assert!(fit.residual <= 1e-8);
    }

    #[test]
    fn malthusian_lazy_poisson_is_log_six_fifths() {
        let model = ModelSpec::single(lazy(), OffspringLaw::Poisson(2.0)).unwrap();
        let fit = solve_malthusian(&model).unwrap();
        let oracle = bisect(
            |r| 2.0 * lazy_laplace_oracle(0.2, r) - 1.0,
            0.01,
            0.69,
            1e-15,
        )
        .unwrap();
        assert!((fit.r - oracle).abs() < 1e-6);
        assert!((fit.r - 1.2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn critical_model_is_rejected() {
        let model = ModelSpec::single(StepLaw::simple(), OffspringLaw::Deterministic(1)).unwrap();
        assert!(matches!(
            solve_malthusian(&model),
            Err(CbrwError::Subcritical { .. })
        ));
    }

    #[test]
    fn green_quadrature_matches_dp() {
        let simple = StepLaw::new(&[(-1, 0.45), (1, 0.55)]).unwrap();
        let g = green_return_probability(&simple).unwrap();
        assert!((g.value - 0.9).abs() < 1e-11, "{g:?}");
        let wide = StepLaw::new(&[(-2, 0.05), (-1, 0.25), (0, 0.2), (1, 0.3), (2, 0.2)]).unwrap();
        let dp = return_probability(&wide).unwrap();
        assert_eq!(dp.method, Method::Dp);
        let g = green_return_probability(&wide).unwrap();
        assert!((g.value - dp.value).abs() < 1e-11, "{g:?} vs {dp:?}");
        // drift 1e-3: far beyond the DP horizon
        let slow = StepLaw::new(&[(-1, 0.4995), (1, 0.5005)]).unwrap();
        let ret = return_probability(&slow).unwrap();
        assert_eq!(ret.method, Method::Quadrature);
        assert!((ret.value - 0.999).abs() < 1e-11, "{ret:?}");
    }

    #[test]
    fn drifted_walk_escape_makes_small_m_subcritical() {
        // P(tau < inf) = 1 - |p - q| = 0.5 for the (0.75, 0.25) walk
        let law = StepLaw::new(&[(-1, 0.25), (1, 0.75)]).unwrap();
        let ret = return_probability(&law).unwrap();
        assert!((ret.value - 0.5).abs() < 1e-10, "{ret:?}");
        assert!(matches!(
            solve_malthusian_for(&law, 1.9),
            Err(CbrwError::Subcritical { .. })
        ));
        let fit = solve_malthusian_for(&law, 3.0).unwrap();
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn t0_examples() {
        let law = StepLaw::simple();
        let t0 = solve_t0(&law, 0.11515).unwrap();
        assert!((t0 - 0.48915).abs() < 2e-4);
        let r = 1f64.cosh().ln();
        assert!((solve_t0(&law, r).unwrap() - 1.0).abs() < 1e-12);
        let m = 1.83;
        let fit = solve_malthusian_for(&law, m).unwrap();
        let t0 = solve_t0(&law, fit.r).unwrap();
        let alpha = fit.r / t0;
        assert!((alpha - (2.0 * m.ln() / (2.0 * m - 1.0).ln() - 1.0)).abs() < 1e-9);
        assert!((alpha - 0.23541).abs() < 1e-4);
        assert!((t0.exp() - (2.0 * m - 1.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn escape_examples() {
        let mut rng = replica_rng(31, 0);
        let e = escape_probability(&StepLaw::simple(), 100, 10, &mut rng).unwrap();
        assert_eq!(e.estimate.mean, 0.0);
        assert_eq!(e.method, Method::ClosedForm);
        let law = StepLaw::new(&[(-1, 0.25), (1, 0.75)]).unwrap();
        let n = 10_000;
        let e = escape_probability(&law, 1000, n, &mut rng).unwrap();
        assert!(e.upper_bound_proxy);
        assert!(e.estimate.z_against_value(0.5).abs() < 4.0);
        assert!(e.estimate.ci95() <= 1.96 * 0.5 / 100.0 + 1e-12);
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(
            extinction_fixed_point(&OffspringLaw::Deterministic(2), 0.0).unwrap(),
            0.0
        );
        let s = extinction_fixed_point(&OffspringLaw::Poisson(2.0), 0.0).unwrap();
        assert!((s - 0.20318787).abs() < 1e-7);
        assert!(((2.0 * (s - 1.0)).exp() - s).abs() < 1e-12);
        let s = extinction_fixed_point(&OffspringLaw::Poisson(2.0), 0.25).unwrap();
        assert!((s - 0.41718).abs() < 1e-5);
        assert!(((1.5 * (s - 1.0)).exp() - s).abs() < 1e-12);
        assert!(extinction_fixed_point(&OffspringLaw::Poisson(2.0), 0.5).is_err());
    }
}
