use crate::calibrate::model::ModelSpec;
use crate::calibrate::Method;
use crate::error::{CbrwError, Result};
use crate::roots::{bisect, expand_until};
use crate::walk::lattice::{killed_resolvent, resolvent_margin};
use crate::walk::{SiteTable, StepLaw};

/// Window accuracy target for the killed resolvent.
const PHI_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Repr {
    /// `exp(-t0 |x - c|)`.
    Exponential { t0: f64 },
    /// Exact values on `[c - reach, c + reach]`, geometric tails outside.
    Table {
        table: SiteTable,
        rate_left: f64,
        rate_right: f64,
    },
}

/// `phi(x) = E_x[exp(-r T)]`, `T` the hitting time of a single catalyst `c`,
/// or the weighted version for a catalyst set (see [`Phi::from_targets`]).
#[derive(Debug, Clone)]
pub struct Phi {
    center: i64,
    repr: Repr,
}

/// Positive root of `psi(sign * t) = r`.
fn exponential_rate(law: &StepLaw, r: f64, sign: f64) -> Result<f64> {
    let f = |t: f64| law.psi(sign * t) - r;
    let hi = expand_until(1.0, |t| f(t) > 0.0).ok_or(CbrwError::NoConvergence {
        what: "phi decay bracket",
        iterations: crate::roots::MAX_ITER,
        residual: f64::NAN,
    })?;
    bisect(f, 0.0, hi, 1e-15).ok_or(CbrwError::NoConvergence {
        what: "phi decay rate",
        iterations: crate::roots::MAX_ITER,
        residual: f64::NAN,
    })
}

impl Phi {
    /// Closed form for nearest-neighbour symmetric walks, exact DP otherwise.
    pub fn new(law: &StepLaw, r: f64, center: i64) -> Result<Self> {
        if law.is_nearest_neighbor() && law.is_symmetric() {
            let t0 = exponential_rate(law, r, 1.0)?;
            return Ok(Phi {
                center,
                repr: Repr::Exponential { t0 },
            });
        }
        Phi::from_dp(law, r, center, 0)
    }

    /// Killed-lattice table covering at least `[c - reach, c + reach]`.
    pub fn from_dp(law: &StepLaw, r: f64, center: i64, reach: i64) -> Result<Self> {
        Phi::from_targets(law, r, &[(center, 1.0)], reach)
    }

    /// `E_x[exp(-r T_C) g(S_{T_C})]` for the target set `C` with values `g`,
    /// tabulated on `[min C - reach, max C + reach]`. The first target is
    /// reported as the center.
    pub fn from_targets(law: &StepLaw, r: f64, targets: &[(i64, f64)], reach: i64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(CbrwError::InvalidRate(r));
        }
        let (Some(first), Some(last)) = (
            targets.iter().map(|t| t.0).min(),
            targets.iter().map(|t| t.0).max(),
        ) else {
            return Err(CbrwError::InvalidArgument("no targets".into()));
        };
        let margin = resolvent_margin(law, r, PHI_TOL);
        let reach = reach.max(margin);
        let solved = killed_resolvent(
            law,
            targets,
            r,
            first - reach - margin,
            last + reach + margin,
        )?;
        let lo = first - reach;
        let start = (lo - solved.lo) as usize;
        let len = (last - first + 2 * reach + 1) as usize;
        let values = solved.values[start..start + len].to_vec();
        Ok(Phi {
            center: targets[0].0,
            repr: Repr::Table {
                table: SiteTable { lo, values },
                rate_left: exponential_rate(law, r, 1.0)?,
                rate_right: exponential_rate(law, r, -1.0)?,
            },
        })
    }

    pub fn for_model(model: &ModelSpec, r: f64) -> Result<Self> {
        let (c, _) = model.single_catalyst()?;
        Phi::new(model.walk(), r, c)
    }

    pub fn center(&self) -> i64 {
        self.center
    }

    pub fn method(&self) -> Method {
        match self.repr {
            Repr::Exponential { .. } => Method::ClosedForm,
            Repr::Table { .. } => Method::Dp,
        }
    }

    /// Bound on the absolute error inside the exact range.
    pub fn error_bound(&self) -> f64 {
        match self.repr {
            Repr::Exponential { .. } => 0.0,
            Repr::Table { .. } => PHI_TOL,
        }
    }

    pub fn eval(&self, x: i64) -> f64 {
        match &self.repr {
            Repr::Exponential { t0 } => (-t0 * (x - self.center).abs() as f64).exp(),
            Repr::Table {
                table,
                rate_left,
                rate_right,
            } => {
                if table.contains(x) {
                    table.get(x)
                } else if x > table.hi() {
                    table.get(table.hi()) * (-rate_right * (x - table.hi()) as f64).exp()
                } else {
                    table.get(table.lo) * (-rate_left * (table.lo - x) as f64).exp()
                }
            }
        }
    }
}

/// Largest relative violation of `P phi(x) = e^r phi(x) (1/m 1_{x=c} + 1_{x!=c})`
/// over `x` in `[c - half_width, c + half_width]`.
pub fn phi_eigen_residual(law: &StepLaw, r: f64, m: f64, phi: &Phi, half_width: i64) -> f64 {
    let c = phi.center();
    (c - half_width..=c + half_width)
        .map(|x| {
            let lhs: f64 = law.pairs().map(|(s, p)| p * phi.eval(x + s)).sum();
            let factor = if x == c { 1.0 / m } else { 1.0 };
            let rhs = r.exp() * phi.eval(x) * factor;
            ((lhs - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::malthus::{solve_malthusian_for, solve_t0};

    #[test]
    fn simple_walk_closed_form() {
        let m = 1.83;
        let r = solve_malthusian_for(&StepLaw::simple(), m).unwrap().r;
        let phi = Phi::new(&StepLaw::simple(), r, 0).unwrap();
        assert_eq!(phi.method(), Method::ClosedForm);
        assert_eq!(phi.eval(0), 1.0);
        assert!((phi.eval(1) - (-0.48915f64).exp()).abs() < 2e-4);
        assert!((phi.eval(1) - 0.61320).abs() < 1e-4);
        assert!((phi.eval(2) - phi.eval(1).powi(2)).abs() < 1e-15);
        assert!((phi.eval(2) - 0.37601).abs() < 1e-4);
        assert!(phi_eigen_residual(&StepLaw::simple(), r, m, &phi, 30) < 1e-12);
    }

    #[test]
    fn dp_reproduces_closed_form() {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        let r = 1.2f64.ln();
        let t0 = solve_t0(&law, r).unwrap();
        let dp = Phi::from_dp(&law, r, 3, 0).unwrap();
        for x in -60..=60 {
            let closed = (-t0 * (x - 3i64).abs() as f64).exp();
            assert!(
                (dp.eval(x) - closed).abs() <= 1e-12 + 1e-9 * closed,
                "x={x}"
            );
        }
        // far tail follows the same exponential
        let far = dp.eval(3 + 1000);
        assert!((far / (-t0 * 1000.0).exp() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn general_walk_satisfies_eigen_relation() {
        let law = StepLaw::new(&[(-1, 0.5), (2, 0.5)]).unwrap();
        let m = 2.5;
        let r = solve_malthusian_for(&law, m).unwrap().r;
        let phi = Phi::new(&law, r, 0).unwrap();
        assert_eq!(phi.method(), Method::Dp);
        assert_eq!(phi.eval(0), 1.0);
        for x in -40..=40 {
            let v = phi.eval(x);
            assert!(v > 0.0 && v <= 1.0);
        }
        assert!(phi_eigen_residual(&law, r, m, &phi, 40) < 1e-8);
    }
}
