use std::fmt::Write as _;

use crate::calibrate::ladder::{c_h_closed, c_star_report, CStarInputs, CStarReport};
use crate::calibrate::malthus::{extinction_fixed_point, solve_malthusian, solve_t0};
use crate::calibrate::model::ModelSpec;
use crate::calibrate::phi::Phi;
use crate::calibrate::renewal::occupation_constant_origin;
use crate::calibrate::{Bounded, Method};
use crate::error::Result;
use crate::walk::lattice::ladder_height_law;
use crate::walk::{period, StepLaw};

/// Calibrated constants of a single-catalyst model.
#[derive(Debug, Clone)]
pub struct DerivedParams {
    pub catalyst: i64,
    pub m: f64,
    pub second_moment: f64,
    pub r: Bounded,
    pub t0: f64,
    pub alpha: f64,
    pub d: u64,
    pub q_esc: Bounded,
    pub extinction: f64,
    /// Occupation constant `d / (m E[tau exp(-r tau)])`.
    pub c0: Bounded,
    pub c_h: f64,
    /// `None` for periodic walks.
    pub c_star: Option<CStarReport>,
    pub e_h1: Bounded,
    pub e_t1: Bounded,
    pub e_s1_tilted: f64,
    pub phi: Phi,
}

/// Ladder mass left unresolved by the exact height DP.
const LADDER_MASS_TOL: f64 = 1e-14;

pub fn derive_params(model: &ModelSpec) -> Result<DerivedParams> {
    let (catalyst, offspring) = model.single_catalyst()?;
    let law = model.walk();
    let m = offspring.mean();
    let fit = solve_malthusian(model)?;
    let r = fit.r;
    let t0 = solve_t0(law, r)?;
    let d = period(law);
    let q_esc = Bounded {
        value: 1.0 - fit.return_probability.value,
        error: fit.return_probability.error,
        method: fit.return_probability.method,
    };
    let extinction = extinction_fixed_point(offspring, q_esc.value)?;
    let (c0, c0_err) = occupation_constant_origin(law, r, m)?;
    let tilted = law.tilt(t0);
    let (e_h1, e_t1) = tilted_ladder_means(&tilted)?;
    let c_star = if d == 1 {
        Some(c_star_report(&CStarInputs {
            t0,
            e_h1: e_h1.value,
            c0,
            m,
            period: d,
        })?)
    } else {
        None
    };
    Ok(DerivedParams {
        catalyst,
        m,
        second_moment: offspring.second_moment(),
        r: Bounded {
            value: r,
            error: fit.laplace_error + 1e-15,
            method: Method::Dp,
        },
        t0,
        alpha: r / t0,
        d,
        q_esc,
        extinction,
        c0: Bounded {
            value: c0,
            error: c0_err,
            method: Method::Dp,
        },
        c_h: c_h_closed(t0, e_h1.value),
        c_star,
        e_h1,
        e_t1,
        e_s1_tilted: tilted.mean(),
        phi: Phi::new(law, r, catalyst)?,
    })
}

/// `(E_H1, E_T1)` of the ascending ladder of a positive-drift walk, exact
/// (closed form for upward-skip-free walks, DP otherwise); `E_T1` by Wald.
pub fn tilted_ladder_means(tilted: &StepLaw) -> Result<(Bounded, Bounded)> {
    let mean = tilted.mean();
    if tilted.max_step() == 1 {
        return Ok((
            Bounded::exact(1.0, Method::ClosedForm),
            Bounded::exact(1.0 / mean, Method::ClosedForm),
        ));
    }
    let ladder = ladder_height_law(tilted, 1 << 20, LADDER_MASS_TOL)?;
    let h = ladder.mean_height();
    let err = ladder.unabsorbed * tilted.max_step() as f64;
    Ok((
        Bounded {
            value: h,
            error: err,
            method: Method::Dp,
        },
        Bounded {
            value: h / mean,
            error: err / mean,
            method: Method::Dp,
        },
    ))
}

impl DerivedParams {
    /// Structural consequences of the calibration; `(name, holds)` pairs.
    pub fn invariant_checks(&self, law: &StepLaw) -> Vec<(&'static str, bool)> {
        let phi_at = |x: i64| self.phi.eval(self.catalyst + x);
        vec![
            (
                "psi(t0) = r",
                (law.psi(self.t0) - self.r.value).abs() <= 1e-9,
            ),
            (
                "alpha = psi(t0)/t0",
                (self.alpha - law.psi(self.t0) / self.t0).abs() <= 1e-12,
            ),
            ("mean < alpha", law.mean() < self.alpha),
            ("alpha < psi'(t0)", self.alpha < law.psi_prime(self.t0)),
            ("phi(catalyst) = 1", (phi_at(0) - 1.0).abs() <= 1e-12),
            (
                "0 < phi <= 1",
                (-50..=50).all(|x| {
                    let v = phi_at(x);
                    v > 0.0 && v <= 1.0 + 1e-12
                }),
            ),
        ]
    }

    /// Manifest entries `(key, value, method, error)`.
    pub fn manifest_entries(&self) -> Vec<ManifestEntry> {
        let mut out = vec![
            ManifestEntry::new("m", Bounded::exact(self.m, Method::ClosedForm)),
            ManifestEntry::new(
                "E_N2",
                Bounded::exact(self.second_moment, Method::ClosedForm),
            ),
            ManifestEntry::new("r", self.r),
            ManifestEntry::new(
                "t0",
                Bounded {
                    value: self.t0,
                    error: 1e-15,
                    method: Method::Dp,
                },
            ),
            ManifestEntry::new(
                "alpha",
                Bounded {
                    value: self.alpha,
                    error: 1e-14,
                    method: Method::Dp,
                },
            ),
            ManifestEntry::new("d", Bounded::exact(self.d as f64, Method::Dp)),
            ManifestEntry::new("q_esc", self.q_esc),
            ManifestEntry::new(
                "extinction",
                Bounded {
                    value: self.extinction,
                    error: 1e-12,
                    method: self.q_esc.method,
                },
            ),
            ManifestEntry::new("c0", self.c0),
            ManifestEntry::new(
                "c0_d_over_m",
                Bounded::exact(self.d as f64 / self.m, Method::ClosedForm),
            ),
            ManifestEntry::new(
                "c_H",
                Bounded {
                    value: self.c_h,
                    error: self.e_h1.error,
                    method: self.e_h1.method,
                },
            ),
            ManifestEntry::new("E_H1", self.e_h1),
            ManifestEntry::new("E_T1", self.e_t1),
            ManifestEntry::new(
                "E_S1_tilted",
                Bounded::exact(self.e_s1_tilted, Method::ClosedForm),
            ),
            ManifestEntry::new(
                "phi_1",
                Bounded {
                    value: self.phi.eval(self.catalyst + 1),
                    error: self.phi.error_bound(),
                    method: self.phi.method(),
                },
            ),
        ];
        if let Some(cs) = &self.c_star {
            out.push(ManifestEntry::new(
                "c_star_closed_A",
                Bounded {
                    value: cs.closed_a,
                    error: self.e_h1.error,
                    method: Method::ClosedForm,
                },
            ));
            out.push(ManifestEntry::new(
                "c_star_closed_B",
                Bounded {
                    value: cs.closed_b,
                    error: self.e_h1.error,
                    method: Method::ClosedForm,
                },
            ));
            out.push(ManifestEntry::new(
                "c_star_series",
                Bounded {
                    value: cs.series,
                    error: self.c0.error + self.e_h1.error,
                    method: Method::Dp,
                },
            ));
            out.push(ManifestEntry::new(
                "c_H_identity_gap",
                Bounded::exact(cs.c_h_identity_gap, Method::ClosedForm),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub key: String,
    pub value: Bounded,
}

impl ManifestEntry {
    pub fn new(key: &str, value: Bounded) -> Self {
        ManifestEntry {
            key: key.to_string(),
            value,
        }
    }

    /// `key = value method=TAG error=BOUND`.
    pub fn line(&self) -> String {
        let v = self.value.value;
        let value = if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
            format!("{v:e}")
        } else {
            v.to_string()
        };
        format!(
            "{} = {value} method={} error={:e}",
            self.key, self.value.method, self.value.error
        )
    }
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}", e.line());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::offspring::OffspringLaw;

    fn lazy_model() -> ModelSpec {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        ModelSpec::single(law, OffspringLaw::Poisson(2.0)).unwrap()
    }

    #[test]
    fn lazy_poisson_constants() {
        let model = lazy_model();
        let p = derive_params(&model).unwrap();
        assert!((p.r.value - 1.2f64.ln()).abs() < 1e-10);
        assert!((p.t0 - 2f64.ln()).abs() < 1e-10);
        assert!((p.alpha - 0.2630344058).abs() < 1e-9);
        assert_eq!(p.d, 1);
        assert_eq!(p.q_esc.value, 0.0);
        assert!((p.extinction - 0.20318787).abs() < 1e-7);
        assert!((p.c0.value - 3.0 / 7.0).abs() < 1e-10);
        assert_eq!(p.e_h1.value, 1.0);
        assert!((p.e_t1.value - 2.0).abs() < 1e-10);
        let cs = p.c_star.unwrap();
        assert!((cs.closed_a - 1.0).abs() < 1e-9);
        assert!((cs.closed_b - 0.5).abs() < 1e-9);
        assert!((cs.series - 6.0 / 7.0).abs() < 1e-9);
        for (name, ok) in p.invariant_checks(model.walk()) {
            assert!(ok, "{name}");
        }
    }

    #[test]
    fn simple_walk_is_periodic_and_has_no_c_star() {
        let model = ModelSpec::single(
            StepLaw::simple(),
            OffspringLaw::Empirical(vec![0.0, 0.17, 0.83]),
        )
        .unwrap();
        let p = derive_params(&model).unwrap();
        assert_eq!(p.d, 2);
        assert!(p.c_star.is_none());
        assert!((p.alpha - 0.2354).abs() < 1e-4);
    }

    #[test]
    fn manifest_lines_are_flat_key_values() {
        let p = derive_params(&lazy_model()).unwrap();
        let text = format_manifest(&p.manifest_entries());
        for line in text.lines() {
            let (key, rest) = line.split_once(" = ").unwrap();
            assert!(!key.contains(' '));
            let mut parts = rest.split(' ');
            parts.next().unwrap().parse::<f64>().unwrap();
            assert!(parts.next().unwrap().starts_with("method="));
            assert!(parts.next().unwrap().starts_with("error="));
        }
        assert!(text.contains("alpha = 0.26303440"));
    }
}
