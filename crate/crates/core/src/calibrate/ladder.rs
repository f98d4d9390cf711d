use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{CbrwError, Result};
use crate::stats::{Estimate, MeanVar};
use crate::walk::StepLaw;

/// Initial step cap per ladder sample; doubled on each overrun.
const INITIAL_CAP: u64 = 10_000;

/// Monte Carlo ladder statistics of a walk with positive drift.
#[derive(Debug, Clone, Copy)]
pub struct LadderStats {
    pub e_h1: Estimate,
    pub e_t1: Estimate,
    /// Exact mean step of the law.
    pub e_s1: f64,
    /// `(E_H1 - E_S1 E_T1) / combined SE`.
    pub wald_z: f64,
    /// Samples redrawn with a doubled cap.
    pub resampled: usize,
}

/// Samples the first strict ascending ladder epoch `T_1` and height
/// `H_1 = S_{T_1}`. A path that has not ascended by the cap is redrawn with
/// twice the cap, never dropped.
pub fn ladder_statistics<R: Rng + ?Sized>(
    tilted: &StepLaw,
    n_samples: usize,
    rng: &mut R,
) -> Result<LadderStats> {
    let e_s1 = tilted.mean();
    if !(e_s1 > 0.0) {
        return Err(CbrwError::InvalidArgument(format!(
            "ladder statistics need a positive mean step, got {e_s1}"
        )));
    }
    let mut heights = MeanVar::new();
    let mut epochs = MeanVar::new();
    let mut resampled = 0;
    for _ in 0..n_samples {
        let mut cap = INITIAL_CAP;
        let (t, h) = loop {
            let mut x = 0i64;
            let mut hit = None;
            for t in 1..=cap {
                x += tilted.sample(rng);
                if x > 0 {
                    hit = Some((t, x));
                    break;
                }
            }
            match hit {
                Some(v) => break v,
                None => {
                    resampled += 1;
                    cap *= 2;
                }
            }
        };
        heights.push(h as f64);
        epochs.push(t as f64);
    }
    let e_h1 = heights.estimate();
    let e_t1 = epochs.estimate();
    let se = (e_h1.se.powi(2) + (e_s1 * e_t1.se).powi(2)).sqrt();
    let diff = e_h1.mean - e_s1 * e_t1.mean;
    Ok(LadderStats {
        e_h1,
        e_t1,
        e_s1,
        wald_z: if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        },
        resampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CStarVariant {
    /// `c_0 m sum_j exp(-t0 j) (1 - exp(-t0)) j / E_H1`, with the occupation
    /// constant `c_0` computed, not assumed.
    Series,
    /// `exp(-t0) / ((1 - exp(-t0)) E_H1)`.
    ClosedA,
    /// `exp(-2 t0) / ((1 - exp(-t0)) E_H1)`.
    ClosedB,
}

impl CStarVariant {
    pub const ALL: [CStarVariant; 3] = [
        CStarVariant::ClosedA,
        CStarVariant::ClosedB,
        CStarVariant::Series,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CStarVariant::Series => "series",
            CStarVariant::ClosedA => "closed-A",
            CStarVariant::ClosedB => "closed-B",
        }
    }
}

impl fmt::Display for CStarVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CStarVariant {
    type Err = CbrwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(CStarVariant::Series),
            "closed-A" | "closed-a" | "A" => Ok(CStarVariant::ClosedA),
            "closed-B" | "closed-b" | "B" => Ok(CStarVariant::ClosedB),
            other => Err(CbrwError::InvalidArgument(format!(
                "unknown c* variant `{other}`"
            ))),
        }
    }
}

/// `c_H = sum_{j >= 1} exp(-t0 j) (1 - exp(-t0)) j / E_H1`, summed term by term.
pub fn c_h_series(t0: f64, e_h1: f64) -> f64 {
    let x = (-t0).exp();
    let mut total = 0.0;
    let mut term_pow = x;
    let mut j = 1.0;
    loop {
        let term = term_pow * j;
        total += term;
        if term < 1e-18 * total || j > 1e7 {
            break;
        }
        term_pow *= x;
        j += 1.0;
    }
    total * (1.0 - x) / e_h1
}

/// `exp(-t0) / ((1 - exp(-t0)) E_H1)`.
pub fn c_h_closed(t0: f64, e_h1: f64) -> f64 {
    let x = (-t0).exp();
    x / ((1.0 - x) * e_h1)
}

/// Inputs shared by every c* variant.
#[derive(Debug, Clone, Copy)]
pub struct CStarInputs {
    pub t0: f64,
    pub e_h1: f64,
    pub c0: f64,
    pub m: f64,
    pub period: u64,
}

pub fn c_star(inputs: &CStarInputs, variant: CStarVariant) -> Result<f64> {
    if inputs.period != 1 {
        return Err(CbrwError::UnsupportedPeriod {
            period: inputs.period,
        });
    }
    let CStarInputs {
        t0, e_h1, c0, m, ..
    } = *inputs;
    let x = (-t0).exp();
    Ok(match variant {
        CStarVariant::Series => c0 * m * c_h_series(t0, e_h1),
        CStarVariant::ClosedA => x / ((1.0 - x) * e_h1),
        CStarVariant::ClosedB => x * x / ((1.0 - x) * e_h1),
    })
}

/// All variants side by side with the internal consistency figures.
#[derive(Debug, Clone, Copy)]
pub struct CStarReport {
    pub series: f64,
    pub closed_a: f64,
    pub closed_b: f64,
    /// `|c_H(series) - c_H(closed)|`; zero up to rounding by the geometric identity.
    pub c_h_identity_gap: f64,
    /// `c_0 m`; equals 1 exactly when `c_0 = d/m`.
    pub c0_m: f64,
    /// `closed_b / closed_a = exp(-t0)`.
    pub b_over_a: f64,
}

impl CStarReport {
    pub fn value(&self, variant: CStarVariant) -> f64 {
        match variant {
            CStarVariant::Series => self.series,
            CStarVariant::ClosedA => self.closed_a,
            CStarVariant::ClosedB => self.closed_b,
        }
    }
}

pub fn c_star_report(inputs: &CStarInputs) -> Result<CStarReport> {
    let series = c_star(inputs, CStarVariant::Series)?;
    let closed_a = c_star(inputs, CStarVariant::ClosedA)?;
    let closed_b = c_star(inputs, CStarVariant::ClosedB)?;
    Ok(CStarReport {
        series,
        closed_a,
        closed_b,
        c_h_identity_gap: (c_h_series(inputs.t0, inputs.e_h1) - c_h_closed(inputs.t0, inputs.e_h1))
            .abs(),
        c0_m: inputs.c0 * inputs.m,
        b_over_a: closed_b / closed_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::walk::lattice::ladder_height_law;
    use proptest::prelude::*;

    #[test]
    fn nearest_neighbour_heights_are_one() {
        let law = StepLaw::new(&[(-1, 0.3), (0, 0.2), (1, 0.5)]).unwrap();
        let stats = ladder_statistics(&law, 5_000, &mut replica_rng(41, 0)).unwrap();
        assert_eq!(stats.e_h1.mean, 1.0);
        assert_eq!(stats.e_h1.se, 0.0);
    }

    #[test]
    fn tilted_simple_walk_wald() {
        let t0 = 0.48915f64;
        let tilted = StepLaw::simple().tilt(t0);
        assert!((tilted.prob(1) - 0.7268).abs() < 1e-4);
        let stats = ladder_statistics(&tilted, 40_000, &mut replica_rng(42, 0)).unwrap();
        let wald_t1 = 1.0 / t0.tanh();
        assert!((wald_t1 - 2.2046).abs() < 2e-3);
        assert!(stats.e_t1.z_against_value(wald_t1).abs() < 4.0);
        assert!(stats.wald_z.abs() < 3.0 || stats.e_h1.se == 0.0);
    }

    #[test]
    fn skip_walk_heights_match_exact_dp() {
        let law = StepLaw::new(&[(-1, 0.5), (2, 0.5)]).unwrap();
        let exact = ladder_height_law(&law, 30, 0.0).unwrap();
        let dp = ladder_height_law(&law, 4000, 1e-15).unwrap();
        let stats = ladder_statistics(&law, 50_000, &mut replica_rng(43, 0)).unwrap();
        let h = dp.mean_height();
        assert!(h > 1.0 && h < 2.0);
        // truncation at 30 steps already pins most of the mass
        assert!(exact.mean_height() <= h + 1e-12);
        assert!(stats.e_h1.z_against_value(h).abs() < 4.0);
        assert!(stats.wald_z.abs() < 3.0);
    }

    #[test]
    fn lazy_closed_a_value() {
        let t0 = 2f64.ln();
        let inputs = CStarInputs {
            t0,
            e_h1: 1.0,
            c0: 0.5,
            m: 2.0,
            period: 1,
        };
        let rep = c_star_report(&inputs).unwrap();
        assert!((rep.closed_a - 1.0).abs() < 1e-15);
        assert!((rep.closed_b - 0.5).abs() < 1e-15);
        assert!((rep.series - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_walk_is_unsupported() {
        let inputs = CStarInputs {
            t0: 0.5,
            e_h1: 1.0,
            c0: 1.0,
            m: 2.0,
            period: 2,
        };
        assert!(matches!(
            c_star(&inputs, CStarVariant::ClosedA),
            Err(CbrwError::UnsupportedPeriod { period: 2 })
        ));
    }

    #[test]
    fn variants_vanish_as_t0_grows() {
        for v in CStarVariant::ALL {
            let inputs = CStarInputs {
                t0: 60.0,
                e_h1: 1.3,
                c0: 0.4,
                m: 2.0,
                period: 1,
            };
            assert!(c_star(&inputs, v).unwrap() < 1e-25);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in CStarVariant::ALL {
            assert_eq!(v.name().parse::<CStarVariant>().unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn series_c_h_equals_closed(t0 in 0.05f64..20.0, e_h1 in 1.0f64..5.0) {
            let s = c_h_series(t0, e_h1);
            let c = c_h_closed(t0, e_h1);
            prop_assert!((s - c).abs() <= 1e-12 * c.max(1.0));
        }
    }
}
