//! Calibration of a catalytic model: Malthusian rate, speed, extinction,
//! `phi`, renewal limits and the fluctuation constant.

pub mod ladder;
pub mod malthus;
pub mod model;
pub mod offspring;
pub mod params;
pub mod phi;
pub mod renewal;

use std::fmt;

pub use ladder::{
    c_star, c_star_report, ladder_statistics, CStarInputs, CStarReport, CStarVariant, LadderStats,
};
pub use malthus::{
    escape_probability, extinction_fixed_point, laplace_tau, solve_malthusian,
    solve_malthusian_for, solve_t0, EscapeEstimate, MalthusianFit,
};
pub use model::ModelSpec;
pub use offspring::OffspringLaw;
pub use params::{derive_params, format_manifest, DerivedParams, ManifestEntry};
pub use phi::Phi;
pub use renewal::{
    occupation_constant_cx, solve_renewal, OccupationConstant, RenewalMode, RenewalSystem,
};

/// How a reported number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ClosedForm,
    Dp,
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Dp => "DP",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "MC",
        })
    }
}

/// A number with an error bound (deterministic bound, or one SE for MC).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
    pub method: Method,
}

impl Bounded {
    pub fn exact(value: f64, method: Method) -> Self {
        Bounded {
            value,
            error: 0.0,
            method,
        }
    }
}
