use crate::calibrate::{CStarVariant, DerivedParams, ModelSpec};
use crate::engine::ensemble::par_replicas;
use crate::engine::run::{simulate, Caps, LambdaWeights};
use crate::error::{CbrwError, Result};
use crate::stats::{Estimate, MeanVar};

/// `floor(alpha n + y)` and `{alpha n + y}` with the product `alpha n`
/// carried as an unevaluated sum (FMA two-product), so the fractional part
/// keeps full precision for large `n`.
pub fn floor_frac(alpha: f64, n: u64, y: f64) -> (i64, f64) {
    let nf = n as f64;
    let p = alpha * nf;
    let p_err = alpha.mul_add(nf, -p);
    // two-sum p + y
    let s = p + y;
    let bb = s - p;
    let s_err = (p - (s - bb)) + (y - bb);
    let fl = s.floor();
    let mut frac = (s - fl) + (p_err + s_err);
    let mut fl = fl as i64;
    if frac < 0.0 {
        fl -= 1;
        frac += 1.0;
    } else if frac >= 1.0 {
        fl += 1;
        frac -= 1.0;
    }
    (fl, frac)
}

/// Horizon used for `Lambda_infinity` when looking at generation `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaHorizon {
    /// `k = n / 2`.
    Half,
    Fixed(usize),
}

impl LambdaHorizon {
    pub fn at(self, n: usize) -> usize {
        match self {
            LambdaHorizon::Half => n / 2,
            LambdaHorizon::Fixed(k) => k.min(n),
        }
    }
}

/// Per replica: `M_n` at each requested `n` and `Lambda_{k(n)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSample {
    pub max: Vec<Option<i64>>,
    pub lambda: Vec<f64>,
    pub truncated: bool,
}

/// Shared settings for the tail experiments.
#[derive(Debug, Clone)]
pub struct TailSetup {
    pub replicas: usize,
    pub base_seed: u64,
    pub threads: usize,
    pub horizon: LambdaHorizon,
    pub caps: Caps,
}

fn check_hypotheses(params: &DerivedParams) -> Result<()> {
    if params.d != 1 || params.c_star.is_none() {
        return Err(CbrwError::UnsupportedPeriod { period: params.d });
    }
    if !params.second_moment.is_finite() {
        return Err(CbrwError::InfiniteSecondMoment);
    }
    Ok(())
}

/// Simulates `setup.replicas` runs up to `max(ns)`, keeping only `M_n` for
/// `n` in `ns` and the matching `Lambda_{k(n)}`.
pub fn tail_samples(
    model: &ModelSpec,
    params: &DerivedParams,
    ns: &[usize],
    setup: &TailSetup,
) -> Vec<TailSample> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let weights = LambdaWeights::for_model(model, params.r.value, n_max, |x| params.phi.eval(x));
    let ks: Vec<usize> = ns.iter().map(|&n| setup.horizon.at(n)).collect();
    par_replicas(setup.replicas, setup.base_seed, setup.threads, |_, rng| {
        let mut sample = TailSample {
            max: vec![None; ns.len()],
            lambda: vec![0.0; ns.len()],
            truncated: false,
        };
        let outcome = simulate(model, n_max, Some(&weights), setup.caps, rng, |obs| {
            let g = obs.n as usize;
            for (j, &n) in ns.iter().enumerate() {
                if n == g {
                    sample.max[j] = obs.max();
                }
                if ks[j] == g {
                    sample.lambda[j] = obs.lambda.unwrap_or(0.0);
                }
            }
        });
        sample.truncated = outcome.truncated_at.is_some_and(|t| (t as usize) < n_max);
        sample
    })
}

/// `1 - exp(-c e^{-t0 y} e^{t0 frac} lambda)`.
pub fn tail_model(c: f64, t0: f64, y: f64, frac: f64, lambda: f64) -> f64 {
    -(-c * (t0 * (frac - y)).exp() * lambda).exp_m1()
}

#[derive(Debug, Clone)]
pub struct TailRow {
    pub n: usize,
    pub y: f64,
    pub frac: f64,
    pub p_emp: Estimate,
    /// Model side per variant, in [`CStarVariant::ALL`] order.
    pub p_model: Vec<Estimate>,
    /// `|p_emp - p_model| / sqrt(se_emp^2 + se_model^2)` per variant.
    pub z: Vec<f64>,
}

impl TailRow {
    pub fn model(&self, v: CStarVariant) -> &Estimate {
        &self.p_model[variant_index(v)]
    }
}

fn variant_index(v: CStarVariant) -> usize {
    CStarVariant::ALL.iter().position(|&w| w == v).unwrap()
}

/// `e^{t0 y} P(M_n > alpha n + y)` across the grid at one `n`.
#[derive(Debug, Clone)]
pub struct UniformBound {
    pub n: usize,
    pub scaled: Vec<f64>,
    /// `max(scaled) / scaled[0]`.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct VariantVerdict {
    pub variant: CStarVariant,
    pub c_star: f64,
    pub max_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FluctuationReport {
    pub replicas: usize,
    pub truncated: usize,
    pub z_tolerance: f64,
    pub rows: Vec<TailRow>,
    pub bounds: Vec<UniformBound>,
    pub verdicts: Vec<VariantVerdict>,
    /// Passing variant with the smallest worst-case `z`.
    pub adjudicated: Option<CStarVariant>,
}

impl FluctuationReport {
    pub fn pass(&self) -> bool {
        self.truncated == 0 && self.adjudicated.is_some() && self.bounds.iter().all(|b| b.pass)
    }
}

/// Ratio allowed between the largest `e^{t0 y} P` on the grid and its first entry.
pub const UNIFORM_BOUND_FACTOR: f64 = 2.0;

/// Empirical `P(M_n > alpha n + y)` against the model tail for every `c*`
/// variant. Probabilities are unconditional (extinct runs count as misses
/// on the left and contribute `Lambda = 0` on the right).
pub fn fluctuation_experiment(
    model: &ModelSpec,
    params: &DerivedParams,
    n_list: &[usize],
    y_grid: &[f64],
    setup: &TailSetup,
    z_tolerance: f64,
) -> Result<FluctuationReport> {
    check_hypotheses(params)?;
    if n_list.is_empty() || y_grid.is_empty() || setup.replicas < 2 {
        return Err(CbrwError::InvalidArgument(
            "fluctuation needs a non-empty n list, y grid and at least 2 replicas".into(),
        ));
    }
    let report = params.c_star.as_ref().unwrap();
    let cs: Vec<f64> = CStarVariant::ALL.iter().map(|&v| report.value(v)).collect();
    let samples = tail_samples(model, params, n_list, setup);
    let truncated = samples.iter().filter(|s| s.truncated).count();
    let t0 = params.t0;

    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for (j, &n) in n_list.iter().enumerate() {
        let mut scaled = Vec::with_capacity(y_grid.len());
        for &y in y_grid {
            let (fl, frac) = floor_frac(params.alpha, n as u64, y);
            let p_emp: MeanVar = samples
                .iter()
                .map(|s| match s.max[j] {
                    Some(m) if m > fl => 1.0,
                    _ => 0.0,
                })
                .collect();
            let p_emp = p_emp.estimate();
            let p_model: Vec<Estimate> = cs
                .iter()
                .map(|&c| {
                    samples
                        .iter()
                        .map(|s| tail_model(c, t0, y, frac, s.lambda[j]))
                        .collect::<MeanVar>()
                        .estimate()
                })
                .collect();
            let z = p_model.iter().map(|pm| p_emp.z_against(pm)).collect();
            scaled.push((t0 * y).exp() * p_emp.mean);
            rows.push(TailRow {
                n,
                y,
                frac,
                p_emp,
                p_model,
                z,
            });
        }
        let max = scaled.iter().copied().fold(0.0, f64::max);
        let ratio = max / scaled[0];
        bounds.push(UniformBound {
            n,
            ratio,
            pass: ratio <= UNIFORM_BOUND_FACTOR,
            scaled,
        });
    }

    let verdicts: Vec<VariantVerdict> = CStarVariant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let max_z = rows.iter().map(|r| r.z[i]).fold(0.0, f64::max);
            VariantVerdict {
                variant,
                c_star: cs[i],
                max_z,
                pass: max_z <= z_tolerance,
            }
        })
        .collect();
    let adjudicated = verdicts
        .iter()
        .filter(|v| v.pass)
        .min_by(|a, b| a.max_z.total_cmp(&b.max_z))
        .map(|v| v.variant);
    Ok(FluctuationReport {
        replicas: setup.replicas,
        truncated,
        z_tolerance,
        rows,
        bounds,
        verdicts,
        adjudicated,
    })
}

/// Generations in `lo..=hi` whose `{alpha n}` lies within `tol` of `s`
/// (distance taken on the circle).
pub fn select_subsequence(
    alpha: f64,
    lo: usize,
    hi: usize,
    s: f64,
    tol: f64,
) -> Result<Vec<usize>> {
    let picked: Vec<usize> = (lo..=hi)
        .filter(|&n| {
            let (_, f) = floor_frac(alpha, n as u64, 0.0);
            let d = (f - s).abs();
            d.min(1.0 - d) <= tol
        })
        .collect();
    if picked.is_empty() {
        return Err(CbrwError::EmptySelection { target: s, tol });
    }
    Ok(picked)
}

/// `E[exp(-c e^{-t0(y-s)} L) - exp(-c e^{-t0(y-1-s)} L)]` integrand.
pub fn pmf_model(c: f64, t0: f64, y: i64, s: f64, lambda: f64) -> f64 {
    let yf = y as f64;
    (-c * (-t0 * (yf - s)).exp() * lambda).exp()
        - (-c * (-t0 * (yf - 1.0 - s)).exp() * lambda).exp()
}

#[derive(Debug, Clone)]
pub struct PmfRow {
    pub y: i64,
    pub p_emp: Estimate,
    pub p_model: Vec<Estimate>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PmfTable {
    pub selected: Vec<usize>,
    pub rows: Vec<PmfRow>,
    /// Row with the largest empirical mass.
    pub mode: usize,
    pub truncated: usize,
}

impl PmfTable {
    pub fn mode_row(&self) -> &PmfRow {
        &self.rows[self.mode]
    }
}

/// Law of `M_n - floor(alpha n)` along the generations selected by
/// [`select_subsequence`]. Each replica contributes its average over the
/// selected `n`, so the standard errors are across independent replicas.
pub fn subsequence_pmf_table(
    model: &ModelSpec,
    params: &DerivedParams,
    selected: &[usize],
    y_grid: &[i64],
    setup: &TailSetup,
) -> Result<PmfTable> {
    check_hypotheses(params)?;
    if selected.is_empty() {
        return Err(CbrwError::InvalidArgument("empty subsequence".into()));
    }
    let report = params.c_star.as_ref().unwrap();
    let cs: Vec<f64> = CStarVariant::ALL.iter().map(|&v| report.value(v)).collect();
    let samples = tail_samples(model, params, selected, setup);
    let t0 = params.t0;
    let floors: Vec<(i64, f64)> = selected
        .iter()
        .map(|&n| floor_frac(params.alpha, n as u64, 0.0))
        .collect();
    let k = selected.len() as f64;
    let mut rows = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let p_emp: MeanVar = samples
            .iter()
            .map(|s| {
                let hits = floors
                    .iter()
                    .zip(&s.max)
                    .filter(|((fl, _), m)| m.is_some_and(|m| m - fl == y))
                    .count();
                hits as f64 / k
            })
            .collect();
        let p_emp = p_emp.estimate();
        let p_model: Vec<Estimate> = cs
            .iter()
            .map(|&c| {
                samples
                    .iter()
                    .map(|s| {
                        floors
                            .iter()
                            .zip(&s.lambda)
                            .map(|((_, frac), &l)| pmf_model(c, t0, y, *frac, l))
                            .sum::<f64>()
                            / k
                    })
                    .collect::<MeanVar>()
                    .estimate()
            })
            .collect();
        let z = p_model.iter().map(|pm| p_emp.z_against(pm)).collect();
        rows.push(PmfRow {
            y,
            p_emp,
            p_model,
            z,
        });
    }
    let mode = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.p_emp.mean.total_cmp(&b.1.p_emp.mean))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(PmfTable {
        selected: selected.to_vec(),
        rows,
        mode,
        truncated: samples.iter().filter(|s| s.truncated).count(),
    })
}
