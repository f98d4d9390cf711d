//! The six experiments. Each one writes its tables and plots, fills the
//! manifest and returns the pass/fail rows that end up in `verify.csv`.

use anyhow::Result;
use cbrw_core::calibrate::phi::phi_eigen_residual;
use cbrw_core::calibrate::{
    ladder_statistics, laplace_tau, solve_malthusian_for, solve_t0, CStarVariant, Method, Phi,
};
use cbrw_core::engine::{
    ensemble, expectation_dp, fluctuation_experiment, occupation_profile_check, select_subsequence,
    subsequence_pmf_table, LambdaWeights, TailSetup,
};
use cbrw_core::multi::{
    lambda_means, lln_check, phi_multi, phi_multi_residual, solve_malthusian_multi, MultiFit,
};
use cbrw_core::rng::salted_rng;
use cbrw_core::spine::{
    decoupling_check, delta_martingale_check, many_to_one_check, second_moment_check, VerifyRow,
};
use cbrw_core::stats::Estimate;
use cbrw_core::{derive_params, DerivedParams, ModelSpec};

use crate::config::{Kind, Resolved};
use crate::output::{num, Manifest, Output};
use crate::svg::{Band, Plot, Series};

/// Half-width of the exact `phi` table around the catalyst set.
const PHI_REACH: i64 = 64;

/// Distinct streams for the independent Monte Carlo parts of one command.
fn sub_seed(seed: u64, part: u64) -> u64 {
    seed ^ part.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Rates and `phi` of the configured model, single or multiple catalysts.
struct Calibration {
    r: f64,
    t0: f64,
    alpha: f64,
    phi: Phi,
    single: Option<DerivedParams>,
    multi: Option<MultiFit>,
}

impl Calibration {
    fn of(model: &ModelSpec) -> Result<Self> {
        if model.is_single() {
            let p = derive_params(model)?;
            Ok(Calibration {
                r: p.r.value,
                t0: p.t0,
                alpha: p.alpha,
                phi: p.phi.clone(),
                single: Some(p),
                multi: None,
            })
        } else {
            let fit = solve_malthusian_multi(model)?;
            let t0 = solve_t0(model.walk(), fit.r)?;
            let phi = phi_multi(model, fit.r, fit.v(), PHI_REACH)?;
            Ok(Calibration {
                r: fit.r,
                t0,
                alpha: fit.r / t0,
                phi,
                single: None,
                multi: Some(fit),
            })
        }
    }

    fn record(&self, man: &mut Manifest) {
        if let Some(p) = &self.single {
            for e in p.manifest_entries() {
                man.entry(&e);
            }
        }
        if let Some(fit) = &self.multi {
            man.bounded("r", fit.r, Method::Dp, fit.matrix.error.max(1e-15));
            man.bounded("t0", self.t0, Method::Dp, 1e-15);
            man.bounded("alpha", self.alpha, Method::Dp, 1e-14);
            man.bounded(
                "perron_rho",
                fit.perron.rho,
                Method::Dp,
                fit.perron.residual,
            );
            man.bounded("perron_residual", fit.perron.residual, Method::Dp, 0.0);
            for (site, v) in fit.matrix.sites.iter().zip(fit.v()) {
                man.bounded(&format!("v[{site}]"), *v, Method::Dp, fit.perron.residual);
            }
            for (i, row) in fit.matrix.entries.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    let (a, b) = (fit.matrix.sites[i], fit.matrix.sites[j]);
                    man.bounded(&format!("M_r[{a},{b}]"), *e, Method::Dp, fit.matrix.error);
                }
            }
        }
    }
}

pub fn run(ctx: &Resolved, out: &Output, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    match ctx.kind {
        Kind::Params => params(ctx, man),
        Kind::Lln => lln(ctx, out, man),
        Kind::Fluctuation => fluctuation(ctx, out, man),
        Kind::Verify => verify(ctx, man),
        Kind::Multicat => multicat(ctx, out, man),
        Kind::Expectation => expectation(ctx, out, man),
    }
}

fn bool_row(name: &str, holds: bool) -> VerifyRow {
    let v = if holds { 1.0 } else { 0.0 };
    VerifyRow::new(name, 0, v, 1.0, 1.0 - v, 0.0)
}

fn z_row(name: &str, n: usize, est: &Estimate, target: f64, tol: f64) -> VerifyRow {
    VerifyRow::new(name, n, est.mean, target, est.z_against_value(target), tol)
}

fn params(ctx: &Resolved, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let law = model.walk();
    let cal = Calibration::of(model)?;
    cal.record(man);
    let mut rows = Vec::new();
    if let Some(p) = &cal.single {
        let residual = (p.m * laplace_tau(law, p.r.value, 1e-15)?.value - 1.0).abs();
        rows.push(VerifyRow::new(
            "malthusian residual m E[exp(-r tau)] - 1",
            0,
            residual,
            0.0,
            residual,
            1e-8,
        ));
        let psi = law.psi(p.t0);
        rows.push(VerifyRow::new(
            "psi(t0) = r",
            0,
            psi,
            p.r.value,
            (psi - p.r.value).abs(),
            1e-9,
        ));
        let eig = phi_eigen_residual(law, p.r.value, p.m, &p.phi, 40);
        rows.push(VerifyRow::new(
            "phi harmonic relation",
            0,
            eig,
            0.0,
            eig,
            1e-8,
        ));
        for (name, holds) in p.invariant_checks(law) {
            rows.push(bool_row(name, holds));
        }
        let tilted = law.tilt(p.t0);
        let mut rng = salted_rng(ctx.seed, 0x1add);
        let ladder = ladder_statistics(&tilted, ctx.cfg.params.ladder_samples, &mut rng)?;
        man.bounded(
            "E_H1_mc",
            ladder.e_h1.mean,
            Method::MonteCarlo,
            ladder.e_h1.se,
        );
        man.bounded(
            "E_T1_mc",
            ladder.e_t1.mean,
            Method::MonteCarlo,
            ladder.e_t1.se,
        );
        man.info("ladder_resampled", ladder.resampled);
        rows.push(VerifyRow::new(
            "ladder Wald identity E_H1 = E_S1 E_T1",
            0,
            ladder.e_h1.mean,
            ladder.e_s1 * ladder.e_t1.mean,
            ladder.wald_z,
            4.0,
        ));
        rows.push(z_row(
            "ladder height mean MC vs exact",
            0,
            &ladder.e_h1,
            p.e_h1.value,
            4.0,
        ));
    }
    if let Some(fit) = &cal.multi {
        rows.push(VerifyRow::new(
            "perron eigen-residual",
            0,
            fit.perron.residual,
            0.0,
            fit.perron.residual,
            1e-10,
        ));
        let min_v = fit.v().iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(bool_row("perron vector positive", min_v > 0.0));
    }
    Ok(rows)
}

fn lln(ctx: &Resolved, out: &Output, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let cfg = &ctx.cfg;
    let n_max = cfg.run.n_max;
    let cal = Calibration::of(model)?;
    cal.record(man);
    let weights = LambdaWeights::for_model(model, cal.r, n_max, |x| cal.phi.eval(x));
    let e = ensemble(
        model,
        n_max,
        cfg.run.replicas,
        ctx.seed,
        ctx.threads,
        Some(&weights),
        ctx.caps,
    );
    let s = &e.summary;
    man.bounded(
        "survival_fraction",
        s.survival.mean,
        Method::MonteCarlo,
        s.survival.se,
    );
    man.info("truncated_runs", s.truncated);

    let stride = cfg.run.runs_stride;
    out.csv(
        "runs.csv",
        &[
            "replica", "n", "M_n", "eta0", "lambda_n", "total", "survived",
        ],
        e.records.iter().flat_map(|rec| {
            (0..=n_max)
                .filter(move |n| n % stride == 0 || *n == n_max)
                .map(move |n| {
                    vec![
                        rec.replica.to_string(),
                        n.to_string(),
                        rec.max[n].map_or(String::new(), |m| m.to_string()),
                        rec.eta_at(n, 0).to_string(),
                        rec.lambda_at(n).map_or(String::new(), num),
                        rec.total[n].to_string(),
                        u8::from(rec.survived).to_string(),
                    ]
                })
        }),
    )?;
    let opt = |e: Option<Estimate>| {
        e.map_or((String::new(), String::new()), |e| (num(e.mean), num(e.se)))
    };
    out.csv(
        "summary.csv",
        &[
            "n",
            "recorded",
            "survivors",
            "m_mean",
            "m_median",
            "m_q10",
            "m_q90",
            "speed_median",
            "lambda_mean",
            "lambda_se",
            "lambda_sq_mean",
            "lambda_sq_se",
            "eta0_mean",
            "eta0_se",
        ],
        s.per_n.iter().map(|g| {
            let (lm, ls) = opt(g.lambda);
            let (qm, qs) = opt(g.lambda_sq);
            let speed = if g.n == 0 {
                f64::NAN
            } else {
                g.m_median / g.n as f64
            };
            vec![
                g.n.to_string(),
                g.recorded.to_string(),
                g.survivors.to_string(),
                num(g.m_mean),
                num(g.m_median),
                num(g.m_q10),
                num(g.m_q90),
                num(speed),
                lm,
                ls,
                qm,
                qs,
                num(g.eta0.mean),
                num(g.eta0.se),
            ]
        }),
    )?;

    let mut rows = Vec::new();
    let last = &s.per_n[n_max];
    let speed = last.m_median / n_max as f64;
    rows.push(VerifyRow::new(
        "median M_n/n vs alpha",
        n_max,
        speed,
        cal.alpha,
        (speed - cal.alpha).abs(),
        cfg.lln.speed_tolerance,
    ));
    let start = cal.phi.eval(model.initial());
    for &n in cfg.lln.checkpoints.iter().filter(|&&n| n <= n_max) {
        if let Some(l) = s.per_n[n].lambda {
            rows.push(z_row(
                "lambda_n mean vs lambda_0 (SE units)",
                n,
                &l,
                start,
                cfg.lln.z_tolerance,
            ));
        }
    }
    if n_max >= 20 {
        let base = s.per_n[20].lambda_sq.map_or(f64::NAN, |e| e.mean);
        let peak = (20..=n_max)
            .filter_map(|n| s.per_n[n].lambda_sq.map(|e| e.mean))
            .fold(0.0, f64::max);
        let bound = 2.0 * base;
        rows.push(VerifyRow::new(
            "max E[lambda_n^2] over n >= 20 vs 2 E[lambda_20^2]",
            n_max,
            peak,
            bound,
            (peak - bound).max(0.0),
            0.0,
        ));
    }
    rows.push(VerifyRow::new(
        "runs truncated by the population cap",
        n_max,
        s.truncated as f64,
        0.0,
        s.truncated as f64,
        0.0,
    ));

    let mut speed_plot = Plot::new("Speed of the rightmost particle", "n", "M_n / n");
    let pts = |f: &dyn Fn(&cbrw_core::engine::GenSummary) -> f64| -> Vec<(f64, f64)> {
        s.per_n
            .iter()
            .filter(|g| g.n > 0 && g.survivors > 0)
            .map(|g| (g.n as f64, f(g) / g.n as f64))
            .collect()
    };
    speed_plot
        .series
        .push(Series::line("median", pts(&|g| g.m_median)));
    speed_plot
        .series
        .push(Series::line("10% quantile", pts(&|g| g.m_q10)).dashed());
    speed_plot
        .series
        .push(Series::line("90% quantile", pts(&|g| g.m_q90)).dashed());
    speed_plot
        .hlines
        .push((cal.alpha, format!("alpha = {:.4}", cal.alpha)));
    out.plot("speed.svg", &speed_plot)?;

    let mut lam = Plot::new("Fundamental martingale", "n", "mean lambda_n");
    let est: Vec<(usize, Estimate)> = s
        .per_n
        .iter()
        .filter_map(|g| g.lambda.map(|l| (g.n, l)))
        .collect();
    lam.bands.push(Band {
        label: "mean +/- 2 SE".into(),
        points: est
            .iter()
            .map(|(n, e)| (*n as f64, e.mean - 2.0 * e.se, e.mean + 2.0 * e.se))
            .collect(),
    });
    lam.series.push(Series::line(
        "mean",
        est.iter().map(|(n, e)| (*n as f64, e.mean)).collect(),
    ));
    lam.hlines.push((start, "lambda_0".into()));
    out.plot("lambda.svg", &lam)?;
    Ok(rows)
}

fn fluctuation(ctx: &Resolved, out: &Output, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let fc = &ctx.cfg.fluctuation;
    let p = derive_params(model)?;
    for e in p.manifest_entries() {
        man.entry(&e);
    }
    let setup = TailSetup {
        replicas: ctx.cfg.run.replicas,
        base_seed: ctx.seed,
        threads: ctx.threads,
        horizon: ctx.horizon(),
        caps: ctx.caps,
    };
    let rep = fluctuation_experiment(model, &p, &fc.ns, &fc.y_grid, &setup, fc.z_tolerance)?;
    man.info("truncated_runs", rep.truncated);
    man.info(
        "adjudicated_variant",
        rep.adjudicated.map_or("none", |v| v.name()),
    );

    out.csv(
        "tail.csv",
        &[
            "n",
            "y",
            "p_emp",
            "se",
            "p_model_A",
            "p_model_B",
            "p_model_series",
        ],
        rep.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                num(r.y),
                num(r.p_emp.mean),
                num(r.p_emp.se),
                num(r.model(CStarVariant::ClosedA).mean),
                num(r.model(CStarVariant::ClosedB).mean),
                num(r.model(CStarVariant::Series).mean),
            ]
        }),
    )?;
    out.csv(
        "variants.csv",
        &["variant", "c_star", "max_z", "z_tolerance", "pass"],
        rep.verdicts.iter().map(|v| {
            vec![
                v.variant.name().to_string(),
                num(v.c_star),
                num(v.max_z),
                num(rep.z_tolerance),
                if v.pass { "pass" } else { "fail" }.to_string(),
            ]
        }),
    )?;

    let mut rows = Vec::new();
    let best = rep
        .verdicts
        .iter()
        .min_by(|a, b| a.max_z.total_cmp(&b.max_z))
        .expect("three variants");
    rows.push(VerifyRow::new(
        format!("tail agreement, best c* variant ({})", best.variant.name()),
        0,
        best.max_z,
        0.0,
        best.max_z,
        rep.z_tolerance,
    ));
    for b in &rep.bounds {
        rows.push(VerifyRow::new(
            "uniform tail bound max_y e^(t0 y) P / value at y=0",
            b.n,
            b.ratio,
            2.0,
            b.ratio,
            2.0,
        ));
    }
    rows.push(VerifyRow::new(
        "runs truncated by the population cap",
        0,
        rep.truncated as f64,
        0.0,
        rep.truncated as f64,
        0.0,
    ));

    for &n in &fc.ns {
        let mut plot = Plot::new(
            &format!("Tail of M_n - alpha n, n = {n}"),
            "y",
            "P(M_n > alpha n + y)",
        );
        let sel: Vec<_> = rep.rows.iter().filter(|r| r.n == n).collect();
        plot.series.push(
            Series::line(
                "empirical",
                sel.iter().map(|r| (r.y, r.p_emp.mean)).collect(),
            )
            .markers(),
        );
        for v in CStarVariant::ALL {
            plot.series.push(Series::line(
                format!("model {}", v.name()),
                sel.iter().map(|r| (r.y, r.model(v).mean)).collect(),
            ));
        }
        out.plot(&format!("tail_n{n}.svg"), &plot)?;
    }

    if let Some(sub) = &fc.subsequence {
        let selected = select_subsequence(p.alpha, sub.lo, sub.hi, sub.s, sub.tol)?;
        man.info("subsequence", format!("{selected:?}"));
        let table = subsequence_pmf_table(model, &p, &selected, &sub.y_grid, &setup)?;
        out.csv(
            "pmf.csv",
            &[
                "y",
                "p_emp",
                "se",
                "p_model_A",
                "p_model_B",
                "p_model_series",
            ],
            table.rows.iter().map(|r| {
                let mut row = vec![r.y.to_string(), num(r.p_emp.mean), num(r.p_emp.se)];
                row.extend(r.p_model.iter().map(|e| num(e.mean)));
                row
            }),
        )?;
        let variant = rep.adjudicated.unwrap_or(CStarVariant::Series);
        let idx = CStarVariant::ALL
            .iter()
            .position(|&v| v == variant)
            .expect("known variant");
        let mode = table.mode_row();
        rows.push(VerifyRow::new(
            format!(
                "pmf at the mode y = {}, {} (SE units)",
                mode.y,
                variant.name()
            ),
            0,
            mode.p_emp.mean,
            mode.p_model[idx].mean,
            mode.z[idx],
            fc.z_tolerance,
        ));
    }
    Ok(rows)
}

fn verify(ctx: &Resolved, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let vc = &ctx.cfg.verify;
    let replicas = ctx.cfg.run.replicas;
    let cal = Calibration::of(model)?;
    cal.record(man);
    let mut rows = Vec::new();

    type Test = (String, Box<dyn Fn(i64) -> f64>);
    let mut fs: Vec<Test> = vec![("f = 1".into(), Box::new(|_| 1.0))];
    for x in -vc.indicator_range..=vc.indicator_range {
        fs.push((
            format!("f = 1{{x = {x}}}"),
            Box::new(move |y| if y == x { 1.0 } else { 0.0 }),
        ));
    }
    for &theta in &vc.exp_thetas {
        fs.push((
            format!("f = exp({theta} x)"),
            Box::new(move |x| (theta * x as f64).exp()),
        ));
    }
    for n in 0..=vc.n_exact {
        for (name, f) in &fs {
            rows.push(many_to_one_check(
                model,
                &format!("many-to-one {name}"),
                f,
                n,
            )?);
        }
    }

    let phi = |x: i64| cal.phi.eval(x);
    if let Some(&n_max) = vc.martingale_ns.iter().max() {
        let d = delta_martingale_check(
            model,
            cal.r,
            &phi,
            n_max,
            replicas,
            sub_seed(ctx.seed, 1),
            ctx.threads,
        );
        for &n in &vc.martingale_ns {
            rows.push(VerifyRow::new(
                "spine martingale mean vs start (SE units)",
                n,
                d.means[n].mean,
                d.start,
                d.z(n),
                d.z_tolerance,
            ));
        }
    }
    for &n in &vc.second_moment_ns {
        let r = second_moment_check(
            model,
            &phi,
            n,
            replicas,
            sub_seed(ctx.seed, 2 + n as u64),
            ctx.threads,
        )?;
        rows.push(VerifyRow::new(
            "second moment of sum phi: direct vs coupled pair (combined SE units)",
            n,
            r.direct.mean,
            r.spine.mean,
            r.z,
            3.0,
        ));
    }
    for row in decoupling_check(
        model,
        vc.decoupling_k,
        replicas,
        sub_seed(ctx.seed, 1000),
        ctx.threads,
    )? {
        rows.push(VerifyRow::new(
            "decoupling survival vs product (SE units)",
            row.k,
            row.empirical.mean,
            row.product,
            row.z,
            4.0,
        ));
    }
    Ok(rows)
}

fn multicat(ctx: &Resolved, out: &Output, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let mc = &ctx.cfg.multicat;
    let replicas = ctx.cfg.run.replicas;
    let fit = solve_malthusian_multi(model)?;
    let t0 = solve_t0(model.walk(), fit.r)?;
    let phi = phi_multi(model, fit.r, fit.v(), PHI_REACH)?;
    let cal = Calibration {
        r: fit.r,
        t0,
        alpha: fit.r / t0,
        phi,
        single: None,
        multi: Some(fit.clone()),
    };
    cal.record(man);

    let mut rows = Vec::new();
    rows.push(VerifyRow::new(
        "perron eigen-residual",
        0,
        fit.perron.residual,
        0.0,
        fit.perron.residual,
        mc.eigen_tolerance,
    ));
    let min_v = fit.v().iter().copied().fold(f64::INFINITY, f64::min);
    rows.push(bool_row("perron vector positive", min_v > 0.0));
    let sites = model.catalyst_sites();
    let (lo, hi) = (
        sites[0] - PHI_REACH / 2,
        sites[sites.len() - 1] + PHI_REACH / 2,
    );
    let res = phi_multi_residual(model, fit.r, &cal.phi, lo, hi);
    rows.push(VerifyRow::new(
        "phi relation residual",
        0,
        res,
        0.0,
        res,
        1e-8,
    ));
    if model.is_single() {
        let (_, off) = model.single_catalyst()?;
        let single = solve_malthusian_for(model.walk(), off.mean())?;
        rows.push(VerifyRow::new(
            "single-catalyst reduction of r",
            0,
            fit.r,
            single.r,
            (fit.r - single.r).abs(),
            1e-6,
        ));
    }

    let (start, means) = lambda_means(
        model,
        fit.r,
        &cal.phi,
        &mc.ns,
        replicas,
        sub_seed(ctx.seed, 1),
        ctx.threads,
    );
    for (n, mean, _) in &means {
        rows.push(z_row(
            "lambda_n mean vs lambda_0 (SE units)",
            *n,
            mean,
            start,
            3.0,
        ));
    }
    out.csv(
        "summary.csv",
        &[
            "n",
            "lambda_mean",
            "lambda_se",
            "lambda_sq_mean",
            "lambda_sq_se",
        ],
        means.iter().map(|(n, m, q)| {
            vec![
                n.to_string(),
                num(m.mean),
                num(m.se),
                num(q.mean),
                num(q.se),
            ]
        }),
    )?;
    let lln = lln_check(
        model,
        fit.r,
        mc.lln_n,
        replicas,
        sub_seed(ctx.seed, 2),
        ctx.threads,
        mc.speed_tolerance,
    )?;
    man.info("lln_survivors", lln.survivors);
    man.info("lln_truncated", lln.truncated);
    rows.push(VerifyRow::new(
        "median M_n/n vs r/t0",
        lln.n,
        lln.median_speed,
        lln.target,
        (lln.median_speed - lln.target).abs(),
        lln.tolerance,
    ));

    let mut plot = Plot::new("Fundamental martingale, catalyst set", "n", "mean lambda_n");
    plot.bands.push(Band {
        label: "mean +/- 2 SE".into(),
        points: means
            .iter()
            .map(|(n, m, _)| (*n as f64, m.mean - 2.0 * m.se, m.mean + 2.0 * m.se))
            .collect(),
    });
    plot.series.push(
        Series::line(
            "mean",
            means.iter().map(|(n, m, _)| (*n as f64, m.mean)).collect(),
        )
        .markers(),
    );
    plot.hlines.push((start, "lambda_0".into()));
    out.plot("lambda.svg", &plot)?;
    Ok(rows)
}

fn expectation(ctx: &Resolved, out: &Output, man: &mut Manifest) -> Result<Vec<VerifyRow>> {
    let model = &ctx.model;
    let ec = &ctx.cfg.expectation;
    let n_max = ctx.cfg.run.n_max;
    let p = derive_params(model)?;
    for e in p.manifest_entries() {
        man.entry(&e);
    }
    let r = p.r.value;
    let c = p.catalyst;
    let d = p.d as usize;
    let d_over_m = p.d as f64 / p.m;
    let table = expectation_dp(model, n_max, None)?;
    let scaled = |n: usize| (-r * n as f64).exp() * table.get(n, c);
    let mass = |n: usize| (-r * n as f64).exp() * table.weighted_sum(n, |x| p.phi.eval(x));
    let phi0 = p.phi.eval(model.initial());

    out.csv(
        "summary.csv",
        &[
            "n",
            "mean_eta_c",
            "scaled",
            "c0",
            "c0_error",
            "d_over_m",
            "phi_mass",
            "phi_mass_expected",
        ],
        (0..=n_max).map(|n| {
            vec![
                n.to_string(),
                num(table.get(n, c)),
                num(scaled(n)),
                num(p.c0.value),
                num(p.c0.error),
                num(d_over_m),
                num(mass(n)),
                num(phi0),
            ]
        }),
    )?;

    let mut rows = Vec::new();
    let drift = (0..=n_max)
        .map(|n| (mass(n) - phi0).abs())
        .fold(0.0, f64::max);
    rows.push(VerifyRow::new(
        "exp(-rn) sum_x E[eta_n(x)] phi(x) constant",
        n_max,
        drift,
        0.0,
        drift,
        1e-9,
    ));
    let n_cmp = n_max - n_max % d;
    if model.initial() == c && n_cmp > 0 {
        let v = scaled(n_cmp);
        let rel = |t: f64| (v - t).abs() / t;
        rows.push(VerifyRow::new(
            "exp(-rn) E[eta_n(c)] vs renewal constant c0",
            n_cmp,
            v,
            p.c0.value,
            rel(p.c0.value),
            1e-3,
        ));
        rows.push(VerifyRow::new(
            "exp(-rn) E[eta_n(c)] vs d/m",
            n_cmp,
            v,
            d_over_m,
            rel(d_over_m),
            ec.tolerance,
        ));
    } else {
        man.info(
            "occupation_constant_rows",
            "skipped: the walk does not start at the catalyst",
        );
    }
    let fit = occupation_profile_check(&table, c, r, n_cmp.max(1), ec.profile_x_max);
    let rel = (fit.rate / p.t0 - 1.0).abs();
    rows.push(VerifyRow::new(
        "occupation profile decay rate vs t0",
        fit.n,
        fit.rate,
        p.t0,
        rel,
        ec.slope_tolerance,
    ));

    let mut plot = Plot::new(
        "Discounted occupation of the catalyst",
        "n",
        "exp(-rn) E[eta_n(c)]",
    );
    plot.series.push(Series::line(
        "exact expectation",
        (1..=n_max)
            .filter(|n| n % d == 0)
            .map(|n| (n as f64, scaled(n)))
            .collect(),
    ));
    plot.hlines
        .push((p.c0.value, format!("c0 = {:.4}", p.c0.value)));
    plot.hlines.push((d_over_m, format!("d/m = {d_over_m:.4}")));
    out.plot("occupation.svg", &plot)?;
    Ok(rows)
}
