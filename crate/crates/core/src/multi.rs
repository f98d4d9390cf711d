//! Finite catalyst sets: the discounted first-return matrix, its Perron
//! root, the calibrated Malthusian parameter and the matching `phi`.

use crate::calibrate::{solve_t0, ModelSpec, Phi};
use crate::engine::{par_replicas, simulate, Caps, LambdaWeights};
use crate::error::{CbrwError, Result};
use crate::stats::{median, Estimate, MeanVar};
use crate::walk::lattice::{killed_resolvent, resolvent_margin};

/// Window accuracy for the matrix entries.
const ENTRY_TOL: f64 = 1e-13;
/// Smallest rate tried when bracketing the Malthusian parameter.
const R_FLOOR: f64 = 1e-4;

/// `M[x][y] = m_1(x) E_x[exp(-r tau); S_tau = y, tau < inf]`, `tau` the first
/// return time to the catalyst set.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalystMatrix {
    pub sites: Vec<i64>,
    pub r: f64,
    pub entries: Vec<Vec<f64>>,
    /// Bound on the absolute error of every entry from the finite window.
    pub error: f64,
}

impl CatalystMatrix {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|row| row.iter().sum()).collect()
    }

    /// Every site reaches every other through positive entries.
    pub fn is_irreducible(&self) -> bool {
        let k = self.dim();
        (0..k).all(|start| {
            let mut seen = vec![false; k];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..k {
                    if !seen[j] && self.entries[i][j] > 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Builds the matrix by solving one killed resolvent per landing site.
pub fn estimate_mr(model: &ModelSpec, r: f64) -> Result<CatalystMatrix> {
    if !(r > 0.0) {
        return Err(CbrwError::InvalidRate(r));
    }
    let law = model.walk();
    let sites = model.catalyst_sites();
    let margin = resolvent_margin(law, r, ENTRY_TOL);
    let lo = sites[0] - margin;
    let hi = sites[sites.len() - 1] + margin;
    let discount = (-r).exp();
    let mut entries = vec![vec![0.0; sites.len()]; sites.len()];
    for (j, &y) in sites.iter().enumerate() {
        let targets: Vec<(i64, f64)> = sites
            .iter()
            .map(|&c| (c, if c == y { 1.0 } else { 0.0 }))
            .collect();
        let h = killed_resolvent(law, &targets, r, lo, hi)?;
        for (i, &x) in sites.iter().enumerate() {
            let first_step: f64 = law.pairs().map(|(s, p)| p * h.get(x + s)).sum();
            entries[i][j] = model.m1(x) * discount * first_step;
        }
    }
    let m = CatalystMatrix {
        sites,
        r,
        entries,
        error: ENTRY_TOL,
    };
    if !m.is_irreducible() {
        return Err(CbrwError::Reducible);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronData {
    pub rho: f64,
    /// Right eigenvector with `v[0] = 1`.
    pub v: Vec<f64>,
    pub iterations: usize,
    /// `max_i |(M v)_i - rho v_i|`.
    pub residual: f64,
}

const PERRON_MAX_ITER: usize = 1_000_000;

/// Power iteration on `M + I`, which is primitive whenever `M` is
/// irreducible, so the iteration converges even for periodic patterns.
pub fn perron(m: &CatalystMatrix) -> Result<PerronData> {
    let mut v = vec![1.0; m.dim()];
    let mut rho = 0.0;
    let mut iterations = 0;
    for it in 1..=PERRON_MAX_ITER {
        iterations = it;
        let mv = m.apply(&v);
        let w: Vec<f64> = mv.iter().zip(&v).map(|(a, b)| a + b).collect();
        let scale = w[0];
        if !(scale > 0.0) {
            return Err(CbrwError::Reducible);
        }
        let next: Vec<f64> = w.iter().map(|x| x / scale).collect();
        rho = scale - 1.0;
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change <= 1e-15 || (it > 10 && change <= 4.0 * f64::EPSILON) {
            break;
        }
        if it == PERRON_MAX_ITER {
            return Err(CbrwError::NoConvergence {
                what: "Perron power iteration",
                iterations: it,
                residual: change,
            });
        }
    }
    let mv = m.apply(&v);
    let (imax, _) = v.iter().enumerate().fold(
        (0, f64::MIN),
        |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
    );
    if v[imax] > 0.0 {
        rho = mv[imax] / v[imax];
    }
    let residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - rho * b).abs())
        .fold(0.0, f64::max);
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(CbrwError::Reducible);
    }
    Ok(PerronData {
        rho,
        v,
        iterations,
        residual,
    })
}

/// Calibrated Malthusian parameter of a catalyst set.
#[derive(Debug, Clone)]
pub struct MultiFit {
    pub r: f64,
    pub perron: PerronData,
    pub matrix: CatalystMatrix,
}

impl MultiFit {
    pub fn v(&self) -> &[f64] {
        &self.perron.v
    }
}

fn rho_at(model: &ModelSpec, r: f64) -> Result<f64> {
    Ok(perron(&estimate_mr(model, r)?)?.rho)
}

/// Bisection on the decreasing map `r -> rho(r)` for `rho(r) = 1`.
pub fn solve_malthusian_multi(model: &ModelSpec) -> Result<MultiFit> {
    let max_m = model
        .catalysts()
        .iter()
        .map(|(_, law)| law.mean())
        .fold(0.0, f64::max);
    if max_m <= 1.0 {
        return Err(CbrwError::Subcritical { growth: max_m });
    }
    // rho(r) <= max m_1 exp(-r)
    let mut hi = max_m.ln() + 1e-3;
    let mut lo = hi / 2.0;
    loop {
        let rho = rho_at(model, lo)?;
        if rho > 1.0 {
            break;
        }
        if lo <= R_FLOOR {
            return Err(CbrwError::Subcritical { growth: rho });
        }
        hi = lo;
        lo = (lo / 2.0).max(R_FLOOR);
    }
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rho_at(model, mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let matrix = estimate_mr(model, r)?;
    let perron = perron(&matrix)?;
    Ok(MultiFit { r, perron, matrix })
}

/// `phi(x) = sum_a v(a) E_x[exp(-r T_C); S_{T_C} = a]`.
pub fn phi_multi(model: &ModelSpec, r: f64, v: &[f64], reach: i64) -> Result<Phi> {
    let targets: Vec<(i64, f64)> = model
        .catalyst_sites()
        .into_iter()
        .zip(v.iter().copied())
        .collect();
    Phi::from_targets(model.walk(), r, &targets, reach)
}

/// Largest relative violation of
/// `P phi(x) = e^r phi(x) (1/m_1(x) on C, 1 off C)` over `lo..=hi`.
pub fn phi_multi_residual(model: &ModelSpec, r: f64, phi: &Phi, lo: i64, hi: i64) -> f64 {
    let law = model.walk();
    (lo..=hi)
        .map(|x| {
            let lhs: f64 = law.pairs().map(|(s, p)| p * phi.eval(x + s)).sum();
            let rhs = r.exp() * phi.eval(x) / model.m1(x);
            ((lhs - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct LlnReport {
    pub n: usize,
    pub replicas: usize,
    pub survivors: usize,
    pub truncated: usize,
    /// Median of `M_n / n` over surviving replicas.
    pub median_speed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Median `M_n / n` over survivors against `r / t0`.
pub fn lln_check(
    model: &ModelSpec,
    r: f64,
    n: usize,
    replicas: usize,
    base_seed: u64,
    threads: usize,
    tolerance: f64,
) -> Result<LlnReport> {
    let t0 = solve_t0(model.walk(), r)?;
    let target = r / t0;
    let out: Vec<(Option<i64>, bool, bool)> =
        par_replicas(replicas, base_seed, threads, |_, rng| {
            let mut last = None;
            let outcome = simulate(model, n, None, Caps::default(), rng, |obs| {
                if obs.n as usize == n {
                    last = obs.max();
                }
            });
            (last, outcome.survived, outcome.truncated_at.is_some())
        });
    let speeds: Vec<f64> = out
        .iter()
        .filter(|(_, s, _)| *s)
        .filter_map(|(m, _, _)| m.map(|m| m as f64 / n as f64))
        .collect();
    let median_speed = median(&speeds);
    Ok(LlnReport {
        n,
        replicas,
        survivors: speeds.len(),
        truncated: out.iter().filter(|o| o.2).count(),
        median_speed,
        target,
        tolerance,
        pass: (median_speed - target).abs() <= tolerance,
    })
}

/// Ensemble mean of `Lambda_n = exp(-r n) sum_u phi(X_u)` at each requested
/// generation, next to `Lambda_0 = phi(x_0)`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_means(
    model: &ModelSpec,
    r: f64,
    phi: &Phi,
    ns: &[usize],
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> (f64, Vec<(usize, Estimate, Estimate)>) {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let weights = LambdaWeights::for_model(model, r, n_max, |x| phi.eval(x));
    let runs: Vec<Vec<f64>> = par_replicas(replicas, base_seed, threads, |_, rng| {
        let mut vals = vec![0.0; ns.len()];
        simulate(model, n_max, Some(&weights), Caps::default(), rng, |obs| {
            for (slot, &n) in ns.iter().enumerate() {
                if obs.n as usize == n {
                    vals[slot] = obs.lambda.unwrap_or(0.0);
                }
            }
        });
        vals
    });
    let rows = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mean = runs.iter().map(|v| v[i]).collect::<MeanVar>().estimate();
            let sq = runs
                .iter()
                .map(|v| v[i] * v[i])
                .collect::<MeanVar>()
                .estimate();
            (n, mean, sq)
        })
        .collect();
    (phi.eval(model.initial()), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::malthus::laplace_tau;
    use crate::calibrate::{solve_malthusian, OffspringLaw};
    use crate::walk::StepLaw;

    fn lazy() -> StepLaw {
        StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap()
    }

    fn matrix(entries: Vec<Vec<f64>>) -> CatalystMatrix {
        CatalystMatrix {
            sites: (0..entries.len() as i64).collect(),
            r: 1.0,
            entries,
            error: 0.0,
        }
    }

    #[test]
    fn single_catalyst_matrix_is_m_laplace() {
        let model = ModelSpec::single(lazy(), OffspringLaw::Poisson(2.0)).unwrap();
        let r = 0.3;
        let m = estimate_mr(&model, r).unwrap();
        let lt = laplace_tau(model.walk(), r, 1e-15).unwrap().value;
        assert!((m.entries[0][0] - 2.0 * lt).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_is_symmetric() {
        let model = ModelSpec::new(
            lazy(),
            vec![
                (-1, OffspringLaw::Poisson(2.0)),
                (1, OffspringLaw::Poisson(2.0)),
            ],
            -1,
        )
        .unwrap();
        let m = estimate_mr(&model, 0.25).unwrap();
        assert!((m.entries[0][0] - m.entries[1][1]).abs() < 1e-14);
        assert!((m.entries[0][1] - m.entries[1][0]).abs() < 1e-14);
        // lazy walk always returns, so row sums are m E[exp(-r tau)]
        for (i, &x) in m.sites.iter().enumerate() {
            let h =
                killed_resolvent(model.walk(), &[(-1, 1.0), (1, 1.0)], 0.25, -400, 400).unwrap();
            let exact = 2.0
                * (-0.25f64).exp()
                * model
                    .walk()
                    .pairs()
                    .map(|(s, p)| p * h.get(x + s))
                    .sum::<f64>();
            assert!((m.row_sums()[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn perron_closed_forms() {
        let p = perron(&matrix(vec![vec![0.7]])).unwrap();
        assert!((p.rho - 0.7).abs() < 1e-15 && p.v == vec![1.0]);
        let p = perron(&matrix(vec![vec![0.3, 0.5], vec![0.5, 0.3]])).unwrap();
        assert!((p.rho - 0.8).abs() < 1e-14);
        assert!((p.v[1] - 1.0).abs() < 1e-13);
        // period-2 pattern still converges
        let p = perron(&matrix(vec![vec![0.0, 2.0], vec![0.5, 0.0]])).unwrap();
        assert!((p.rho - 1.0).abs() < 1e-12);
        assert!(p.residual < 1e-10);
    }

    fn char_poly_root(a: &[Vec<f64>]) -> f64 {
        let tr = a[0][0] + a[1][1] + a[2][2];
        let minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0]
            + a[1][1] * a[2][2]
            - a[1][2] * a[2][1];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let p = |l: f64| l * l * l - tr * l * l + minors * l - det;
        let mut hi = a.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max) + 1e-9;
        let mut lo = hi;
        while p(lo) > 0.0 {
            lo -= 1e-3;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn perron_matches_cubic_root() {
        use rand::Rng;
        let mut rng = crate::rng::replica_rng(50, 0);
        for _ in 0..20 {
            let a: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(0.05..1.0)).collect())
                .collect();
            let p = perron(&matrix(a.clone())).unwrap();
            assert!((p.rho - char_poly_root(&a)).abs() < 1e-8);
            assert!(p.residual < 1e-10);
        }
    }

    #[test]
    fn reduction_to_single_catalyst() {
        let model = ModelSpec::single(lazy(), OffspringLaw::Poisson(2.0)).unwrap();
        let fit = solve_malthusian_multi(&model).unwrap();
        let single = solve_malthusian(&model).unwrap();
        assert!((fit.r - single.r).abs() < 1e-6);
        assert!((fit.r - 1.2f64.ln()).abs() < 1e-9);
        let phi = phi_multi(&model, fit.r, fit.v(), 0).unwrap();
        let phi1 = Phi::new(model.walk(), fit.r, 0).unwrap();
        for x in -30..=30 {
            assert!((phi.eval(x) - phi1.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn two_catalysts_grow_faster() {
        let model = ModelSpec::new(
            lazy(),
            vec![
                (0, OffspringLaw::Poisson(2.0)),
                (1, OffspringLaw::Poisson(2.0)),
            ],
            0,
        )
        .unwrap();
        let fit = solve_malthusian_multi(&model).unwrap();
        assert!(fit.r > 1.2f64.ln());
        assert!((perron(&estimate_mr(&model, fit.r).unwrap()).unwrap().rho - 1.0).abs() < 1e-8);
        assert!(fit.perron.residual < 1e-10);
    }

    #[test]
    fn phi_multi_on_catalysts_and_beyond() {
        let model = ModelSpec::new(
            lazy(),
            vec![
                (-1, OffspringLaw::Poisson(2.0)),
                (1, OffspringLaw::Poisson(3.0)),
            ],
            -1,
        )
        .unwrap();
        let fit = solve_malthusian_multi(&model).unwrap();
        let phi = phi_multi(&model, fit.r, fit.v(), 20).unwrap();
        assert!((phi.eval(-1) - fit.v()[0]).abs() < 1e-12);
        assert!((phi.eval(1) - fit.v()[1]).abs() < 1e-12);
        let t0 = solve_t0(model.walk(), fit.r).unwrap();
        for x in 2..15 {
            let closed = fit.v()[1] * (-t0 * (x - 1) as f64).exp();
            assert!((phi.eval(x) / closed - 1.0).abs() < 1e-9, "x={x}");
        }
        assert!(phi_multi_residual(&model, fit.r, &phi, -20, 20) < 1e-9);
    }

    #[test]
    fn subcritical_set_is_rejected() {
        let model = ModelSpec::new(
            StepLaw::simple(),
            vec![(0, OffspringLaw::Deterministic(1))],
            0,
        )
        .unwrap();
        assert!(matches!(
            solve_malthusian_multi(&model),
            Err(CbrwError::Subcritical { .. })
        ));
    }
}
