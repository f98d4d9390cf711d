use rand::Rng;

use crate::calibrate::ModelSpec;
use crate::engine::{par_replicas, simulate, Caps};
use crate::error::{CbrwError, Result};
use crate::stats::{proportion, Estimate, MeanVar};

/// Two walks that move together until they decouple; once decoupled they
/// move independently for good.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoupledPairState {
    pub s1: i64,
    pub s2: i64,
    pub decoupled: bool,
    pub n: u64,
}

impl CoupledPairState {
    pub fn start(x0: i64) -> Self {
        CoupledPairState {
            s1: x0,
            s2: x0,
            decoupled: false,
            n: 0,
        }
    }
}

fn moments(model: &ModelSpec, x: i64) -> Result<(f64, f64)> {
    let (m1, m2) = (model.m1(x), model.m2(x));
    if m2 < m1 {
        return Err(CbrwError::InvalidOffspringMoments { site: x, m1, m2 });
    }
    Ok((m1, m2))
}

/// One transition: coupled at `x`, the pair stays coupled with probability
/// `m_1(x)/m_2(x)` and moves as one; otherwise both move independently and
/// the pair is decoupled from then on.
pub fn coupled_pair_step<R: Rng + ?Sized>(
    state: CoupledPairState,
    model: &ModelSpec,
    rng: &mut R,
) -> Result<CoupledPairState> {
    let law = model.walk();
    let mut next = state;
    next.n += 1;
    if state.decoupled {
        next.s1 += law.sample(rng);
        next.s2 += law.sample(rng);
        return Ok(next);
    }
    let (m1, m2) = moments(model, state.s1)?;
    if m2 == 0.0 || rng.random::<f64>() < m1 / m2 {
        let s = law.sample(rng);
        next.s1 += s;
        next.s2 += s;
    } else {
        next.s1 += law.sample(rng);
        next.s2 += law.sample(rng);
        next.decoupled = true;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPath {
    pub end: CoupledPairState,
    /// `prod_{k < T∧n} m_2(S^1_k) prod_{T∧n <= k < n} m_1(S^1_k) m_1(S^2_k)`.
    pub weight: f64,
    /// Decoupling time if it is at most `n`.
    pub t_de: Option<u64>,
}

/// Runs the pair for `n` steps from the model's initial site and
/// accumulates the many-to-two weight.
pub fn coupled_pair_path<R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    rng: &mut R,
) -> Result<PairPath> {
    let mut st = CoupledPairState::start(model.initial());
    let mut weight = 1.0;
    let mut t_de = None;
    for _ in 0..n {
        weight *= if st.decoupled {
            model.m1(st.s1) * model.m1(st.s2)
        } else {
            model.m2(st.s1)
        };
        st = coupled_pair_step(st, model, rng)?;
        if st.decoupled && t_de.is_none() {
            t_de = Some(st.n);
        }
    }
    Ok(PairPath {
        end: st,
        weight,
        t_de,
    })
}

fn validate_moments(model: &ModelSpec) -> Result<()> {
    for (x, law) in model.catalysts() {
        if !law.second_moment().is_finite() {
            return Err(CbrwError::InfiniteSecondMoment);
        }
        moments(model, *x)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SecondMomentReport {
    pub n: usize,
    /// Ensemble mean of `(sum_u f(X_u))^2`.
    pub direct: Estimate,
    /// Coupled-pair estimate of the same quantity.
    pub spine: Estimate,
    pub z: f64,
    pub pass: bool,
}

/// Compares `E[(sum_{|u|=n} f(X_u))^2]` from the particle system with the
/// many-to-two right side for `f(x, y) = f(x) f(y)`. The two sides use
/// disjoint random streams.
pub fn second_moment_check(
    model: &ModelSpec,
    f: &(dyn Fn(i64) -> f64 + Sync),
    n: usize,
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> Result<SecondMomentReport> {
    validate_moments(model)?;
    let direct: Vec<f64> = par_replicas(replicas, base_seed, threads, |_, rng| {
        let mut sum = 0.0;
        simulate(model, n, None, Caps::default(), rng, |obs| {
            if obs.n as usize == n {
                sum = obs.state.occupancy().map(|(x, c)| f(x) * c as f64).sum();
            }
        });
        sum * sum
    });
    let spine: Vec<Result<f64>> = par_replicas(
        replicas,
        base_seed ^ 0x5851_F42D_4C95_7F2D,
        threads,
        |_, rng| {
            let p = coupled_pair_path(model, n, rng)?;
            Ok(p.weight * f(p.end.s1) * f(p.end.s2))
        },
    );
    let spine: Vec<f64> = spine.into_iter().collect::<Result<_>>()?;
    let direct = direct.into_iter().collect::<MeanVar>().estimate();
    let spine = spine.into_iter().collect::<MeanVar>().estimate();
    let z = direct.z_against(&spine);
    Ok(SecondMomentReport {
        n,
        direct,
        spine,
        z,
        pass: z <= 3.0,
    })
}

/// `Q[T^de >= k + 1] = E[prod_{l<k} m_1(S_l)/m_2(S_l)]` for `k = 0..=k_max`,
/// by exact DP over the single walk.
pub fn decoupling_product(model: &ModelSpec, k_max: usize) -> Result<Vec<f64>> {
    validate_moments(model)?;
    let law = model.walk();
    let x0 = model.initial();
    let lo = x0 + k_max as i64 * law.min_step();
    let width = (k_max as i64 * (law.max_step() - law.min_step()) + 1) as usize;
    let ratio: Vec<f64> = (0..width as i64)
        .map(|i| {
            let x = lo + i;
            let m2 = model.m2(x);
            if m2 == 0.0 {
                1.0
            } else {
                model.m1(x) / m2
            }
        })
        .collect();
    let mut w = vec![0.0; width];
    w[(x0 - lo) as usize] = 1.0;
    let mut out = vec![1.0];
    for _ in 0..k_max {
        let mut next = vec![0.0; width];
        for (i, &v) in w.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (s, p) in law.pairs() {
                let j = i as i64 + s;
                if j >= 0 && (j as usize) < width {
                    next[j as usize] += v * ratio[i] * p;
                }
            }
        }
        w = next;
        out.push(w.iter().sum());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct DecouplingRow {
    pub k: usize,
    /// Empirical `P(T^de >= k + 1)`.
    pub empirical: Estimate,
    pub product: f64,
    pub z: f64,
}

/// Empirical decoupling survival against [`decoupling_product`].
pub fn decoupling_check(
    model: &ModelSpec,
    k_max: usize,
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> Result<Vec<DecouplingRow>> {
    let exact = decoupling_product(model, k_max)?;
    let times: Vec<Result<Option<u64>>> = par_replicas(replicas, base_seed, threads, |_, rng| {
        Ok(coupled_pair_path(model, k_max, rng)?.t_de)
    });
    let times: Vec<Option<u64>> = times.into_iter().collect::<Result<_>>()?;
    Ok((0..=k_max)
        .map(|k| {
            let alive = times
                .iter()
                .filter(|t| t.is_none_or(|t| t > k as u64))
                .count();
            let empirical = proportion(alive, replicas);
            let z = empirical.z_against_value(exact[k]);
            DecouplingRow {
                k,
                empirical,
                product: exact[k],
                z,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct OccupationPairRow {
    pub n: usize,
    pub m: usize,
    pub x: i64,
    pub y: i64,
    /// `E[eta_n(x) eta_m(y)] phi(x) phi(y) exp(-r(n+m))`.
    pub scaled: f64,
    /// `max_k E[Lambda_k^2]` over the recorded generations.
    pub bound: f64,
    pub pass: bool,
}

/// Pair-occupation bound `E[eta_n(x) eta_m(y)] <= C exp(r(n+m)) / (phi(x) phi(y))`
/// with `C` the largest sample `E[Lambda_k^2]`, all from one ensemble.
#[allow(clippy::too_many_arguments)]
pub fn occupation_pair_check(
    model: &ModelSpec,
    r: f64,
    phi: &(dyn Fn(i64) -> f64 + Sync),
    gens: &[usize],
    sites: &[i64],
    replicas: usize,
    base_seed: u64,
    threads: usize,
) -> Vec<OccupationPairRow> {
    let n_max = gens.iter().copied().max().unwrap_or(0);
    let per_run: Vec<(Vec<Vec<f64>>, Vec<f64>)> =
        par_replicas(replicas, base_seed, threads, |_, rng| {
            let mut eta = vec![vec![0.0; sites.len()]; gens.len()];
            let mut lam_sq = vec![0.0; n_max + 1];
            simulate(model, n_max, None, Caps::default(), rng, |obs| {
                let g = obs.n as usize;
                let sum: f64 = obs.state.occupancy().map(|(x, c)| phi(x) * c as f64).sum();
                let l = (-r * g as f64).exp() * sum;
                lam_sq[g] = l * l;
                if let Some(i) = gens.iter().position(|&k| k == g) {
                    for (j, &x) in sites.iter().enumerate() {
                        eta[i][j] = obs.state.count_at(x) as f64;
                    }
                }
            });
            (eta, lam_sq)
        });
    let bound = (0..=n_max)
        .map(|g| {
            per_run
                .iter()
                .map(|(_, l)| l[g])
                .collect::<MeanVar>()
                .mean()
        })
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (i, &n) in gens.iter().enumerate() {
        for (k, &m) in gens.iter().enumerate().skip(i) {
            for (a, &x) in sites.iter().enumerate() {
                for (b, &y) in sites.iter().enumerate() {
                    let mean: f64 = per_run
                        .iter()
                        .map(|(e, _)| e[i][a] * e[k][b])
                        .collect::<MeanVar>()
                        .mean();
                    let scaled = mean * phi(x) * phi(y) * (-r * (n + m) as f64).exp();
                    rows.push(OccupationPairRow {
                        n,
                        m,
                        x,
                        y,
                        scaled,
                        bound,
                        pass: scaled <= bound * (1.0 + 1e-9),
                    });
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{OffspringLaw, Phi};
    use crate::rng::replica_rng;
    use crate::walk::StepLaw;

    fn lazy() -> ModelSpec {
        let law = StepLaw::new(&[(-1, 0.4), (0, 0.2), (1, 0.4)]).unwrap();
        ModelSpec::single(law, OffspringLaw::Poisson(2.0)).unwrap()
    }

    #[test]
    fn off_catalyst_pair_stays_coupled() {
        let model = lazy();
        let mut rng = replica_rng(30, 0);
        let mut st = CoupledPairState {
            s1: 5,
            s2: 5,
            decoupled: false,
            n: 0,
        };
        for _ in 0..3 {
            st = coupled_pair_step(st, &model, &mut rng).unwrap();
            assert!(!st.decoupled);
            assert_eq!(st.s1, st.s2);
        }
    }

    #[test]
    fn binary_split_decouples_half_the_time() {
        let model = ModelSpec::single(StepLaw::simple(), OffspringLaw::Deterministic(2)).unwrap();
        let exact = decoupling_product(&model, 1).unwrap();
        assert_eq!(exact, vec![1.0, 0.5]);
        let rows = decoupling_check(&model, 1, 40_000, 31, 1).unwrap();
        assert!(rows[1].z < 4.0);
    }

    #[test]
    fn decoupling_survival_matches_product() {
        let model = lazy();
        let rows = decoupling_check(&model, 12, 40_000, 32, 2).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].empirical.mean <= w[0].empirical.mean);
        }
        for r in &rows {
            assert!(r.z < 4.0, "{r:?}");
        }
    }

    #[test]
    fn hand_computed_second_moments() {
        let model = ModelSpec::single(StepLaw::simple(), OffspringLaw::Deterministic(2)).unwrap();
        let zero = second_moment_check(&model, &|_| 1.0, 0, 10, 1, 1).unwrap();
        assert_eq!((zero.direct.mean, zero.spine.mean), (1.0, 1.0));
        let one = second_moment_check(&model, &|_| 1.0, 1, 100, 1, 1).unwrap();
        assert_eq!((one.direct.mean, one.spine.mean), (4.0, 4.0));
        let two = second_moment_check(&model, &|_| 1.0, 2, 100, 1, 1).unwrap();
        assert_eq!((two.direct.mean, two.spine.mean), (4.0, 4.0));
    }

    #[test]
    fn many_to_two_with_phi() {
        let model = lazy();
        let r = 1.2f64.ln();
        let phi = Phi::new(model.walk(), r, 0).unwrap();
        for n in [3, 8] {
            let rep = second_moment_check(&model, &|x| phi.eval(x), n, 20_000, 33, 2).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn pair_occupation_bound_holds() {
        let model = lazy();
        let r = 1.2f64.ln();
        let phi = Phi::new(model.walk(), r, 0).unwrap();
        let rows =
            occupation_pair_check(&model, r, &|x| phi.eval(x), &[5, 10], &[0, 2], 2000, 34, 1);
        assert_eq!(rows.len(), 3 * 4);
        assert!(rows.iter().all(|r| r.pass));
    }
}
