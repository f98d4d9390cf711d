use std::collections::BTreeMap;

use crate::calibrate::ModelSpec;
use crate::engine::expectation_dp;
use crate::error::Result;
use crate::spine::{rel_diff, VerifyRow};
use crate::walk::lattice::check_budget;

/// A walk together with its local times at each catalyst, `L^x_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LocalTimeWalkState {
    pub position: i64,
    /// Visits at times `0..n` to each catalyst, in catalyst order.
    pub local_times: Vec<u32>,
}

/// `E[f(S_n) prod_x m_1(x)^{L^x_{n-1}}]` by exact DP over the joint law of
/// position and the vector of catalyst local times.
pub fn local_time_moment(model: &ModelSpec, f: impl Fn(i64) -> f64, n: usize) -> Result<f64> {
    let law = model.walk();
    let sites = model.catalyst_sites();
    let means: Vec<f64> = sites.iter().map(|&c| model.m1(c)).collect();
    let mut dist: BTreeMap<LocalTimeWalkState, f64> = BTreeMap::new();
    dist.insert(
        LocalTimeWalkState {
            position: model.initial(),
            local_times: vec![0; sites.len()],
        },
        1.0,
    );
    for _ in 0..n {
        let mut next = BTreeMap::new();
        for (state, p) in dist {
            let mut lt = state.local_times;
            if let Ok(i) = sites.binary_search(&state.position) {
                lt[i] += 1;
            }
            for (s, q) in law.pairs() {
                let key = LocalTimeWalkState {
                    position: state.position + s,
                    local_times: lt.clone(),
                };
                *next.entry(key).or_insert(0.0) += p * q;
            }
        }
        check_budget(next.len())?;
        dist = next;
    }
    Ok(dist
        .iter()
        .map(|(state, p)| {
            let w: f64 = state
                .local_times
                .iter()
                .zip(&means)
                .map(|(&l, m)| m.powi(l as i32))
                .product();
            p * w * f(state.position)
        })
        .sum())
}

/// Both sides of the many-to-one formula: the left side from the
/// expectation recursion, the right side from [`local_time_moment`].
pub fn many_to_one_check(
    model: &ModelSpec,
    name: &str,
    f: impl Fn(i64) -> f64,
    n: usize,
) -> Result<VerifyRow> {
    let table = expectation_dp(model, n, None)?;
    let lhs = table.weighted_sum(n, &f);
    let rhs = local_time_moment(model, &f, n)?;
    Ok(VerifyRow::new(name, n, lhs, rhs, rel_diff(lhs, rhs), 1e-12))
}
