use crate::calibrate::ModelSpec;
use crate::error::Result;
use crate::stats::linear_fit;
use crate::walk::lattice::check_budget;

/// Exact first moments `v_n(x) = E[eta_n(x)]` on the full reachable window.
#[derive(Debug, Clone)]
pub struct ExpectationTable {
    /// Leftmost site of every row.
    pub lo: i64,
    pub width: usize,
    /// `rows[n][i] = v_n(lo + i)`.
    pub rows: Vec<Vec<f64>>,
    /// `h_n = sum_x v_n(x) exp(t x)` when a weight `t` was supplied.
    pub h: Option<Vec<f64>>,
}

impl ExpectationTable {
    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, n: usize, x: i64) -> f64 {
        if x < self.lo {
            return 0.0;
        }
        self.rows[n]
            .get((x - self.lo) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.width as i64).map(move |i| self.lo + i)
    }

    /// `sum_x v_n(x) f(x)`.
    pub fn weighted_sum(&self, n: usize, f: impl Fn(i64) -> f64) -> f64 {
        self.rows[n]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| v * f(self.lo + i as i64))
            .sum()
    }
}

/// `E[eta_{n+1}(x)] = sum_y E[eta_n(y)] p(y, x) m(y)`, `m(y) = 1` off the
/// catalysts, started from one particle at the model's initial site.
pub fn expectation_dp(
    model: &ModelSpec,
    n_max: usize,
    weight: Option<f64>,
) -> Result<ExpectationTable> {
    let law = model.walk();
    let x0 = model.initial();
    let n = n_max as i64;
    let lo = x0 + n * law.min_step();
    let hi = x0 + n * law.max_step();
    let width = (hi - lo + 1) as usize;
    check_budget(width.saturating_mul(n_max + 1))?;
    let multiplier: Vec<f64> = (lo..=hi).map(|x| model.m1(x)).collect();
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut first = vec![0.0; width];
    first[(x0 - lo) as usize] = 1.0;
    rows.push(first);
    for k in 0..n_max {
        let cur = &rows[k];
        let mut next = vec![0.0; width];
        // sites occupied at step k lie within k steps of x0
        let a = (x0 + k as i64 * law.min_step() - lo) as usize;
        let b = (x0 + k as i64 * law.max_step() - lo) as usize;
        for i in a..=b {
            let v = cur[i] * multiplier[i];
            if v == 0.0 {
                continue;
            }
            for (s, p) in law.pairs() {
                next[(i as i64 + s) as usize] += v * p;
            }
        }
        rows.push(next);
    }
    let mut table = ExpectationTable {
        lo,
        width,
        rows,
        h: None,
    };
    if let Some(t) = weight {
        let h = (0..=n_max)
            .map(|k| table.weighted_sum(k, |x| (t * x as f64).exp()))
            .collect();
        table.h = Some(h);
    }
    Ok(table)
}

/// Fit of `log(exp(-r n) v_n(x))` against `|x - c|`.
#[derive(Debug, Clone, Copy)]
pub struct ProfileFit {
    pub n: usize,
    /// Fitted decay rate (positive when the profile decays); compare with `t0`.
    pub rate: f64,
    pub rms_residual: f64,
    pub points: usize,
}

/// Fits the occupation profile on `2 <= |x - c| <= x_max`, using only sites
/// with `v_n(x) > 0` (so parity-matched sites for periodic walks).
pub fn occupation_profile_check(
    table: &ExpectationTable,
    catalyst: i64,
    r: f64,
    n: usize,
    x_max: i64,
) -> ProfileFit {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for dx in 2..=x_max {
        for x in [catalyst - dx, catalyst + dx] {
            let v = table.get(n, x);
            if v > 0.0 {
                xs.push(dx as f64);
                ys.push(v.ln() - r * n as f64);
            }
        }
    }
    let (slope, _, rms) = linear_fit(&xs, &ys);
    ProfileFit {
        n,
        rate: -slope,
        rms_residual: rms,
        points: xs.len(),
    }
}
