//! Exact dynamic programming on the integer lattice.
//!
//! Everything here works on a dense window of sites. A finite-support walk
//! started at a fixed site can only reach `[x0 + n*min_step, x0 + n*max_step]`
//! after `n` steps, so these recursions carry no truncation error unless a
//! routine says otherwise.

use std::collections::BTreeSet;

use crate::error::{CbrwError, Result};
use crate::walk::law::{gcd, StepLaw};

/// Default cap on the number of lattice cells a single DP may allocate.
pub const CELL_BUDGET: usize = 50_000_000;

pub(crate) fn check_budget(cells: usize) -> Result<()> {
    if cells > CELL_BUDGET {
        return Err(CbrwError::MemoryBudget {
            cells,
            budget: CELL_BUDGET,
            bytes: cells.saturating_mul(std::mem::size_of::<f64>()),
        });
    }
    Ok(())
}

/// `u_k = P(tau = k)` for `k = 0..=n_max` (`u_0 = 0`), where `tau` is the
/// first return time to the starting site.
#[derive(Debug, Clone)]
pub struct ReturnTimePmf {
    pub probs: Vec<f64>,
    /// `P(tau > n_max)`, accumulated directly rather than as `1 - sum`.
    pub tail: f64,
}

impl ReturnTimePmf {
    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `E[exp(-r tau); tau <= n_max]`.
    pub fn laplace(&self, r: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, u)| u * (-r * k as f64).exp())
            .sum()
    }

    /// `E[tau exp(-r tau); tau <= n_max]`.
    pub fn laplace_first_moment(&self, r: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, u)| k as f64 * u * (-r * k as f64).exp())
            .sum()
    }
}

/// Exact return-time distribution by forward DP with killing at the origin.
///
/// Mass that can no longer reach the origin within the remaining steps is
/// moved straight into the tail, which keeps the active window small.
pub fn return_time_pmf(law: &StepLaw, n_max: usize) -> Result<ReturnTimePmf> {
    if n_max == 0 {
        return Err(CbrwError::InvalidArgument(
            "n_max must be at least 1".into(),
        ));
    }
    let min = law.min_step();
    let max = law.max_step();
    let width = n_max as i64 * (max - min) + 1;
    check_budget(width as usize)?;
    let offset = -(n_max as i64) * min; // index of site 0
    let mut cur = vec![0.0f64; width as usize];
    let mut next = vec![0.0f64; width as usize];
    let mut probs = vec![0.0; n_max + 1];
    let mut dropped = 0.0;
    // active index range
    let (mut lo, mut hi) = (offset, offset);
    cur[offset as usize] = 1.0;
    for k in 1..=n_max {
        let new_lo = (lo + min).max(0);
        let new_hi = (hi + max).min(width - 1);
        for v in &mut next[new_lo as usize..=new_hi as usize] {
            *v = 0.0;
        }
        for i in lo..=hi {
            let mass = cur[i as usize];
            if mass == 0.0 {
                continue;
            }
            for (s, p) in law.pairs() {
                next[(i + s) as usize] += mass * p;
            }
        }
        probs[k] = next[offset as usize];
        next[offset as usize] = 0.0;
        // sites from which the origin is out of reach in the steps left
        let left = (n_max - k) as i64;
        lo = new_lo;
        hi = new_hi;
        while lo <= hi && lo < offset - left * max {
            dropped += next[lo as usize];
            next[lo as usize] = 0.0;
            lo += 1;
        }
        while hi >= lo && hi > offset - left * min {
            dropped += next[hi as usize];
            next[hi as usize] = 0.0;
            hi -= 1;
        }
        std::mem::swap(&mut cur, &mut next);
        if lo > hi {
            break;
        }
    }
    let alive: f64 = if lo <= hi {
        cur[lo as usize..=hi as usize].iter().sum()
    } else {
        0.0
    };
    Ok(ReturnTimePmf {
        probs,
        tail: alive + dropped,
    })
}

/// `P(tau > k, S_k = x)` for `k = 0..=n_max`, walk started at 0 and killed
/// on its first return there. At `x = 0` only `k = 0` contributes.
pub fn killed_occupation(law: &StepLaw, x: i64, n_max: usize) -> Result<Vec<f64>> {
    let min = law.min_step();
    let max = law.max_step();
    let width = n_max as i64 * (max - min) + 1;
    check_budget(width as usize)?;
    let offset = -(n_max as i64) * min;
    let mut cur = vec![0.0f64; width as usize];
    let mut next = vec![0.0f64; width as usize];
    cur[offset as usize] = 1.0;
    let mut out = vec![0.0; n_max + 1];
    out[0] = if x == 0 { 1.0 } else { 0.0 };
    let target = offset + x;
    let (mut lo, mut hi) = (offset, offset);
    for k in 1..=n_max {
        let new_lo = lo + min;
        let new_hi = hi + max;
        for v in &mut next[new_lo as usize..=new_hi as usize] {
            *v = 0.0;
        }
        for i in lo..=hi {
            let mass = cur[i as usize];
            if mass != 0.0 {
                for (s, p) in law.pairs() {
                    next[(i + s) as usize] += mass * p;
                }
            }
        }
        next[offset as usize] = 0.0;
        if x != 0 && (0..width).contains(&target) {
            out[k] = next[target as usize];
        }
        lo = new_lo;
        hi = new_hi;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(out)
}

/// Set of return times `k <= n_max` with `P(tau = k) > 0`, by a boolean
/// version of [`return_time_pmf`].
pub fn return_time_support(law: &StepLaw, n_max: usize) -> Result<Vec<usize>> {
    let min = law.min_step();
    let max = law.max_step();
    let width = n_max as i64 * (max - min) + 1;
    check_budget(width as usize)?;
    let offset = -(n_max as i64) * min;
    let mut cur = vec![false; width as usize];
    let mut next = vec![false; width as usize];
    cur[offset as usize] = true;
    let (mut lo, mut hi) = (offset, offset);
    let mut out = Vec::new();
    for k in 1..=n_max {
        let new_lo = (lo + min).max(0);
        let new_hi = (hi + max).min(width - 1);
        for v in &mut next[new_lo as usize..=new_hi as usize] {
            *v = false;
        }
        for i in lo..=hi {
            if cur[i as usize] {
                for &s in law.steps() {
                    next[(i + s) as usize] = true;
                }
            }
        }
        if next[offset as usize] {
            out.push(k);
            next[offset as usize] = false;
        }
        lo = new_lo;
        hi = new_hi;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(out)
}

/// Period `gcd{n >= 1 : P(tau = n) > 0}` of the return times.
///
/// The probe horizon starts at 64 and doubles until the gcd has stayed the
/// same over two consecutive doublings.
pub fn period(law: &StepLaw) -> u64 {
    let mut n_probe = 64usize;
    let mut previous: Option<u64> = None;
    let mut stable = 0;
    loop {
        let support = return_time_support(law, n_probe).expect("probe within budget");
        let d = support.iter().fold(0u64, |g, &k| gcd(g, k as u64));
        if previous == Some(d) {
            stable += 1;
            if stable >= 2 {
                return d;
            }
        } else {
            stable = 0;
        }
        previous = Some(d);
        n_probe *= 2;
    }
}

/// Dense table of values over the sites `lo..lo + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    pub lo: i64,
    pub values: Vec<f64>,
}

impl SiteTable {
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo && x <= self.hi()
    }

    /// Value at `x`, zero outside the table.
    pub fn get(&self, x: i64) -> f64 {
        if self.contains(x) {
            self.values[(x - self.lo) as usize]
        } else {
            0.0
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.lo + i as i64, v))
    }
}

/// Discounted hitting functional of a target set.
///
/// Solves `h(z) = E_z[exp(-r T) g(S_T); T < inf]`, `T` the hitting time of
/// the targets (`T = 0` on a target), on the window `[lo, hi]` with the walk
/// killed on leaving the window. The fixed-point equations
/// `h(z) = exp(-r) sum_s p(s) h(z + s)` off the targets form a strictly
/// diagonally dominant banded system, solved exactly by banded elimination.
pub fn killed_resolvent(
    law: &StepLaw,
    targets: &[(i64, f64)],
    r: f64,
    lo: i64,
    hi: i64,
) -> Result<SiteTable> {
    if r <= 0.0 {
        return Err(CbrwError::InvalidRate(r));
    }
    if hi < lo {
        return Err(CbrwError::InvalidArgument("empty window".into()));
    }
    let n = (hi - lo + 1) as usize;
    let kl = (-law.min_step()).max(0) as usize;
    let ku = law.max_step().max(0) as usize;
    let bw = kl + ku + 1;
    check_budget(n.saturating_mul(bw))?;
    // band[i * bw + (j - i + kl)] holds A[i][j]
    let mut band = vec![0.0f64; n * bw];
    let mut rhs = vec![0.0f64; n];
    let discount = (-r).exp();
    let target_value = |z: i64| targets.iter().find(|&&(c, _)| c == z).map(|&(_, g)| g);
    for i in 0..n {
        let z = lo + i as i64;
        if let Some(g) = target_value(z) {
            band[i * bw + kl] = 1.0;
            rhs[i] = g;
            continue;
        }
        band[i * bw + kl] = 1.0;
        for (s, p) in law.pairs() {
            let y = z + s;
            if y < lo || y > hi {
                continue;
            }
            let j = (y - lo) as usize;
            band[i * bw + (j + kl - i)] -= discount * p;
        }
    }
    // forward elimination, no pivoting needed
    for k in 0..n {
        let pivot = band[k * bw + kl];
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + ku).min(n - 1);
        for i in k + 1..=last_row {
            let a_ik = band[i * bw + (k + kl - i)];
            if a_ik == 0.0 {
                continue;
            }
            let factor = a_ik / pivot;
            for j in k..=last_col {
                band[i * bw + (j + kl - i)] -= factor * band[k * bw + (j + kl - k)];
            }
            rhs[i] -= factor * rhs[k];
        }
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let last_col = (i + ku).min(n - 1);
        let mut acc = rhs[i];
        for j in i + 1..=last_col {
            acc -= band[i * bw + (j + kl - i)] * x[j];
        }
        x[i] = acc / band[i * bw + kl];
    }
    Ok(SiteTable { lo, values: x })
}

/// Window margin (in sites) so that paths leaving the window contribute less
/// than `tol` after discounting at rate `r`: leaving takes at least
/// `margin / max_jump` steps.
pub fn resolvent_margin(law: &StepLaw, r: f64, tol: f64) -> i64 {
    let steps = ((1.0 / tol).ln() / r).ceil().max(1.0) as i64;
    steps * law.max_jump() + law.max_jump()
}

/// Exact law of the first strict ascending ladder height `H_1` (first value
/// of `S_n > 0`), propagated until the unabsorbed mass drops below
/// `mass_tol` or `n_max` steps elapse.
#[derive(Debug, Clone)]
pub struct LadderHeightLaw {
    /// `probs[h - 1] = P(H_1 = h)` for `h = 1..=max_step`.
    pub probs: Vec<f64>,
    /// `E[T_1; T_1 <= steps]` contributions.
    pub mean_epoch: f64,
    /// Mass still below or at zero after the last step.
    pub unabsorbed: f64,
    pub steps: usize,
}

impl LadderHeightLaw {
    pub fn mean_height(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

pub fn ladder_height_law(law: &StepLaw, n_max: usize, mass_tol: f64) -> Result<LadderHeightLaw> {
    let max = law.max_step();
    if max <= 0 {
        return Err(CbrwError::InvalidArgument("walk never ascends".into()));
    }
    let min = law.min_step().min(0);
    let depth = n_max as i64 * (-min) + 1; // sites 0, -1, ..., -(depth-1)
    check_budget(depth as usize)?;
    let mut cur = vec![0.0f64; depth as usize];
    let mut next = vec![0.0f64; depth as usize];
    cur[0] = 1.0;
    let mut probs = vec![0.0; max as usize];
    let mut mean_epoch = 0.0;
    let mut deepest = 0i64;
    let mut alive = 1.0;
    let mut steps = 0;
    for k in 1..=n_max {
        steps = k;
        let new_deepest = (deepest - min).min(depth - 1);
        for v in &mut next[..=new_deepest as usize] {
            *v = 0.0;
        }
        for d in 0..=deepest {
            let mass = cur[d as usize];
            if mass == 0.0 {
                continue;
            }
            let x = -d;
            for (s, p) in law.pairs() {
                let y = x + s;
                if y > 0 {
                    probs[(y - 1) as usize] += mass * p;
                    mean_epoch += k as f64 * mass * p;
                } else {
                    next[(-y) as usize] += mass * p;
                }
            }
        }
        deepest = new_deepest;
        std::mem::swap(&mut cur, &mut next);
        alive = cur[..=deepest as usize].iter().sum();
        if alive < mass_tol {
            break;
        }
    }
    Ok(LadderHeightLaw {
        probs,
        mean_epoch,
        unabsorbed: alive,
        steps,
    })
}

/// `P(S_1 > 0, ..., S_n > 0, S_n > level)` for the walk started at 0, by
/// exact DP over the strictly positive half-line.
pub fn stay_positive_above(law: &StepLaw, n: usize, level: f64) -> Result<f64> {
    if n == 0 {
        return Ok(if 0.0 > level { 1.0 } else { 0.0 });
    }
    let max = law.max_step();
    if max <= 0 {
        return Ok(0.0);
    }
    let width = n as i64 * max + 1;
    check_budget(width as usize)?;
    let mut cur = vec![0.0f64; width as usize];
    let mut next = vec![0.0f64; width as usize];
    cur[0] = 1.0;
    let mut top = 0i64;
    for k in 1..=n {
        let new_top = top + max;
        for v in &mut next[..=new_top as usize] {
            *v = 0.0;
        }
        let start = if k == 1 { 0 } else { 1 };
        for x in start..=top {
            let mass = cur[x as usize];
            if mass == 0.0 {
                continue;
            }
            for (s, p) in law.pairs() {
                let y = x + s;
                if y > 0 {
                    next[y as usize] += mass * p;
                }
            }
        }
        top = new_top;
        std::mem::swap(&mut cur, &mut next);
        cur[0] = 0.0;
    }
    Ok(cur
        .iter()
        .enumerate()
        .filter(|(x, _)| *x as f64 > level)
        .map(|(_, m)| m)
        .sum())
}

/// Sites reachable from `from` at exactly step counts `n` with
/// `n ≡ residue (mod period)`; helper for occupation parity classes.
pub fn reachable_residues(
    law: &StepLaw,
    target: i64,
    period: u64,
    horizon: usize,
) -> BTreeSet<u64> {
    let min = law.min_step();
    let max = law.max_step();
    let width = horizon as i64 * (max - min) + 1;
    let offset = -(horizon as i64) * min;
    let mut cur = vec![false; width as usize];
    let mut next = vec![false; width as usize];
    cur[offset as usize] = true;
    let mut residues = BTreeSet::new();
    if target == 0 {
        residues.insert(0);
    }
    for k in 1..=horizon {
        next.iter_mut().for_each(|v| *v = false);
        for i in 0..width {
            if cur[i as usize] {
                for &s in law.steps() {
                    let j = i + s;
                    if j >= 0 && j < width {
                        next[j as usize] = true;
                    }
                }
            }
        }
        let t = offset + target;
        if t >= 0 && t < width && next[t as usize] {
            residues.insert(k as u64 % period);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    residues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn simple_walk_return_times_match_catalan_formula() {
        let pmf = return_time_pmf(&StepLaw::simple(), 40).unwrap();
        assert_eq!(pmf.probs[1], 0.0);
        assert_eq!(pmf.probs[3], 0.0);
        assert!((pmf.probs[2] - 0.5).abs() < 1e-15);
        assert!((pmf.probs[4] - 0.125).abs() < 1e-15);
        assert!((pmf.probs[6] - 0.0625).abs() < 1e-15);
        for n in 1..=20u64 {
            let oracle = binomial(2 * n, n) / ((2 * n - 1) as f64 * 4f64.powi(n as i32));
            assert!((pmf.probs[2 * n as usize] - oracle).abs() < 1e-14);
        }
        assert!((pmf.total() + pmf.tail - 1.0).abs() < 1e-12);
    }

    #[test]
    fn return_mass_tends_to_one_for_zero_mean() {
        let lazy = StepLaw::lazy(0.2).unwrap();
        let short = return_time_pmf(&lazy, 50).unwrap().total();
        let long = return_time_pmf(&lazy, 2000).unwrap().total();
        assert!(short < long && long <= 1.0);
        assert!(long > 0.97);
    }

    #[test]
    fn drifted_tail_is_escape_probability() {
        let law = StepLaw::new(&[(-1, 0.25), (1, 0.75)]).unwrap();
        let pmf = return_time_pmf(&law, 400).unwrap();
        assert!((pmf.tail - 0.5).abs() < 1e-10);
    }

    #[test]
    fn periods() {
        assert_eq!(period(&StepLaw::simple()), 2);
        assert_eq!(period(&StepLaw::lazy(0.2).unwrap()), 1);
        assert_eq!(period(&StepLaw::new(&[(-1, 0.5), (2, 0.5)]).unwrap()), 3);
        assert_eq!(period(&StepLaw::new(&[(-2, 0.5), (3, 0.5)]).unwrap()), 5);
    }

    #[test]
    fn period_divides_support() {
        for law in [
            StepLaw::simple(),
            StepLaw::new(&[(-1, 0.5), (2, 0.5)]).unwrap(),
            StepLaw::new(&[(-3, 0.3), (1, 0.7)]).unwrap(),
        ] {
            let d = period(&law) as usize;
            let pmf = return_time_pmf(&law, 120).unwrap();
            for (k, u) in pmf.probs.iter().enumerate() {
                if *u > 0.0 {
                    assert_eq!(k % d, 0, "u_{k} > 0 but period {d}");
                }
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let law = StepLaw::new(&[(-1000, 0.5), (1001, 0.5)]).unwrap();
        assert!(matches!(
            return_time_pmf(&law, 100_000),
            Err(CbrwError::MemoryBudget { .. })
        ));
    }

    #[test]
    fn resolvent_matches_simple_walk_closed_form() {
        // E_x[exp(-rT)] = exp(-t |x|) with cosh(t) = exp(r)
        let law = StepLaw::simple();
        let r = 0.2f64;
        let t = r.exp().acosh();
        let margin = resolvent_margin(&law, r, 1e-14);
        let table = killed_resolvent(&law, &[(0, 1.0)], r, -margin, margin).unwrap();
        for x in -10..=10i64 {
            let expected = (-t * x.abs() as f64).exp();
            assert!((table.get(x) - expected).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn ladder_heights_for_nearest_neighbour_are_one() {
        let law = StepLaw::simple().tilt(0.5);
        let h = ladder_height_law(&law, 2000, 1e-15).unwrap();
        assert_eq!(h.probs.len(), 1);
        assert!((h.mean_height() - 1.0).abs() < 1e-12);
        // Wald: E[T_1] = E[H_1] / E[S_1]
        assert!((h.mean_epoch - 1.0 / law.mean()).abs() < 1e-10);
    }

    #[test]
    fn stay_positive_small_cases() {
        let law = StepLaw::simple();
        assert!((stay_positive_above(&law, 1, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // S_1 = 1, S_2 = 2 is the only path above 1
        assert!((stay_positive_above(&law, 2, 1.5).unwrap() - 0.25).abs() < 1e-15);
        // paths of length 3 staying positive: +++ , ++- , +-+ ... S_2 must be >0
        assert!((stay_positive_above(&law, 3, 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn parity_classes() {
        let simple = StepLaw::simple();
        assert_eq!(
            reachable_residues(&simple, 1, 2, 10)
                .into_iter()
                .collect::<Vec<_>>(),
            vec![1]
        );
        assert_eq!(
            reachable_residues(&simple, 0, 2, 10)
                .into_iter()
                .collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn killed_occupation_simple_walk() {
        let law = StepLaw::simple();
        let occ = killed_occupation(&law, 1, 5).unwrap();
        // P(S_1 = 1) = 1/2; P(tau > 3, S_3 = 1) = P(+,+,-) = 1/8
        assert_eq!(occ[0], 0.0);
        assert!((occ[1] - 0.5).abs() < 1e-15);
        assert_eq!(occ[2], 0.0);
        assert!((occ[3] - 0.125).abs() < 1e-15);
        let at_origin = killed_occupation(&law, 0, 5).unwrap();
        assert_eq!(at_origin, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
