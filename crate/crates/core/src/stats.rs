//! Small statistics toolkit used by the Monte Carlo checks.
//!
//! Sums go through a Neumaier accumulator so that aggregates do not depend on
//! the order in which replicas are folded in (up to ~1e-15 relative).

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// An exact value (zero standard error).
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            se: 0.0,
            n: 0,
        }
    }

    /// Half-width of the normal 95% interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.se
    }

    /// Distance to `other` measured in combined standard errors.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        z_score(self.mean - other.mean, se)
    }

    /// Distance to an exact `value` in units of this estimate's SE.
    pub fn z_against_value(&self, value: f64) -> f64 {
        z_score(self.mean - value, self.se)
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Streaming mean/variance from compensated power sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanVar {
    n: usize,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum.value() / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate {
            mean: self.mean(),
            se,
            n: self.n,
        }
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut mv = MeanVar::new();
        for x in iter {
            mv.push(x);
        }
        mv
    }
}

/// Binomial proportion estimate with the usual plug-in standard error.
pub fn proportion(successes: usize, trials: usize) -> Estimate {
    if trials == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
            n: 0,
        };
    }
    let p = successes as f64 / trials as f64;
    Estimate {
        mean: p,
        se: (p * (1.0 - p) / trials as f64).sqrt(),
        n: trials,
    }
}

/// Linear-interpolated quantile (type 7) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Ordinary least squares fit `y = intercept + slope * x`; returns
/// `(slope, intercept, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn mean_var_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let mv: MeanVar = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((mv.mean() - mean).abs() < 1e-14);
        assert!((mv.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let (slope, intercept, rms) = linear_fit(&xs, &ys);
        assert!((slope + 0.5).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!(rms < 1e-12);
    }
}
