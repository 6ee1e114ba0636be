//! Small descriptive statistics used by tests and reports.

use serde::Serialize;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, variance: f64::NAN, std_error: f64::NAN };
        }
        let n = count as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = if count > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { count, mean, variance, std_error: (variance / n).sqrt() }
    }

    pub fn interval95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.std_error, self.mean + Z95 * self.std_error)
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Success frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frequency {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
}

impl Frequency {
    pub fn new(successes: u64, trials: u64) -> Self {
        let p = if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 };
        Self { successes, trials, estimate: p, std_error: (p * (1.0 - p) / trials as f64).sqrt() }
    }

    pub fn interval95(&self) -> (f64, f64) {
        (
            (self.estimate - Z95 * self.std_error).max(0.0),
            (self.estimate + Z95 * self.std_error).min(1.0),
        )
    }

    /// Standard error under the hypothesised probability `p`. Falls back to
    /// the empirical one when that is larger.
    pub fn std_error_at(&self, p: f64) -> f64 {
        let hyp = (p * (1.0 - p) / self.trials as f64).sqrt();
        hyp.max(self.std_error)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (plus, minus) = ks_one_sided(a, b);
    plus.max(minus)
}

/// One-sided statistics `(sup (F_a - F_b), sup (F_b - F_a))`.
pub fn ks_one_sided(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut plus, mut minus) = (0.0f64, 0.0f64);
    while i < x.len() || j < y.len() {
        let t = match (x.get(i), y.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        let d = i as f64 / na - j as f64 / nb;
        plus = plus.max(d);
        minus = minus.max(-d);
    }
    (plus, minus)
}

/// Critical value of the one-sided two-sample KS statistic at level `alpha`
/// (asymptotic: `sqrt(-ln(alpha) / 2 * (m + n) / (m n))`).
pub fn ks_one_sided_critical(m: usize, n: usize, alpha: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (-(alpha.ln()) / 2.0 * (m + n) / (m * n)).sqrt()
}

/// Total-variation distance between two pmfs on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    0.5 * (0..len)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_and_median() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(Moments::of(&[7.0]).std_error, 0.0);
    }

    #[test]
    fn ks_known_values() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        let (plus, minus) = ks_one_sided(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!((plus, minus), (1.0, 0.0));
        assert!(ks_one_sided_critical(100_000, 100_000, 1e-3) < 0.01);
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(total_variation(&[1.0], &[0.0, 1.0]), 1.0);
    }
}
