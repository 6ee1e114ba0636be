//! Closed-form evaluators for the bounds and constants used by the
//! survival-threshold arguments. Everything here is a pure function of its
//! inputs; [`eval`] exposes them by name for the command line.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::Serialize;
use thiserror::Error;

use crate::starchain::lambda_from_c;

/// Default slack for bounds of the form `(1+η)·x`.
pub const DEFAULT_ETA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("unknown bound `{0}`")]
    UnknownBound(String),
    #[error("missing argument `{0}`")]
    MissingArgument(String),
    #[error("unexpected argument `{arg}` for `{name}`")]
    UnexpectedArgument { name: String, arg: String },
    #[error("invalid argument {0}")]
    InvalidArgument(String),
}

/// A named evaluation: the inputs echoed back, a headline value, every
/// secondary output, and the validity flags that qualify them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    pub outputs: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl BoundReport {
    fn new(name: &str, inputs: &[(&str, f64)], value: f64) -> Self {
        Self {
            name: name.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            outputs: BTreeMap::new(),
            flags: BTreeMap::new(),
        }
    }

    fn output(mut self, key: &str, v: f64) -> Self {
        self.outputs.insert(key.to_string(), v);
        self
    }

    fn flag(mut self, key: &str, ok: bool) -> Self {
        self.flags.insert(key.to_string(), ok);
        self
    }

    pub fn valid(&self) -> bool {
        self.flags.values().all(|&f| f)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.outputs.get(key).copied()
    }

    pub const CSV_HEADER: &'static str = "name,inputs,value,outputs,valid";

    /// One CSV row; maps are rendered as `key=value` joined by `;`.
    pub fn csv_row(&self) -> String {
        let join = |m: &BTreeMap<String, f64>| {
            m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
        };
        format!(
            "{},{},{},{},{}",
            self.name,
            join(&self.inputs),
            self.value,
            join(&self.outputs),
            self.valid()
        )
    }
}

/// Expected dual particles from a level-`i` vertex reaching the root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualPathBound {
    /// `Σ_{m ≤ m_max} C(i+2m, m) λ^{i+2m} d^m`.
    pub partial_sum: f64,
    /// Geometric majorant of the omitted terms, `(2λ)^i q^{m_max+1}/(1-q)`.
    pub tail_bound: f64,
    pub q: f64,
    /// `λ^i (1 + 2^i q/(1-q))`; meaningful only when `q < 1`.
    pub closed: f64,
    pub converges: bool,
}

pub fn dual_path_bound(i: u32, lambda: f64, d: f64, m_max: u32) -> DualPathBound {
    let q = 4.0 * lambda * lambda * d;
    let li = lambda.powi(i as i32);
    let mut term = li;
    let mut partial_sum = term;
    for m in 1..=m_max {
        let (m, i) = (m as f64, i as f64);
        // C(i+2m, m) / C(i+2m-2, m-1)
        let ratio = (i + 2.0 * m) * (i + 2.0 * m - 1.0) / (m * (i + m));
        term *= ratio * lambda * lambda * d;
        partial_sum += term;
    }
    let converges = q < 1.0;
    let geometric = 2f64.powi(i as i32) * li;
    let (closed, tail_bound) = if converges {
        (
            li * (1.0 + 2f64.powi(i as i32) * q / (1.0 - q)),
            geometric * q.powi(m_max as i32 + 1) / (1.0 - q),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    DualPathBound { partial_sum, tail_bound, q, closed, converges }
}

/// `(1+η)λ^i`.
pub fn equilibrium_occupancy_bound(i: u32, lambda: f64, eta: f64) -> f64 {
    (1.0 + eta) * lambda.powi(i as i32)
}

/// `d^k e^{-t/2}`.
pub fn subtree_extinction_bound(t: f64, d: f64, k: u32) -> f64 {
    d.powi(k as i32) * (-t / 2.0).exp()
}

/// The extinction horizon `M = 4k log n`.
pub fn m_of(n: u64, k: u32) -> f64 {
    4.0 * k as f64 * (n as f64).ln()
}

/// `w_θ = Σ_y θ^{ℓ(y)}` over a multiset of levels.
pub fn level_weight<I: IntoIterator<Item = u32>>(levels: I, theta: f64) -> f64 {
    levels.into_iter().map(|l| theta.powi(l as i32)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalBracket {
    /// `e^{(1-η)λ²n} / (λ²n)`.
    pub lower: f64,
    /// `C₀ (log n) e^{(1+ε)λ²n}`.
    pub upper: f64,
    /// The bracket is usable: both ends finite and `lower < upper`.
    pub usable: bool,
}

pub fn survival_bracket(n: u64, lambda: f64, eps: f64, eta: f64, c0: f64) -> SurvivalBracket {
    let s = lambda * lambda * n as f64;
    let upper = c0 * (n as f64).ln() * ((1.0 + eps) * s).exp();
    let lower = if s > 0.0 { ((1.0 - eta) * s).exp() / s } else { f64::INFINITY };
    let usable = lower.is_finite() && upper.is_finite() && lower < upper;
    SurvivalBracket { lower, upper, usable }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalConstant {
    /// `log(a₁⋯a_k) / log n`.
    pub b: f64,
    /// `(k - b)/2`.
    pub c: f64,
    /// `sqrt(c log n / n)`; NaN when `c <= 0`.
    pub scale: f64,
}

pub fn critical_constant(degrees: &[usize], n: u64) -> CriticalConstant {
    let k = degrees.len() as f64;
    let ln_n = (n as f64).ln();
    let b = degrees.iter().map(|&a| (a as f64).ln()).sum::<f64>() / ln_n;
    let c = (k - b) / 2.0;
    let scale = if c > 0.0 { lambda_from_c(c, n) } else { f64::NAN };
    CriticalConstant { b, c, scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PushProbability {
    /// `(e^{-1}(1-e^{-λ})e^{-1})^{k+1}`.
    pub exact: f64,
    /// `C₁λ^{k+1}` with `C₁ = (1/(2e²))^{k+1}`.
    pub small_lambda: f64,
}

/// Lower bound on passing a particle from one hub center to another at
/// distance `k+1`.
pub fn push_probability_lower(lambda: f64, k: u32) -> PushProbability {
    let step = -(-lambda).exp_m1() / (E * E);
    let c1 = (1.0 / (2.0 * E * E)).powi(k as i32 + 1);
    PushProbability {
        exact: step.powi(k as i32 + 1),
        small_lambda: c1 * lambda.powi(k as i32 + 1),
    }
}

/// Second-moment bookkeeping for out-and-back paths of `m` hub-to-hub steps
/// with `N` choices per step and push probability `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnPathMoments {
    /// `(2√N p)^{2m}`: the bound on expected returns to the root.
    pub first_moment_bound: f64,
    /// `E N_m = (N p²)^m`.
    pub mean: f64,
    /// `overlap[k] = (N p²)^{k + 2(m-k)}`, pairs sharing the last `k` steps.
    pub overlap: Vec<f64>,
    /// `Σ_k overlap[k]`.
    pub second_moment: f64,
    /// `Σ_{ℓ=1}^m (N p²)^{-ℓ}`.
    pub correction: f64,
    /// `(E N_m)² / E N_m²`.
    pub ratio: f64,
}

pub fn return_path_moments(m: u32, big_n: f64, p: f64) -> ReturnPathMoments {
    let r = big_n * p * p;
    let overlap: Vec<f64> = (0..=m).map(|k| r.powi((2 * m - k) as i32)).collect();
    let second_moment = overlap.iter().sum();
    let correction = (1..=m).map(|l| r.powi(-(l as i32))).sum::<f64>();
    ReturnPathMoments {
        first_moment_bound: (2.0 * big_n.sqrt() * p).powi(2 * m as i32),
        mean: r.powi(m as i32),
        overlap,
        second_moment,
        correction,
        ratio: 1.0 / (1.0 + correction),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaySchedule {
    /// Longest tolerated vacancy of a hub center, `2/((1-4δ)η)`.
    pub t0: f64,
    /// One push attempt, `t₀ + 2`.
    pub t1: f64,
    /// `n^c / t₁`.
    pub attempts: f64,
    pub lambda: f64,
    /// Two-step push probability `(e^{-2}(1-e^{-λ}))²`.
    pub push: f64,
    /// `(1 - push)^{attempts}`.
    pub all_fail: f64,
    /// `(1 - C₁ log n / n)^{attempts}` with `C₁ = c/(4e⁴)`.
    pub all_fail_displayed: f64,
    /// `exp(-C₂ n^{c-1} log n)` with `C₂ = C₁/t₁`.
    pub all_fail_exp: f64,
}

pub fn relay_schedule(delta: f64, eta: f64, n: u64, c: f64) -> RelaySchedule {
    let t0 = 2.0 / ((1.0 - 4.0 * delta) * eta);
    let t1 = t0 + 2.0;
    let nf = n as f64;
    let attempts = nf.powf(c) / t1;
    let lambda = lambda_from_c(c, n);
    let push = push_probability_lower(lambda, 1).exact;
    let c1 = c / (4.0 * E.powi(4));
    RelaySchedule {
        t0,
        t1,
        attempts,
        lambda,
        push,
        all_fail: (1.0 - push).powf(attempts),
        all_fail_displayed: (1.0 - c1 * nf.ln() / nf).powf(attempts),
        all_fail_exp: (-(c1 / t1) * nf.powf(c - 1.0) * nf.ln()).exp(),
    }
}

/// Names accepted by [`eval`].
pub const BOUND_NAMES: &[&str] = &[
    "dual_path",
    "equilibrium_occupancy",
    "subtree_extinction",
    "survival_bracket",
    "critical_constant",
    "push_probability",
    "return_path_moments",
    "relay_schedule",
];

struct Args<'a> {
    name: &'a str,
    raw: &'a BTreeMap<String, String>,
    used: Vec<&'a str>,
}

impl<'a> Args<'a> {
    fn num(&mut self, key: &'a str, default: Option<f64>) -> Result<f64, BoundsError> {
        self.used.push(key);
        match self.raw.get(key) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| BoundsError::InvalidArgument(format!("{key}={s}"))),
            None => default.ok_or_else(|| BoundsError::MissingArgument(key.to_string())),
        }
    }

    fn int(&mut self, key: &'a str, default: Option<u64>) -> Result<u64, BoundsError> {
        let v = self.num(key, default.map(|d| d as f64))?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(BoundsError::InvalidArgument(format!("{key}={v} is not a count")));
        }
        Ok(v as u64)
    }

    fn degrees(&mut self, key: &'a str) -> Result<Vec<usize>, BoundsError> {
        self.used.push(key);
        let s = self.raw.get(key).ok_or_else(|| BoundsError::MissingArgument(key.into()))?;
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&a| a >= 1)
                    .ok_or_else(|| BoundsError::InvalidArgument(format!("{key}={s}")))
            })
            .collect()
    }

    fn finish(self) -> Result<(), BoundsError> {
        match self.raw.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(BoundsError::UnexpectedArgument {
                name: self.name.to_string(),
                arg: k.clone(),
            }),
            None => Ok(()),
        }
    }
}

/// Evaluates a bound by name from `key=value` arguments. `degrees` is a
/// comma-separated list; all other arguments are numbers.
pub fn eval(name: &str, raw: &BTreeMap<String, String>) -> Result<BoundReport, BoundsError> {
    let mut a = Args { name, raw, used: Vec::new() };
    let report = match name {
        "dual_path" => {
            let i = a.int("i", None)?;
            let lambda = a.num("lambda", None)?;
            let d = a.num("d", None)?;
            let m_max = a.int("m_max", Some(50))?;
            let b = dual_path_bound(i as u32, lambda, d, m_max as u32);
            let inputs = [("i", i as f64), ("lambda", lambda), ("d", d), ("m_max", m_max as f64)];
            BoundReport::new(name, &inputs, b.closed)
                .output("partial_sum", b.partial_sum)
                .output("tail_bound", b.tail_bound)
                .output("q", b.q)
                .output("closed", b.closed)
                .flag("series_converges", b.converges)
        }
        "equilibrium_occupancy" => {
            let i = a.int("i", None)?;
            let lambda = a.num("lambda", None)?;
            let eta = a.num("eta", Some(DEFAULT_ETA))?;
            let v = equilibrium_occupancy_bound(i as u32, lambda, eta);
            BoundReport::new(name, &[("i", i as f64), ("lambda", lambda), ("eta", eta)], v)
                .flag("level_positive", i >= 1)
                .flag("eta_nonnegative", eta >= 0.0)
        }
        "subtree_extinction" => {
            let t = a.num("t", None)?;
            let d = a.num("d", None)?;
            let k = a.int("k", None)?;
            let n = a.int("n", Some(0))?;
            let v = subtree_extinction_bound(t, d, k as u32);
            let mut r = BoundReport::new(name, &[("t", t), ("d", d), ("k", k as f64)], v)
                .flag("time_nonnegative", t >= 0.0);
            if n >= 2 {
                r.inputs.insert("n".into(), n as f64);
                r = r.output("M", m_of(n, k as u32));
            }
            r
        }
        "survival_bracket" => {
            let n = a.int("n", None)?;
            let lambda = a.num("lambda", None)?;
            let eps = a.num("eps", Some(DEFAULT_ETA))?;
            let eta = a.num("eta", Some(DEFAULT_ETA))?;
            let c0 = a.num("c0", Some(1.0))?;
            let b = survival_bracket(n, lambda, eps, eta, c0);
            let inputs =
                [("n", n as f64), ("lambda", lambda), ("eps", eps), ("eta", eta), ("c0", c0)];
            BoundReport::new(name, &inputs, b.lower)
                .output("lower", b.lower)
                .output("upper", b.upper)
                .flag("n_at_least_2", n >= 2)
                .flag("lambda_positive", lambda > 0.0)
                .flag("lower_below_upper", b.usable)
        }
        "critical_constant" => {
            let degrees = a.degrees("degrees")?;
            let n = a.int("n", None)?;
            let cc = critical_constant(&degrees, n);
            BoundReport::new(name, &[("k", degrees.len() as f64), ("n", n as f64)], cc.c)
                .output("b", cc.b)
                .output("c", cc.c)
                .output("scale", cc.scale)
                .flag("n_at_least_2", n >= 2)
                .flag("c_positive", cc.c > 0.0)
        }
        "push_probability" => {
            let lambda = a.num("lambda", None)?;
            let k = a.int("k", None)?;
            let p = push_probability_lower(lambda, k as u32);
            BoundReport::new(name, &[("lambda", lambda), ("k", k as f64)], p.exact)
                .output("exact", p.exact)
                .output("small_lambda", p.small_lambda)
                .flag("lambda_positive", lambda > 0.0)
        }
        "return_path_moments" => {
            let m = a.int("m", None)?;
            let big_n = a.num("N", None)?;
            let p = a.num("p", None)?;
            let r = return_path_moments(m as u32, big_n, p);
            let mut rep = BoundReport::new(name, &[("m", m as f64), ("N", big_n), ("p", p)], r.ratio)
                .output("first_moment_bound", r.first_moment_bound)
                .output("mean", r.mean)
                .output("second_moment", r.second_moment)
                .output("correction", r.correction)
                .output("ratio", r.ratio)
                .flag("N_at_least_1", big_n >= 1.0)
                .flag("p_in_unit_interval", p > 0.0 && p <= 1.0);
            for (k, t) in r.overlap.iter().enumerate() {
                rep = rep.output(&format!("overlap_{k}"), *t);
            }
            rep
        }
        "relay_schedule" => {
            let delta = a.num("delta", None)?;
            let eta = a.num("eta", None)?;
            let n = a.int("n", None)?;
            let c = a.num("c", None)?;
            let s = relay_schedule(delta, eta, n, c);
            let inputs = [("delta", delta), ("eta", eta), ("n", n as f64), ("c", c)];
            BoundReport::new(name, &inputs, s.all_fail)
                .output("t0", s.t0)
                .output("t1", s.t1)
                .output("attempts", s.attempts)
                .output("lambda", s.lambda)
                .output("push", s.push)
                .output("all_fail", s.all_fail)
                .output("all_fail_displayed", s.all_fail_displayed)
                .output("all_fail_exp", s.all_fail_exp)
                .flag("delta_below_quarter", delta > 0.0 && delta < 0.25)
                .flag("eta_in_unit_interval", eta > 0.0 && eta < 1.0)
        }
        other => return Err(BoundsError::UnknownBound(other.to_string())),
    };
    a.finish()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn dual_path_values() {
        let b = dual_path_bound(3, 0.2, 2.0, 0);
        assert!((b.partial_sum - 0.008).abs() < 1e-15);
        let b = dual_path_bound(1, 0.1, 4.0, 50);
        assert!((b.q - 0.16).abs() < 1e-15);
        assert!((b.closed - 0.1 * (1.0 + 2.0 * 0.16 / 0.84)).abs() < 1e-15);
        assert!((b.closed - 0.138095).abs() < 1e-6);
        assert!(b.partial_sum <= b.closed);
        assert!(!dual_path_bound(1, 0.5, 1.0, 5).converges);
    }

    #[test]
    fn dual_path_partial_sums_grow_and_stay_below_closed_form() {
        for i in 1..6 {
            for &(lambda, d) in &[(0.1, 4.0), (0.2, 3.0), (0.05, 50.0), (0.3, 2.0)] {
                let mut prev = 0.0;
                for m_max in 0..80 {
                    let b = dual_path_bound(i, lambda, d, m_max);
                    assert!(b.partial_sum >= prev);
                    assert!(b.partial_sum <= b.closed * (1.0 + 1e-12));
                    // the tail bound certifies the distance to the full sum
                    let far = dual_path_bound(i, lambda, d, 400).partial_sum;
                    assert!(far - b.partial_sum <= b.tail_bound * (1.0 + 1e-9) + 1e-300);
                    prev = b.partial_sum;
                }
            }
        }
    }

    /// Direct binomial evaluation against the recurrence.
    #[test]
    fn dual_path_terms_match_binomials() {
        fn binom(n: u64, k: u64) -> f64 {
            (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
        }
        let (i, lambda, d) = (2u32, 0.15f64, 3.0f64);
        let direct: f64 = (0..=10u64)
            .map(|m| {
                binom(i as u64 + 2 * m, m) * lambda.powi(i as i32 + 2 * m as i32) * d.powi(m as i32)
            })
            .sum();
        assert!((dual_path_bound(i, lambda, d, 10).partial_sum - direct).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_and_extinction() {
        assert_eq!(equilibrium_occupancy_bound(1, 0.3, 0.0), 0.3);
        for lambda in [0.0, 0.01, 0.5, 2.0] {
            for eta in [0.0, 0.1, 1.0] {
                assert!(lambda / (1.0 + lambda) <= equilibrium_occupancy_bound(1, lambda, eta));
            }
        }
        let (d, k) = (3.0f64, 2u32);
        let t = 2.0 * k as f64 * d.ln();
        assert!((subtree_extinction_bound(t, d, k) - 1.0).abs() < 1e-12);
        assert!((subtree_extinction_bound(10.0, 4.0, 1) - 4.0 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((subtree_extinction_bound(10.0, 4.0, 1) - 0.02695).abs() < 1e-5);
        assert!((m_of(100, 2) - 8.0 * 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn level_weights() {
        assert_eq!(level_weight([0], 0.5), 1.0);
        assert_eq!(level_weight([0, 1, 1, 1, 1], 0.5), 3.0);
        assert_eq!(level_weight(std::iter::empty(), 0.5), 0.0);
    }

    #[test]
    fn survival_bracket_values() {
        assert!(!survival_bracket(100, 0.0, 0.1, 0.1, 1.0).usable);
        let n = 300;
        let lambda = (300f64.ln() / 300.0).sqrt();
        let b = survival_bracket(n, lambda, 0.1, 0.5, 1.0);
        assert!((b.lower - 3.04).abs() < 5e-3, "{}", b.lower);
        assert!(b.usable);
        // ratio grows with λ²n at fixed slack
        let mut prev = 0.0;
        for n in [1e2f64, 1e3, 1e4, 1e5, 1e6] {
            let lambda = (n.ln() / n).sqrt();
            let b = survival_bracket(n as u64, lambda, 0.1, 0.1, 1.0);
            let r = b.upper / b.lower;
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn survival_bracket_exponents_converge() {
        let (eps, eta) = (0.2, 0.3);
        for s in [50.0, 200.0, 500.0] {
            let n = 1_000_000u64;
            let lambda = (s / n as f64).sqrt();
            let b = survival_bracket(n, lambda, eps, eta, 1.0);
            let up = b.upper.ln() / s;
            let lo = b.lower.ln() / s;
            let tol = 20.0 / s;
            assert!((up - (1.0 + eps)).abs() < tol);
            assert!((lo - (1.0 - eta)).abs() < tol);
        }
    }

    #[test]
    fn critical_constant_values() {
        for n in [10u64, 100, 10_000, 1 << 30] {
            let c = critical_constant(&[1], n);
            assert_eq!((c.b, c.c), (0.0, 0.5));
            assert!((c.scale - (0.5 * (n as f64).ln() / n as f64).sqrt()).abs() < 1e-15);
        }
        let c = critical_constant(&[10, 10], 100);
        assert!((c.b - 1.0).abs() < 1e-15 && (c.c - 0.5).abs() < 1e-15);
        assert_eq!(critical_constant(&[1, 1], 50).c, 1.0);
    }

    #[test]
    fn push_probability_values() {
        let p = push_probability_lower(0.1, 1);
        assert!((p.exact - 1.6587e-4).abs() < 1e-8, "{}", p.exact);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = push_probability_lower(i as f64 * 0.05, 2).exact;
            assert!(v > prev);
            prev = v;
        }
        // small-λ form with C₁ = (1/(2e²))^{k+1}: the ratio tends to 2^{k+1}
        for k in 0..4u32 {
            let p = push_probability_lower(1e-7, k);
            assert!((p.exact / p.small_lambda - 2f64.powi(k as i32 + 1)).abs() < 1e-5);
            assert!(p.exact >= p.small_lambda);
        }
    }

    #[test]
    fn return_path_values() {
        let r = return_path_moments(1, 4.0, 0.1);
        assert!((r.first_moment_bound - 0.16).abs() < 1e-15);
        // geometric decay when 2√N p < 1
        let a = return_path_moments(3, 4.0, 0.1).first_moment_bound;
        let b = return_path_moments(4, 4.0, 0.1).first_moment_bound;
        assert!((b / a - 0.16).abs() < 1e-12);
        // second moment = mean² (1 + correction)
        let r = return_path_moments(5, 100.0, 0.3);
        assert_eq!(r.overlap.len(), 6);
        assert!((r.second_moment - r.mean * r.mean * (1.0 + r.correction)).abs() < 1e-9 * r.second_moment);
    }

    #[test]
    fn return_path_ratio_near_one_at_reference_point() {
        let n = 10_000f64;
        let p = n.powf(0.75 - 1.0);
        // N p² = 100: the correction is Σ 100^{-ℓ}, which reaches 0.01 at m = 1
        // and tends to 1/99, while the deficit 1 - ratio stays below 1/100
        for m in 1..=5 {
            let r = return_path_moments(m, n, p);
            assert!(1.0 - r.ratio < 0.01, "m={m} ratio={}", r.ratio);
            assert!(r.correction >= 0.01 - 1e-15 && r.correction < 1.0 / 99.0);
        }
    }

    #[test]
    fn relay_schedule_values() {
        let s = relay_schedule(0.1, 0.5, 100, 0.5);
        assert!((s.t0 - 2.0 / 0.3).abs() < 1e-12);
        assert!((s.t1 - 8.6667).abs() < 1e-4);
        assert!((s.attempts - 10.0 / s.t1).abs() < 1e-12);
        assert!((s.attempts - 1.154).abs() < 1e-3);
        assert!((relay_schedule(1e-9, 1.0 - 1e-9, 100, 0.5).t0 - 2.0).abs() < 1e-6);
        assert!(s.all_fail > 0.0 && s.all_fail < 1.0);
    }

    #[test]
    fn eval_dispatch() {
        let r = eval("dual_path", &args(&[("i", "1"), ("lambda", "0.1"), ("d", "4")])).unwrap();
        assert!((r.value - 0.138095).abs() < 1e-6);
        assert!(r.valid());
        assert_eq!(r.inputs["m_max"], 50.0);
        let r = eval("critical_constant", &args(&[("degrees", "10,10"), ("n", "100")])).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
        let r = eval("survival_bracket", &args(&[("n", "100"), ("lambda", "0")])).unwrap();
        assert!(!r.valid());
        assert!(matches!(eval("nope", &args(&[])), Err(BoundsError::UnknownBound(_))));
        assert!(matches!(
            eval("push_probability", &args(&[("lambda", "0.1")])),
            Err(BoundsError::MissingArgument(_))
        ));
        assert!(matches!(
            eval("push_probability", &args(&[("lambda", "0.1"), ("k", "1"), ("x", "2")])),
            Err(BoundsError::UnexpectedArgument { .. })
        ));
        for name in BOUND_NAMES {
            assert!(!matches!(eval(name, &args(&[])), Err(BoundsError::UnknownBound(_))));
        }
        let row = eval("push_probability", &args(&[("lambda", "0.1"), ("k", "1")]))
            .unwrap()
            .csv_row();
        assert!(row.starts_with("push_probability,k=1;lambda=0.1,"));
    }

    #[test]
    fn evaluators_are_deterministic() {
        let a = return_path_moments(7, 1234.0, 0.01);
        let b = return_path_moments(7, 1234.0, 0.01);
        assert_eq!(a, b);
        assert_eq!(dual_path_bound(2, 0.1, 3.0, 30), dual_path_bound(2, 0.1, 3.0, 30));
    }
}
