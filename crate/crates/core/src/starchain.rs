//! One-dimensional machinery for the star: the leaves lost while the center
//! is vacant, the reduced chain that lower-bounds the occupied-leaf count,
//! the supermartingale `h(x) = (1-θ)^x` with its hitting bound, and the
//! ignition dynamics of a hub started from its center alone.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside the supermartingale regime: {0}")]
    Regime(String),
    #[error("inconsistent stop bounds: a = {a} must be below b = {b}")]
    InconsistentStops { a: u64, b: u64 },
    #[error("ordering violated: {0}")]
    Ordering(String),
}

/// Floor that tolerates representation error just below an integer, so that
/// e.g. `0.6 * 0.1 * 1e4` floors to 600.
pub fn floor_level(x: f64) -> u64 {
    (x + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as u64
}

/// `(λ, n, δ)` together with the level `L = ⌊(1-4δ)λn⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarChainParams {
    pub lambda: f64,
    pub n: u64,
    pub delta: f64,
    pub level: u64,
}

impl StarChainParams {
    pub fn new(lambda: f64, n: u64, delta: f64) -> Result<Self, ChainError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ChainError::InvalidParameter(format!("lambda = {lambda}")));
        }
        if n == 0 {
            return Err(ChainError::InvalidParameter("n must be >= 1".into()));
        }
        if !(delta > 0.0 && delta < 0.25) {
            return Err(ChainError::InvalidParameter(format!("delta = {delta} not in (0, 1/4)")));
        }
        let level = floor_level((1.0 - 4.0 * delta) * lambda * n as f64);
        if level < 1 {
            return Err(ChainError::InvalidParameter(format!(
                "level L = (1-4δ)λn rounds to 0 for λ = {lambda}, n = {n}, δ = {delta}"
            )));
        }
        Ok(Self { lambda, n, delta, level })
    }

    /// `λ = sqrt(c log n / n)`.
    pub fn from_c(c: f64, n: u64, delta: f64) -> Result<Self, ChainError> {
        Self::new(lambda_from_c(c, n), n, delta)
    }

    /// Rate of `X -> X - 1`.
    pub fn down_rate(&self) -> f64 {
        self.level as f64
    }

    /// Rate of `X -> min(X + 1, L)`.
    pub fn up_rate(&self) -> f64 {
        (1.0 - self.delta) * self.lambda * self.n as f64
    }

    pub fn theta(&self) -> Result<f64, ChainError> {
        theta_of(self)
    }
}

pub fn lambda_from_c(c: f64, n: u64) -> f64 {
    (c * (n as f64).ln() / n as f64).sqrt()
}

/// `P(Z = j) = (1/(1+λ))^j · λ/(1+λ)`.
pub fn loss_pmf(lambda: f64, j: u64) -> f64 {
    let q = 1.0 / (1.0 + lambda);
    q.powf(j as f64) * lambda / (1.0 + lambda)
}

/// Leaves lost during one vacant-center excursion; sampled by inverting the
/// geometric tail `P(Z >= j) = (1+λ)^{-j}`.
pub fn sample_loss_z<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64, ChainError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ChainError::InvalidParameter(format!(
            "loss variable needs λ > 0, got {lambda}"
        )));
    }
    Ok(geometric_by_inversion(lambda, rng))
}

#[inline]
fn geometric_by_inversion<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    // 1 - U lies in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    (u.ln() / -lambda.ln_1p()).floor() as u64
}

/// `θ = (λ - 1/(δλn)) / (1 + λ)`; requires `δλ²n > 1`.
pub fn theta_of(params: &StarChainParams) -> Result<f64, ChainError> {
    let StarChainParams { lambda, n, delta, .. } = *params;
    let regime = delta * lambda * lambda * n as f64;
    if regime <= 1.0 {
        return Err(ChainError::Regime(format!("δλ²n = {regime} must exceed 1")));
    }
    Ok((lambda - 1.0 / (delta * lambda * n as f64)) / (1.0 + lambda))
}

/// `E (1-θ)^{-Z} = λ(1-θ) / (λ - θ - θλ)`, finite when `(1+λ)(1-θ) > 1`.
pub fn expected_loss_weight(lambda: f64, theta: f64) -> Result<f64, ChainError> {
    let denom = lambda - theta - theta * lambda;
    if !(theta >= 0.0 && theta < 1.0) || denom <= 0.0 {
        return Err(ChainError::Regime(format!(
            "E(1-θ)^(-Z) diverges for θ = {theta}, λ = {lambda}"
        )));
    }
    Ok(lambda * (1.0 - theta) / denom)
}

/// Generator applied to `h(x) = (1-θ)^x`, divided by `h(x)`, split by jump type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftTerms {
    pub down: f64,
    pub up: f64,
    pub loss: f64,
    pub total: f64,
}

/// Exact drift of `h` per unit `h` for `x < L`, with the loss jump taken
/// without the floor at 0 (the floor only lowers the drift).
pub fn drift_terms(params: &StarChainParams, theta: f64) -> Result<DriftTerms, ChainError> {
    let down = params.down_rate() * (1.0 / (1.0 - theta) - 1.0);
    let up = -params.up_rate() * theta;
    let loss = expected_loss_weight(params.lambda, theta)? - 1.0;
    Ok(DriftTerms { down, up, loss, total: down + up + loss })
}

/// Drift of `h(X_t)` at `x` for the θ returned by [`theta_of`], per unit `h`.
pub fn drift_of_h(x: u64, params: &StarChainParams) -> Result<f64, ChainError> {
    if x < 1 || x >= params.level {
        return Err(ChainError::InvalidParameter(format!(
            "drift is taken for 1 <= x < L = {}, got {x}",
            params.level
        )));
    }
    let theta = theta_of(params)?;
    if (1.0 + params.lambda) * (1.0 - theta) <= 1.0 {
        return Err(ChainError::Regime("(1+λ)(1-θ) must exceed 1".into()));
    }
    Ok(drift_terms(params, theta)?.total)
}

/// Largest θ for which the drift of `h` is still nonpositive.
///
/// The drift per unit `h` is convex in θ and vanishes at 0, so it is
/// negative exactly on `(0, θ*)`. Errors when its slope at 0,
/// `L - (1-δ)λn + 1/λ`, is not negative.
pub fn theta_max(params: &StarChainParams) -> Result<f64, ChainError> {
    let slope = params.down_rate() - params.up_rate() + 1.0 / params.lambda;
    if slope >= 0.0 {
        return Err(ChainError::Regime(format!("drift slope at θ = 0 is {slope} >= 0")));
    }
    let drift = |t: f64| drift_terms(params, t).map(|d| d.total).unwrap_or(f64::INFINITY);
    let mut lo = 0.0;
    let mut hi = params.lambda / (1.0 + params.lambda);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drift(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `P_x(T_a^- < T_b) <= (h(x) - h(b)) / (h(a-1) - h(b))` with `h(y) = (1-θ)^y`.
pub fn hitting_bound(a: u64, x: u64, b: u64, theta: f64) -> Result<f64, ChainError> {
    if !(a < x && x <= b) {
        return Err(ChainError::Ordering(format!("need a < x <= b, got a={a} x={x} b={b}")));
    }
    check_theta(theta)?;
    if x == b {
        return Ok(0.0);
    }
    // h(a-1) factored out, which also keeps a = 0 meaningful
    let num = (1.0 - theta).powf((x - a + 1) as f64) - (1.0 - theta).powf((b - a + 1) as f64);
    let den = 1.0 - (1.0 - theta).powf((b - a + 1) as f64);
    Ok((num / den).clamp(0.0, 1.0))
}

/// The `x = b - 1` bound after replacing `h(b)` by `h(b-1)` in the
/// denominator: `θ r / (1 - r)` with `r = h(b-1)/h(a-1)`. It is never smaller
/// than [`hitting_bound`] at `x = b - 1`.
pub fn hitting_bound_adjacent(a: u64, b: u64, theta: f64) -> Result<f64, ChainError> {
    if a + 1 >= b {
        return Err(ChainError::Ordering(format!("need a < b - 1, got a={a} b={b}")));
    }
    check_theta(theta)?;
    let r = (1.0 - theta).powf((b - a) as f64);
    Ok(theta * r / (1.0 - r))
}

fn check_theta(theta: f64) -> Result<(), ChainError> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(ChainError::InvalidParameter(format!("θ = {theta} not in (0, 1)")))
    }
}

/// Occupancy probability of a leaf next to a permanently occupied center,
/// started vacant: `λ(1 - e^{-(λ+1)t}) / (λ+1)`.
pub fn leaf_occupancy_curve(t: f64, lambda: f64) -> f64 {
    lambda * -(-(lambda + 1.0) * t).exp_m1() / (lambda + 1.0)
}

/// Largest `t` such that `p₀(s) >= λs/2` for all `s <= t`. With
/// `u = (λ+1)t` this is the root of `(1 - e^{-u})/u = 1/2`.
pub fn linear_regime_threshold(lambda: f64) -> f64 {
    let f = |u: f64| -(-u).exp_m1() / u - 0.5;
    let (mut lo, mut hi) = (1e-9, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo / (lambda + 1.0)
}

/// Samples the leaf of a pinned-center two-state chain at time `t`, started vacant.
pub fn sample_leaf_occupied<R: Rng + ?Sized>(t: f64, lambda: f64, rng: &mut R) -> bool {
    let mut occupied = false;
    let mut now = 0.0;
    loop {
        let rate = if occupied { 1.0 } else { lambda };
        if rate == 0.0 {
            return occupied;
        }
        let gap: f64 = Exp1.sample(rng);
        now += gap / rate;
        if now > t {
            return occupied;
        }
        occupied = !occupied;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Stop once `X < a`.
    pub below: Option<u64>,
    /// Stop once `X = b`.
    pub target: Option<u64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Below,
    Target,
    Horizon,
    /// Reached 0, which is absorbing.
    Absorbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingRecord {
    pub reason: StopReason,
    pub time: f64,
    pub value: u64,
}

/// The reduced chain: `X -> X-1` at rate `L`, `X -> min(X+1, L)` at rate
/// `(1-δ)λn`, `X -> max(X-Z, 0)` at rate 1. Jumps below 0 are floored and
/// 0 is absorbing.
pub fn run_reduced_chain<R: Rng + ?Sized>(
    params: &StarChainParams,
    x0: u64,
    stop: &StopRule,
    rng: &mut R,
) -> Result<HittingRecord, ChainError> {
    if x0 > params.level {
        return Err(ChainError::InvalidParameter(format!(
            "x0 = {x0} above L = {}",
            params.level
        )));
    }
    if let (Some(a), Some(b)) = (stop.below, stop.target) {
        if a >= b {
            return Err(ChainError::InconsistentStops { a, b });
        }
    }
    if stop.horizon.is_nan() || stop.horizon < 0.0 {
        return Err(ChainError::InvalidParameter(format!("horizon = {}", stop.horizon)));
    }
    let down = params.down_rate();
    let up = params.up_rate();
    let total = down + up + 1.0;
    let mut x = x0;
    let mut t = 0.0;
    loop {
        if stop.below.is_some_and(|a| x < a) {
            return Ok(HittingRecord { reason: StopReason::Below, time: t, value: x });
        }
        if stop.target == Some(x) {
            return Ok(HittingRecord { reason: StopReason::Target, time: t, value: x });
        }
        if x == 0 {
            return Ok(HittingRecord { reason: StopReason::Absorbed, time: t, value: 0 });
        }
        let gap: f64 = Exp1.sample(rng);
        if t + gap / total > stop.horizon {
            return Ok(HittingRecord { reason: StopReason::Horizon, time: stop.horizon, value: x });
        }
        t += gap / total;
        let u = rng.random::<f64>() * total;
        x = if u < down {
            x - 1
        } else if u < down + up {
            (x + 1).min(params.level)
        } else {
            x.saturating_sub(geometric_by_inversion(params.lambda, rng))
        };
    }
}

/// Value of the reduced chain at time `s`, started from `x0`.
pub fn reduced_value_at<R: Rng + ?Sized>(
    params: &StarChainParams,
    x0: u64,
    s: f64,
    rng: &mut R,
) -> Result<u64, ChainError> {
    let stop = StopRule { below: None, target: None, horizon: s };
    Ok(run_reduced_chain(params, x0, &stop, rng)?.value)
}

/// `(j, c)`: `j` occupied leaves, center occupied when `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StarState {
    pub leaves: u64,
    pub center: bool,
}

impl StarState {
    pub const EMPTY: StarState = StarState { leaves: 0, center: false };

    pub fn new(leaves: u64, center: bool) -> Self {
        Self { leaves, center }
    }
}

/// Exact jump chain of the contact process on a star with `n` leaves.
///
/// From `(j, 1)`: `j+1` at rate `λ(n-j)`, `j-1` at rate `j`, center dies at
/// rate 1. From `(j, 0)`: `j-1` at rate `j`, center reborn at rate `jλ`.
#[derive(Debug, Clone)]
pub struct StarWalk {
    n: u64,
    lambda: f64,
    state: StarState,
    time: f64,
    center_time: f64,
}

impl StarWalk {
    pub fn new(n: u64, lambda: f64, start: StarState) -> Result<Self, ChainError> {
        if start.leaves > n {
            return Err(ChainError::InvalidParameter(format!(
                "{} leaves on a star with n = {n}",
                start.leaves
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ChainError::InvalidParameter(format!("lambda = {lambda}")));
        }
        Ok(Self { n, lambda, state: start, time: 0.0, center_time: 0.0 })
    }

    pub fn state(&self) -> StarState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Total time spent with the center occupied.
    pub fn center_time(&self) -> f64 {
        self.center_time
    }

    fn total_rate(&self) -> f64 {
        let j = self.state.leaves as f64;
        if self.state.center {
            self.lambda * (self.n as f64 - j) + j + 1.0
        } else {
            j * (1.0 + self.lambda)
        }
    }

    /// Time until the next jump would happen, drawn fresh; `None` when absorbed.
    fn draw_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let rate = self.total_rate();
        if rate <= 0.0 {
            return None;
        }
        let gap: f64 = Exp1.sample(rng);
        Some(gap / rate)
    }

    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let j = self.state.leaves as f64;
        let u = rng.random::<f64>() * self.total_rate();
        if self.state.center {
            let birth = self.lambda * (self.n as f64 - j);
            if u < birth {
                self.state.leaves += 1;
            } else if u < birth + j {
                self.state.leaves -= 1;
            } else {
                self.state.center = false;
            }
        } else if u < j {
            self.state.leaves -= 1;
        } else {
            self.state.center = true;
        }
    }

    /// Performs one jump. Returns false when absorbed at `(0, 0)`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Some(gap) = self.draw_gap(rng) else { return false };
        self.time += gap;
        if self.state.center {
            self.center_time += gap;
        }
        self.jump(rng);
        true
    }

    /// Runs until the occupied-center clock reaches `s` (or absorption) and
    /// returns the leaf count at that moment.
    pub fn leaves_at_center_time<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> u64 {
        loop {
            let Some(gap) = self.draw_gap(rng) else { return 0 };
            if self.state.center && self.center_time + gap >= s {
                self.time += s - self.center_time;
                self.center_time = s;
                return self.state.leaves;
            }
            self.time += gap;
            if self.state.center {
                self.center_time += gap;
            }
            self.jump(rng);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IgnitionRecord {
    /// `T_K < T_{0,0}`.
    pub hit_k: bool,
    /// `T_L < T_{0,0}`.
    pub hit_l: bool,
    /// `min{T_{0,0}, T_L}`.
    pub elapsed: f64,
    pub time_to_k: Option<f64>,
}

/// `K = ⌊λn / sqrt(log n)⌋` and `L = ⌊(1-4δ)λn⌋`.
pub fn ignition_levels(n: u64, lambda: f64, delta: f64) -> (u64, u64) {
    let ln = (n as f64).ln();
    let k = floor_level(lambda * n as f64 / ln.sqrt());
    let l = floor_level((1.0 - 4.0 * delta) * lambda * n as f64);
    (k, l)
}

/// Ignition from the center alone, `(0, 1)`.
pub fn ignition_run<R: Rng + ?Sized>(
    n: u64,
    lambda: f64,
    k: u64,
    l: u64,
    rng: &mut R,
) -> Result<IgnitionRecord, ChainError> {
    ignition_run_from(StarState::new(0, true), n, lambda, k, l, rng)
}

pub fn ignition_run_from<R: Rng + ?Sized>(
    start: StarState,
    n: u64,
    lambda: f64,
    k: u64,
    l: u64,
    rng: &mut R,
) -> Result<IgnitionRecord, ChainError> {
    if k == 0 || k > l || l > n {
        return Err(ChainError::InvalidParameter(format!(
            "need 0 < K <= L <= n, got K={k} L={l} n={n}"
        )));
    }
    let mut walk = StarWalk::new(n, lambda, start)?;
    let mut time_to_k = (start.leaves >= k).then_some(0.0);
    loop {
        let s = walk.state();
        if s.leaves >= l {
            return Ok(IgnitionRecord {
                hit_k: true,
                hit_l: true,
                elapsed: walk.time(),
                time_to_k,
            });
        }
        if !walk.step(rng) {
            return Ok(IgnitionRecord {
                hit_k: time_to_k.is_some(),
                hit_l: false,
                elapsed: walk.time(),
                time_to_k,
            });
        }
        if time_to_k.is_none() && walk.state().leaves >= k {
            time_to_k = Some(walk.time());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::stats::{total_variation, Frequency, Moments};

    #[test]
    fn loss_pmf_values() {
        for j in 0..20 {
            assert!((loss_pmf(1.0, j) - 0.5f64.powi(j as i32 + 1)).abs() < 1e-15);
        }
        // tail bound on the partial sum
        for lambda in [0.1, 0.5, 1.0, 3.0] {
            let partial: f64 = (0..=200).map(|j| loss_pmf(lambda, j)).sum();
            let tail = (1.0 / (1.0 + lambda)).powi(201);
            assert!(partial >= 1.0 - tail - 1e-12);
            let mean: f64 = (0..20_000).map(|j| j as f64 * loss_pmf(lambda, j)).sum();
            assert!((mean - 1.0 / lambda).abs() < 1e-6);
        }
        let mut rng = seed::stream(0);
        assert!(sample_loss_z(0.0, &mut rng).is_err());
    }

    #[test]
    fn loss_sampler_matches_pmf() {
        let lambda = 0.1;
        let mut rng = seed::stream(41);
        let samples = 1_000_000;
        let mut counts = vec![0u64; 201];
        let mut xs = Vec::with_capacity(samples);
        for _ in 0..samples {
            let z = sample_loss_z(lambda, &mut rng).unwrap();
            if z <= 200 {
                counts[z as usize] += 1;
            }
            xs.push(z as f64);
        }
        let m = Moments::of(&xs);
        assert!(m.within(10.0, 3.0), "mean {} se {}", m.mean, m.std_error);
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
        let exact: Vec<f64> = (0..=200).map(|j| loss_pmf(lambda, j)).collect();
        assert!(total_variation(&emp, &exact) < 0.01);
    }

    #[test]
    fn rates_and_level() {
        let p = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        assert_eq!(p.level, 600);
        assert!((p.down_rate() - 600.0).abs() < 1e-12);
        assert!((p.up_rate() - 900.0).abs() < 1e-9);
        assert!(StarChainParams::new(0.1, 10, 0.1).is_err());
        assert!(StarChainParams::new(0.1, 10_000, 0.3).is_err());
    }

    #[test]
    fn theta_values() {
        let p = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        assert!((theta_of(&p).unwrap() - 0.09 / 1.1).abs() < 1e-12);
        // δλ²n = 1 exactly is outside the regime
        let edge = StarChainParams { lambda: 0.5, n: 32, delta: 0.125, level: 8 };
        assert!(matches!(theta_of(&edge), Err(ChainError::Regime(_))));
        // δλ²n -> ∞ gives θ -> λ/(1+λ)
        let big = StarChainParams { lambda: 0.1, n: 10_000_000_000, delta: 0.1, level: 1 };
        assert!((theta_of(&big).unwrap() - 0.1 / 1.1).abs() < 1e-8);
    }

    /// Drift terms re-evaluated from the series definition of E(1-θ)^{-Z}.
    #[test]
    fn drift_terms_reference_point() {
        let p = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        let theta = theta_of(&p).unwrap();
        let d = drift_terms(&p, theta).unwrap();
        let series: f64 = (0..100_000)
            .map(|j| (1.0 / ((1.0 - theta) * 1.1)).powi(j) * 0.1 / 1.1)
            .sum();
        assert!((d.loss - (series - 1.0)).abs() < 1e-6);
        assert!((d.down - 600.0 * theta / (1.0 - theta)).abs() < 1e-9);
        assert!((d.down - 53.465).abs() < 1e-2);
        assert!((d.up + 73.636).abs() < 1e-2);
        assert!((d.loss - 8.1818).abs() < 1e-3);
        assert!((d.total + 11.99).abs() < 1e-2);
        assert_eq!(drift_of_h(599, &p).unwrap(), d.total);
        assert!(drift_of_h(600, &p).is_err());
        assert!(drift_of_h(0, &p).is_err());
    }

    #[test]
    fn zero_theta_drift_reduces_to_rate_gap() {
        let p = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        let d = drift_terms(&p, 0.0).unwrap();
        assert_eq!(d.loss, 0.0);
        assert!((d.total - 0.0).abs() < 1e-12);
        assert!(p.down_rate() - p.up_rate() < 0.0);
    }

    #[test]
    fn theta_max_is_drift_root() {
        let p = StarChainParams::from_c(1.0, 10_000, 0.1).unwrap();
        assert!(theta_of(&p).is_err());
        let t = theta_max(&p).unwrap();
        assert!(t > 0.0);
        assert!(drift_terms(&p, t).unwrap().total <= 0.0);
        assert!(drift_terms(&p, t * 1.01).unwrap().total > 0.0);
        assert!(drift_terms(&p, 0.5 * t).unwrap().total < 0.0);
        let q = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        assert!(theta_max(&q).unwrap() >= theta_of(&q).unwrap());
    }

    #[test]
    fn hitting_bound_values() {
        assert!((hitting_bound(1, 2, 3, 0.5).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(hitting_bound(1, 3, 3, 0.5).unwrap(), 0.0);
        assert!(hitting_bound(2, 2, 3, 0.5).is_err());
        assert!(hitting_bound(1, 4, 3, 0.5).is_err());
        assert!(hitting_bound(1, 2, 3, 1.5).is_err());
    }

    /// At x = b - 1 the general bound equals θr/(1 - (1-θ)r); the simplified
    /// form θr/(1-r) dominates it.
    #[test]
    fn adjacent_form_identities() {
        for &theta in &[0.001, 0.01, 0.1, 0.3, 0.7] {
            for a in [1u64, 2, 5, 20] {
                for gap in [2u64, 3, 7, 40, 300] {
                    let b = a + gap;
                    let general = hitting_bound(a, b - 1, b, theta).unwrap();
                    let r = (1.0 - theta).powf((b - a) as f64);
                    let exact = theta * r / (1.0 - (1.0 - theta) * r);
                    assert!((general - exact).abs() <= 1e-12 * exact.max(1e-300));
                    let simplified = hitting_bound_adjacent(a, b, theta).unwrap();
                    assert!(simplified >= general * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn leaf_curve_shape() {
        assert_eq!(leaf_occupancy_curve(0.0, 0.4), 0.0);
        assert!((leaf_occupancy_curve(1e6, 1.0) - 0.5).abs() < 1e-15);
        assert!((leaf_occupancy_curve(1e6, 0.3) - 0.3 / 1.3).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 1..1000 {
            let v = leaf_occupancy_curve(i as f64 * 0.01, 0.3);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn linear_regime_holds_below_threshold() {
        for lambda in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let t_star = linear_regime_threshold(lambda);
            for i in 1..=200 {
                let t = t_star * i as f64 / 200.0;
                assert!(leaf_occupancy_curve(t, lambda) >= lambda * t / 2.0 * (1.0 - 1e-12));
            }
            let beyond = t_star * 1.01;
            assert!(leaf_occupancy_curve(beyond, lambda) < lambda * beyond / 2.0);
        }
    }

    #[test]
    fn two_state_chain_matches_curve() {
        let (t, lambda) = (0.5, 0.3);
        let mut rng = seed::stream(5);
        let runs = 1_000_000u64;
        let hits = (0..runs).filter(|_| sample_leaf_occupied(t, lambda, &mut rng)).count();
        let f = Frequency::new(hits as u64, runs);
        let p = leaf_occupancy_curve(t, lambda);
        assert!((f.estimate - p).abs() < 3.0 * f.std_error_at(p));
    }

    #[test]
    fn reduced_chain_stops() {
        let p = StarChainParams::new(0.1, 10_000, 0.1).unwrap();
        let mut rng = seed::stream(3);
        let zero = StopRule { below: None, target: None, horizon: 0.0 };
        let r = run_reduced_chain(&p, 17, &zero, &mut rng).unwrap();
        assert_eq!((r.reason, r.value, r.time), (StopReason::Horizon, 17, 0.0));
        let bad = StopRule { below: Some(10), target: Some(10), horizon: 1.0 };
        assert!(matches!(
            run_reduced_chain(&p, 12, &bad, &mut rng),
            Err(ChainError::InconsistentStops { .. })
        ));
        assert!(run_reduced_chain(&p, 601, &zero, &mut rng).is_err());
        let to_top = StopRule { below: Some(100), target: Some(600), horizon: 1e6 };
        let r = run_reduced_chain(&p, 599, &to_top, &mut rng).unwrap();
        assert!(matches!(r.reason, StopReason::Target | StopReason::Below));
        for _ in 0..200 {
            let v = reduced_value_at(&p, 600, 0.3, &mut rng).unwrap();
            assert!(v <= 600);
        }
    }

    #[test]
    fn ignition_without_births_dies() {
        let mut rng = seed::stream(8);
        let times: Vec<f64> = (0..20_000)
            .map(|_| {
                let r = ignition_run(100, 0.0, 5, 10, &mut rng).unwrap();
                assert!(!r.hit_k && !r.hit_l);
                r.elapsed
            })
            .collect();
        assert!(Moments::of(&times).within(1.0, 3.0));
        assert!(ignition_run(100, 0.1, 11, 10, &mut rng).is_err());
    }

    #[test]
    fn ignition_levels_at_reference_point() {
        let n = 10_000;
        let lambda = lambda_from_c(1.0, n);
        let (k, l) = ignition_levels(n, lambda, 0.1);
        assert_eq!(k, 100);
        assert_eq!(l, 182);
    }

    #[test]
    fn star_walk_center_clock() {
        let mut rng = seed::stream(21);
        let mut w = StarWalk::new(50, 0.5, StarState::new(10, true)).unwrap();
        let j = w.leaves_at_center_time(2.0, &mut rng);
        assert!(j <= 50);
        if w.state() != StarState::EMPTY {
            assert!((w.center_time() - 2.0).abs() < 1e-12);
            assert!(w.time() >= 2.0);
        }
        assert!(StarWalk::new(5, 0.5, StarState::new(6, true)).is_err());
    }
}
