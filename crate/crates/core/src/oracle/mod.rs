//! Exact reference computations on small state spaces: the star as a chain
//! on `(j, c)`, general trees with up to [`MAX_FREE_VERTICES`] free
//! vertices, and walk censuses for the dual-path sums.

mod linalg;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::topology::{Graph, VertexId};
use linalg::{backward_error, banded_backward_error, banded_solve, bicgstab, dense_solve, Csr};

/// Largest star handled by [`StarChain`].
pub const MAX_STAR_LEAVES: u64 = 1_000_000;
/// Largest number of free (unpinned) vertices for the graph solvers.
pub const MAX_FREE_VERTICES: usize = 15;
/// Generators with at most this many states are solved densely.
pub const DENSE_STATE_LIMIT: usize = 1024;
/// Accepted normwise backward error of every solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Default cap on the number of walks a census may count.
pub const DEFAULT_WALK_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{free} free vertices exceed the exact-solve limit of {cap}")]
    TooLarge { free: usize, cap: usize },
    #[error("extinction time is infinite with pinned vertices")]
    PinsPresent,
    #[error("singular system: {0}")]
    Singular(String),
    #[error("solve did not reach the residual tolerance (backward error {0:e})")]
    NotConverged(f64),
    #[error("walk census counted {count} walks, above the cap of {cap}")]
    EnumerationCap { count: u64, cap: u64 },
}

/// A solution vector together with the backward error of its solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateValues {
    pub values: Vec<f64>,
    pub residual: f64,
}

/// The star with `n` leaves as a chain on `(j, c)`, state index `2j + c`.
///
/// From `(j, 1)`: `(j+1, 1)` at rate `λ(n-j)`, `(j-1, 1)` at rate `j`,
/// `(j, 0)` at rate 1. From `(j, 0)`: `(j-1, 0)` at rate `j`, `(j, 1)` at
/// rate `jλ`. `(0, 0)` is absorbing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarChain {
    n: u64,
    lambda: f64,
}

impl StarChain {
    pub fn new(n: u64, lambda: f64) -> Result<Self, OracleError> {
        if n > MAX_STAR_LEAVES {
            return Err(OracleError::InvalidParameter(format!(
                "n = {n} above {MAX_STAR_LEAVES}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(OracleError::InvalidParameter(format!("lambda = {lambda}")));
        }
        Ok(Self { n, lambda })
    }

    pub fn index(j: u64, center: bool) -> usize {
        2 * j as usize + center as usize
    }

    pub fn state_count(&self) -> usize {
        2 * (self.n as usize + 1)
    }

    /// Generator rows as bands; `boundary(j, c)` marks states whose value is
    /// fixed to the returned number.
    fn system(
        &self,
        boundary: impl Fn(u64, bool) -> Option<f64>,
        source: f64,
    ) -> (Vec<[f64; 5]>, Vec<f64>) {
        let size = self.state_count();
        let mut band = vec![[0.0; 5]; size];
        let mut rhs = vec![0.0; size];
        let (n, lambda) = (self.n as f64, self.lambda);
        for j in 0..=self.n {
            for center in [false, true] {
                let i = Self::index(j, center);
                if let Some(v) = boundary(j, center) {
                    band[i][2] = 1.0;
                    rhs[i] = v;
                    continue;
                }
                let jf = j as f64;
                // (offset, rate) pairs
                let moves: [(isize, f64); 3] = if center {
                    [(2, lambda * (n - jf)), (-2, jf), (-1, 1.0)]
                } else {
                    [(-2, jf), (1, jf * lambda), (0, 0.0)]
                };
                let mut out = 0.0;
                for (d, rate) in moves {
                    if rate > 0.0 {
                        band[i][(d + 2) as usize] -= rate;
                        out += rate;
                    }
                }
                band[i][2] += out;
                rhs[i] = source;
            }
        }
        (band, rhs)
    }

    fn solve(&self, band: Vec<[f64; 5]>, rhs: Vec<f64>) -> Result<StateValues, OracleError> {
        let values = banded_solve(&band, &rhs)
            .ok_or_else(|| OracleError::Singular("zero pivot in the star chain".into()))?;
        let residual = banded_backward_error(&band, &values, &rhs);
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(OracleError::NotConverged(residual));
        }
        Ok(StateValues { values, residual })
    }

    /// `E T_{0,0}` from every state.
    pub fn expected_absorption_time(&self) -> Result<StateValues, OracleError> {
        let (band, rhs) = self.system(|j, c| (j == 0 && !c).then_some(0.0), 1.0);
        self.solve(band, rhs)
    }

    /// `P(T_K < T_{0,0})` from every state; states with `j >= K` give 1.
    pub fn hit_probability(&self, k: u64) -> Result<StateValues, OracleError> {
        let (band, rhs) = self.system(
            |j, c| {
                if j >= k {
                    Some(1.0)
                } else if j == 0 && !c {
                    Some(0.0)
                } else {
                    None
                }
            },
            0.0,
        );
        self.solve(band, rhs)
    }

    /// `E min{T_{0,0}, T_L}` from every state.
    pub fn expected_exit_time(&self, l: u64) -> Result<StateValues, OracleError> {
        let (band, rhs) = self.system(|j, c| (j >= l || (j == 0 && !c)).then_some(0.0), 1.0);
        self.solve(band, rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarChainSolution {
    pub n: u64,
    pub lambda: f64,
    pub k: u64,
    pub l: u64,
    pub absorption_time: StateValues,
    pub hit_k: StateValues,
    pub exit_l: StateValues,
}

impl StarChainSolution {
    pub fn absorption_from(&self, j: u64, center: bool) -> f64 {
        self.absorption_time.values[StarChain::index(j, center)]
    }

    pub fn hit_k_from(&self, j: u64, center: bool) -> f64 {
        self.hit_k.values[StarChain::index(j, center)]
    }

    pub fn exit_l_from(&self, j: u64, center: bool) -> f64 {
        self.exit_l.values[StarChain::index(j, center)]
    }
}

/// All three star-chain solves at once.
pub fn star_chain_solve(n: u64, lambda: f64, k: u64, l: u64) -> Result<StarChainSolution, OracleError> {
    let chain = StarChain::new(n, lambda)?;
    Ok(StarChainSolution {
        n,
        lambda,
        k,
        l,
        absorption_time: chain.expected_absorption_time()?,
        hit_k: chain.hit_probability(k)?,
        exit_l: chain.expected_exit_time(l)?,
    })
}

/// Generator of the contact process on a tree with some vertices pinned.
/// State `s` is a bitmask over the free vertices, in increasing vertex order.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    free: Vec<VertexId>,
    /// Off-diagonal rates of each row.
    rows: Vec<Vec<(usize, f64)>>,
    /// Total exit rate of each state; zero marks an absorbing state.
    exit: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn for_graph(g: &Graph, lambda: f64, pins: &[VertexId]) -> Result<Self, OracleError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(OracleError::InvalidParameter(format!("lambda = {lambda}")));
        }
        let vcount = g.vertex_count();
        let mut pinned = vec![false; vcount];
        for &p in pins {
            let slot = pinned.get_mut(p as usize).ok_or_else(|| {
                OracleError::InvalidParameter(format!("pin {p} is not a vertex"))
            })?;
            *slot = true;
        }
        let free: Vec<VertexId> = (0..vcount as VertexId).filter(|&v| !pinned[v as usize]).collect();
        if free.len() > MAX_FREE_VERTICES {
            return Err(OracleError::TooLarge { free: free.len(), cap: MAX_FREE_VERTICES });
        }
        let mut bit = vec![None; vcount];
        for (i, &v) in free.iter().enumerate() {
            bit[v as usize] = Some(i);
        }
        let states = 1usize << free.len();
        let mut rows = Vec::with_capacity(states);
        let mut exit = Vec::with_capacity(states);
        for s in 0..states {
            let occupied = |v: VertexId| match bit[v as usize] {
                Some(i) => s >> i & 1 == 1,
                None => true,
            };
            let mut row = Vec::new();
            let mut out = 0.0;
            for (i, &v) in free.iter().enumerate() {
                if s >> i & 1 == 1 {
                    row.push((s ^ 1 << i, 1.0));
                    out += 1.0;
                } else {
                    let k = g.neighbors(v).filter(|&u| occupied(u)).count();
                    if k > 0 && lambda > 0.0 {
                        let rate = lambda * k as f64;
                        row.push((s | 1 << i, rate));
                        out += rate;
                    }
                }
            }
            rows.push(row);
            exit.push(out);
        }
        Ok(Self { free, rows, exit })
    }

    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    pub fn free_vertices(&self) -> &[VertexId] {
        &self.free
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.exit[s] == 0.0
    }

    /// Off-diagonal rates out of `s`.
    pub fn transitions(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    /// Diagonal entry `q(s, s)`.
    pub fn diagonal(&self, s: usize) -> f64 {
        -self.exit[s]
    }
}

/// Solves one system for several right-hand sides, densely when small.
fn solve_many(rows: &[Vec<(usize, f64)>], rhs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), OracleError> {
    let a = Csr::from_rows(rows);
    let sols = if a.dim() <= DENSE_STATE_LIMIT {
        dense_solve(&a, rhs).ok_or_else(|| OracleError::Singular("zero pivot".into()))?
    } else {
        let mut out = Vec::with_capacity(rhs.len());
        for b in rhs {
            let mut x = vec![0.0; a.dim()];
            // restart from the last iterate until the true residual is small
            let mut converged = false;
            for _ in 0..4 {
                x = bicgstab(&a, b, x, 1e-14, 20_000)
                    .ok_or_else(|| OracleError::NotConverged(f64::NAN))?;
                if backward_error(&a, &x, b) <= RESIDUAL_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(OracleError::NotConverged(backward_error(&a, &x, b)));
            }
            out.push(x);
        }
        out
    };
    let residual = sols
        .iter()
        .zip(rhs)
        .map(|(x, b)| backward_error(&a, x, b))
        .fold(0.0, f64::max);
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(OracleError::NotConverged(residual));
    }
    Ok((sols, residual))
}

/// Rows of `-Q` restricted to the nonempty states, indexed by `s - 1`.
fn transient_rows(gen: &GeneratorMatrix) -> Vec<Vec<(usize, f64)>> {
    (1..gen.state_count())
        .map(|s| {
            let mut row = vec![(s - 1, gen.exit[s])];
            row.extend(
                gen.transitions(s)
                    .iter()
                    .filter(|&&(t, _)| t != 0)
                    .map(|&(t, r)| (t - 1, -r)),
            );
            row
        })
        .collect()
}

fn require_no_pins(g: &Graph, pins_free: &GeneratorMatrix) -> Result<(), OracleError> {
    if pins_free.free.len() != g.vertex_count() {
        return Err(OracleError::PinsPresent);
    }
    Ok(())
}

fn initial_mask(g: &Graph, init: &[VertexId]) -> Result<usize, OracleError> {
    let mut s = 0usize;
    for &v in init {
        if v as usize >= g.vertex_count() {
            return Err(OracleError::InvalidParameter(format!("{v} is not a vertex")));
        }
        s |= 1 << v;
    }
    Ok(s)
}

/// Exact `E τ` from `init`, where `τ` is the extinction time.
pub fn small_graph_extinction_time(g: &Graph, lambda: f64, init: &[VertexId]) -> Result<f64, OracleError> {
    Ok(small_graph_extinction_times(g, lambda)?.values[initial_mask(g, init)?])
}

/// `E τ` from every initial set, indexed by the vertex bitmask.
pub fn small_graph_extinction_times(g: &Graph, lambda: f64) -> Result<StateValues, OracleError> {
    let gen = GeneratorMatrix::for_graph(g, lambda, &[])?;
    require_no_pins(g, &gen)?;
    let rows = transient_rows(&gen);
    let (mut sols, residual) = solve_many(&rows, &[vec![1.0; rows.len()]])?;
    let mut values = vec![0.0];
    values.append(&mut sols[0]);
    Ok(StateValues { values, residual })
}

/// Expected total time each vertex spends occupied before extinction.
pub fn small_graph_occupation_times(
    g: &Graph,
    lambda: f64,
    init: &[VertexId],
) -> Result<Vec<f64>, OracleError> {
    let gen = GeneratorMatrix::for_graph(g, lambda, &[])?;
    require_no_pins(g, &gen)?;
    let start = initial_mask(g, init)?;
    if start == 0 {
        return Ok(vec![0.0; g.vertex_count()]);
    }
    let rows = transient_rows(&gen);
    let rhs: Vec<Vec<f64>> = (0..g.vertex_count())
        .map(|v| (1..gen.state_count()).map(|s| (s >> v & 1) as f64).collect())
        .collect();
    let (sols, _) = solve_many(&rows, &rhs)?;
    Ok(sols.iter().map(|x| x[start - 1]).collect())
}

/// Expected births onto each boundary vertex of a depth-`k+1` truncation
/// started from its root, with the boundary frozen: `λ` times the expected
/// occupation time of the boundary vertex's parent in the interior.
pub fn frozen_boundary_expectation(g: &Graph, lambda: f64) -> Result<BTreeMap<VertexId, f64>, OracleError> {
    let spec = g
        .spec()
        .ok_or_else(|| OracleError::InvalidParameter("graph has no degree spec".into()))?;
    let k = spec.k() as u32;
    if g.depth() != k + 1 {
        return Err(OracleError::InvalidParameter(format!(
            "expected depth k + 1 = {}, got {}",
            k + 1,
            g.depth()
        )));
    }
    let interior = g
        .truncated(k)
        .map_err(|e| OracleError::InvalidParameter(e.to_string()))?;
    let occ = small_graph_occupation_times(&interior, lambda, &[g.root()])?;
    Ok(g.vertices_at_level(k + 1)
        .map(|y| {
            let p = g.parent(y).expect("boundary vertex has a parent");
            (y, lambda * occ[p as usize])
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryLaw {
    /// Occupancy probability of every vertex; pinned vertices give 1.
    pub marginals: Vec<f64>,
    /// No pins: the only stationary law is the empty configuration.
    pub degenerate: bool,
    pub residual: f64,
}

/// Stationary law of the process with `pins` held occupied.
pub fn small_graph_stationary(g: &Graph, lambda: f64, pins: &[VertexId]) -> Result<StationaryLaw, OracleError> {
    let gen = GeneratorMatrix::for_graph(g, lambda, pins)?;
    let vcount = g.vertex_count();
    let mut marginals = vec![1.0; vcount];
    for &v in gen.free_vertices() {
        marginals[v as usize] = 0.0;
    }
    if gen.free.len() == vcount {
        return Ok(StationaryLaw { marginals, degenerate: true, residual: 0.0 });
    }
    if lambda == 0.0 || gen.free.is_empty() {
        return Ok(StationaryLaw { marginals, degenerate: false, residual: 0.0 });
    }
    // With λ > 0 the full state is recurrent: fix π(full) = 1, solve the
    // balance equations of the other states, then normalize.
    let full = gen.state_count() - 1;
    let m = full;
    let mut rows: Vec<Vec<(usize, f64)>> = (0..m).map(|t| vec![(t, gen.exit[t])]).collect();
    let mut rhs = vec![0.0; m];
    for s in 0..gen.state_count() {
        for &(t, r) in gen.transitions(s) {
            if t == full {
                continue;
            }
            if s == full {
                rhs[t] += r;
            } else {
                rows[t].push((s, -r));
            }
        }
    }
    let (sols, residual) = solve_many(&rows, &[rhs])?;
    let mut pi = sols.into_iter().next().unwrap_or_default();
    pi.push(1.0);
    let total: f64 = pi.iter().sum();
    for (i, &v) in gen.free_vertices().iter().enumerate() {
        marginals[v as usize] = pi
            .iter()
            .enumerate()
            .filter(|(s, _)| s >> i & 1 == 1)
            .map(|(_, p)| p)
            .sum::<f64>()
            / total;
    }
    Ok(StationaryLaw { marginals, degenerate: false, residual })
}

/// Walks from one vertex to another, counted by length. Walks may revisit
/// vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkCensus {
    pub from: VertexId,
    pub to: VertexId,
    /// `(length, count)` for every length with at least one walk.
    pub counts: Vec<(u32, u64)>,
}

impl WalkCensus {
    /// `Σ count · (λ/(1+λ))^length`.
    pub fn weighted_sum(&self, lambda: f64) -> f64 {
        let w = lambda / (1.0 + lambda);
        self.counts.iter().map(|&(l, c)| c as f64 * w.powi(l as i32)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }
}

pub fn enumerate_dual_paths(g: &Graph, from: VertexId, to: VertexId, max_len: u32) -> Result<WalkCensus, OracleError> {
    enumerate_dual_paths_capped(g, from, to, max_len, DEFAULT_WALK_CAP)
}

/// Counts walks by dynamic programming over lengths; errors once the total
/// number of counted walks passes `cap`.
pub fn enumerate_dual_paths_capped(
    g: &Graph,
    from: VertexId,
    to: VertexId,
    max_len: u32,
    cap: u64,
) -> Result<WalkCensus, OracleError> {
    let vcount = g.vertex_count();
    for v in [from, to] {
        if v as usize >= vcount {
            return Err(OracleError::InvalidParameter(format!("{v} is not a vertex")));
        }
    }
    let mut here = vec![0u128; vcount];
    here[from as usize] = 1;
    let mut counts = Vec::new();
    let mut total: u128 = 0;
    for len in 0..=max_len {
        let c = here[to as usize];
        if c > 0 {
            total += c;
            if total > cap as u128 {
                return Err(OracleError::EnumerationCap {
                    count: total.min(u64::MAX as u128) as u64,
                    cap,
                });
            }
            counts.push((len, c as u64));
        }
        if len == max_len {
            break;
        }
        let mut next = vec![0u128; vcount];
        for (v, &c) in here.iter().enumerate() {
            if c > 0 {
                for u in g.neighbors(v as VertexId) {
                    next[u as usize] = next[u as usize].saturating_add(c);
                }
            }
        }
        here = next;
    }
    Ok(WalkCensus { from, to, counts })
}
