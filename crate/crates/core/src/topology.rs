//! Rooted trees used by the simulator: stars, truncated periodic trees, the
//! pinned subtree hanging below a permanently occupied vertex, and the
//! two-hub relay graph.
//!
//! Vertices are numbered breadth-first from the root, so the same spec and
//! depth always produce the same numbering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = u32;

const NO_PARENT: VertexId = VertexId::MAX;

/// Default refusal threshold for graph construction.
pub const DEFAULT_VERTEX_CAP: u64 = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid degree spec: {0}")]
    InvalidSpec(String),
    #[error("graph would have {would_be} vertices, above the cap of {cap}")]
    TooLarge { would_be: u64, cap: u64 },
    #[error("cannot parse graph spec {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("not a tree: {0}")]
    NotATree(String),
}

/// Offspring pattern `(n, a_1, ..., a_k)` of a periodic tree.
///
/// Hubs have `n` children; the `k` levels between consecutive hubs have
/// `a_1, ..., a_k` children in turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegreeSpec {
    n: usize,
    degrees: Vec<usize>,
}

impl DegreeSpec {
    pub fn new(n: usize, degrees: Vec<usize>) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::InvalidSpec("hub offspring n must be >= 1".into()));
        }
        if let Some(pos) = degrees.iter().position(|&a| a == 0) {
            return Err(TopologyError::InvalidSpec(format!(
                "a_{} must be >= 1",
                pos + 1
            )));
        }
        Ok(Self { n, degrees })
    }

    /// The bare star, `k = 0`.
    pub fn star(n: usize) -> Result<Self, TopologyError> {
        Self::new(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Period length `k`.
    pub fn k(&self) -> usize {
        self.degrees.len()
    }

    /// `N = n * a_1 * ... * a_k`, the number of hubs one period below a hub.
    pub fn hub_branching(&self) -> u64 {
        self.degrees
            .iter()
            .fold(self.n as u64, |acc, &a| acc.saturating_mul(a as u64))
    }

    /// Children of a vertex at `level` in a tree truncated at `depth`.
    pub fn offspring(&self, level: u32, depth: u32) -> usize {
        if level >= depth {
            return 0;
        }
        match (level as usize) % (self.k() + 1) {
            0 => self.n,
            r => self.degrees[r - 1],
        }
    }

    pub fn is_hub_level(&self, level: u32) -> bool {
        (level as usize) % (self.k() + 1) == 0
    }

    fn degrees_csv(&self) -> String {
        self.degrees
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Star,
    Periodic,
    Pinned,
    HubPair,
    Custom,
}

/// Immutable rooted tree in CSR form.
#[derive(Debug, Clone)]
pub struct Graph {
    kind: GraphKind,
    spec: Option<DegreeSpec>,
    depth: u32,
    parent: Vec<VertexId>,
    child_offsets: Vec<u32>,
    children: Vec<VertexId>,
    level: Vec<u32>,
    hub: Vec<bool>,
    pin_target: Option<VertexId>,
    edges: Vec<(VertexId, VertexId)>,
    edge_of_child: Vec<u32>,
}

/// Accumulates vertices in breadth-first order: each vertex is declared with
/// its child count, and children are appended in the order parents appear.
struct BfsBuilder {
    parent: Vec<VertexId>,
    level: Vec<u32>,
    hub: Vec<bool>,
    child_offsets: Vec<u32>,
}

impl BfsBuilder {
    fn with_capacity(cap: usize) -> Self {
        Self {
            parent: Vec::with_capacity(cap),
            level: Vec::with_capacity(cap),
            hub: Vec::with_capacity(cap),
            child_offsets: Vec::with_capacity(cap + 1),
        }
    }

    /// Builds from a closure giving (child count, hub flag) for each vertex,
    /// called in BFS order.
    fn grow(mut self, mut shape: impl FnMut(VertexId, u32) -> (usize, bool)) -> Self {
        self.parent.push(NO_PARENT);
        self.level.push(0);
        let mut head = 0usize;
        let mut next_child = 1u32;
        self.child_offsets.push(1);
        while head < self.parent.len() {
            let v = head as VertexId;
            let lvl = self.level[head];
            let (count, is_hub) = shape(v, lvl);
            self.hub.push(is_hub);
            for _ in 0..count {
                self.parent.push(v);
                self.level.push(lvl + 1);
            }
            next_child += count as u32;
            self.child_offsets.push(next_child);
            head += 1;
        }
        self
    }

    fn finish(self, kind: GraphKind, spec: Option<DegreeSpec>, pin: Option<VertexId>) -> Graph {
        let depth = self.level.iter().copied().max().unwrap_or(0);
        let vcount = self.parent.len();
        // BFS numbering: children of v are child_offsets[v]..child_offsets[v+1]
        let mut offsets = Vec::with_capacity(vcount + 1);
        offsets.push(0u32);
        for v in 0..vcount {
            offsets.push(self.child_offsets[v + 1] - 1);
        }
        let children: Vec<VertexId> = (1..vcount as VertexId).collect();
        Graph::assemble(kind, spec, depth, self.parent, offsets, children, self.level, self.hub, pin)
    }
}

impl Graph {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: GraphKind,
        spec: Option<DegreeSpec>,
        depth: u32,
        parent: Vec<VertexId>,
        child_offsets: Vec<u32>,
        children: Vec<VertexId>,
        level: Vec<u32>,
        hub: Vec<bool>,
        pin_target: Option<VertexId>,
    ) -> Self {
        let mut edges = Vec::with_capacity(parent.len().saturating_sub(1));
        let mut edge_of_child = vec![u32::MAX; parent.len()];
        for (c, &p) in parent.iter().enumerate() {
            if p != NO_PARENT {
                edge_of_child[c] = edges.len() as u32;
                edges.push((p, c as VertexId));
            }
        }
        Self {
            kind,
            spec,
            depth,
            parent,
            child_offsets,
            children,
            level,
            hub,
            pin_target,
            edges,
            edge_of_child,
        }
    }

    /// Builds a tree from an explicit parent list; exactly one entry is `None`.
    /// Levels are distances from that root. No hub flags beyond the root.
    pub fn from_parents(parents: &[Option<VertexId>]) -> Result<Self, TopologyError> {
        let vcount = parents.len();
        if vcount == 0 {
            return Err(TopologyError::NotATree("empty vertex set".into()));
        }
        let roots: Vec<usize> = (0..vcount).filter(|&v| parents[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(TopologyError::NotATree(format!("{} roots", roots.len())));
        }
        let root = roots[0];
        let mut kids: Vec<Vec<VertexId>> = vec![Vec::new(); vcount];
        for (v, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p as usize >= vcount || p as usize == v {
                    return Err(TopologyError::NotATree(format!("bad parent {p} of {v}")));
                }
                kids[p as usize].push(v as VertexId);
            }
        }
        let mut level = vec![u32::MAX; vcount];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut seen = 1;
        while let Some(u) = queue.pop_front() {
            for &c in &kids[u] {
                level[c as usize] = level[u] + 1;
                seen += 1;
                queue.push_back(c as usize);
            }
        }
        if seen != vcount {
            return Err(TopologyError::NotATree("cycle or disconnected vertex".into()));
        }
        let mut offsets = Vec::with_capacity(vcount + 1);
        let mut children = Vec::with_capacity(vcount - 1);
        offsets.push(0);
        for k in &kids {
            children.extend_from_slice(k);
            offsets.push(children.len() as u32);
        }
        let parent = parents.iter().map(|p| p.unwrap_or(NO_PARENT)).collect();
        let mut hub = vec![false; vcount];
        hub[root] = true;
        let depth = level.iter().copied().max().unwrap_or(0);
        Ok(Self::assemble(
            GraphKind::Custom,
            None,
            depth,
            parent,
            offsets,
            children,
            level,
            hub,
            None,
        ))
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn spec(&self) -> Option<&DegreeSpec> {
        self.spec.as_ref()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> VertexId {
        self.parent
            .iter()
            .position(|&p| p == NO_PARENT)
            .expect("tree has a root") as VertexId
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        match self.parent[v as usize] {
            NO_PARENT => None,
            p => Some(p),
        }
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        let lo = self.child_offsets[v as usize] as usize;
        let hi = self.child_offsets[v as usize + 1] as usize;
        &self.children[lo..hi]
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.parent(v).into_iter().chain(self.children(v).iter().copied())
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.children(v).len() + usize::from(self.parent(v).is_some())
    }

    /// The `i`-th neighbor of `v`, parent first.
    #[inline]
    pub fn neighbor_at(&self, v: VertexId, i: usize) -> VertexId {
        match self.parent(v) {
            Some(p) if i == 0 => p,
            Some(_) => self.children(v)[i - 1],
            None => self.children(v)[i],
        }
    }

    pub fn level(&self, v: VertexId) -> u32 {
        self.level[v as usize]
    }

    pub fn levels(&self) -> &[u32] {
        &self.level
    }

    pub fn is_hub(&self, v: VertexId) -> bool {
        self.hub[v as usize]
    }

    pub fn hubs(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count() as VertexId).filter(|&v| self.hub[v as usize])
    }

    /// The vertex meant to be held permanently occupied (ρ in a pinned subtree).
    pub fn pin_target(&self) -> Option<VertexId> {
        self.pin_target
    }

    /// Undirected edges as `(parent, child)`, indexed by position.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    /// Directed edge ids: `2e` is parent→child and `2e+1` is child→parent.
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn directed_edge(&self, id: usize) -> (VertexId, VertexId) {
        let (p, c) = self.edges[id / 2];
        if id % 2 == 0 {
            (p, c)
        } else {
            (c, p)
        }
    }

    /// Directed edge id for `from -> to`, if they are adjacent.
    pub fn directed_edge_id(&self, from: VertexId, to: VertexId) -> Option<usize> {
        if self.parent(to) == Some(from) {
            Some(2 * self.edge_of_child[to as usize] as usize)
        } else if self.parent(from) == Some(to) {
            Some(2 * self.edge_of_child[from as usize] as usize + 1)
        } else {
            None
        }
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.depth as usize + 1];
        for &l in &self.level {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn vertices_at_level(&self, level: u32) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count() as VertexId).filter(move |&v| self.level[v as usize] == level)
    }

    /// The subtree of vertices at level `<= max_level`, keeping vertex ids.
    /// Needs those vertices to be a prefix of the numbering, which holds for
    /// every breadth-first builder here.
    pub fn truncated(&self, max_level: u32) -> Result<Graph, TopologyError> {
        let keep = self.level.iter().take_while(|&&l| l <= max_level).count();
        if self.level[keep..].iter().any(|&l| l <= max_level) {
            return Err(TopologyError::InvalidSpec(
                "levels are not numbered breadth-first".into(),
            ));
        }
        let parents: Vec<Option<VertexId>> =
            (0..keep as VertexId).map(|v| self.parent(v)).collect();
        Graph::from_parents(&parents)
    }
}

pub fn build_star(n: usize) -> Result<Graph, TopologyError> {
    if n == 0 {
        return Err(TopologyError::InvalidSpec(
            "star needs at least one leaf; build a single vertex with depth 0".into(),
        ));
    }
    let b = BfsBuilder::with_capacity(n + 1).grow(|v, _| if v == 0 { (n, true) } else { (0, false) });
    Ok(b.finish(GraphKind::Star, Some(DegreeSpec::star(n)?), None))
}

/// Vertex count of the periodic tree truncated at `depth`, saturating.
pub fn periodic_vertex_count(spec: &DegreeSpec, depth: u32) -> u64 {
    let mut total: u64 = 1;
    let mut width: u64 = 1;
    for level in 0..depth {
        width = width.saturating_mul(spec.offspring(level, depth) as u64);
        total = total.saturating_add(width);
    }
    total
}

pub fn build_periodic_tree(spec: &DegreeSpec, depth: u32) -> Result<Graph, TopologyError> {
    build_periodic_tree_capped(spec, depth, DEFAULT_VERTEX_CAP)
}

pub fn build_periodic_tree_capped(
    spec: &DegreeSpec,
    depth: u32,
    cap: u64,
) -> Result<Graph, TopologyError> {
    let would_be = periodic_vertex_count(spec, depth);
    if would_be > cap {
        return Err(TopologyError::TooLarge { would_be, cap });
    }
    let b = BfsBuilder::with_capacity(would_be as usize)
        .grow(|_, lvl| (spec.offspring(lvl, depth), spec.is_hub_level(lvl)));
    Ok(b.finish(GraphKind::Periodic, Some(spec.clone()), None))
}

/// `T*_k`: ρ (vertex 0, the pin target) above the root of `(a_1, ..., a_k)`.
/// Levels are distances from ρ.
pub fn build_pinned_subtree(degrees: &[usize]) -> Result<Graph, TopologyError> {
    if degrees.is_empty() {
        return Err(TopologyError::InvalidSpec("pinned subtree needs k >= 1".into()));
    }
    let spec = DegreeSpec::new(1, degrees.to_vec())?;
    let depth = degrees.len() as u32 + 1;
    let count = 1 + degrees
        .iter()
        .scan(1u64, |w, &a| {
            *w = w.saturating_mul(a as u64);
            Some(*w)
        })
        .fold(1u64, |acc, w| acc.saturating_add(w));
    if count > DEFAULT_VERTEX_CAP {
        return Err(TopologyError::TooLarge { would_be: count, cap: DEFAULT_VERTEX_CAP });
    }
    let b = BfsBuilder::with_capacity(count as usize).grow(|_, lvl| match lvl {
        0 => (1, true),
        l if l < depth => (degrees[l as usize - 1], false),
        _ => (0, false),
    });
    Ok(b.finish(GraphKind::Pinned, Some(spec), Some(0)))
}

/// Two hubs whose centers are `k + 1` apart: a source hub (vertex 0) with `n`
/// children, the first of which starts the connecting path, and a target hub
/// with `n` leaf children. Off-path branches are pruned.
pub fn build_hub_pair(n: usize, k: usize) -> Result<Graph, TopologyError> {
    if n == 0 || k == 0 {
        return Err(TopologyError::InvalidSpec("hub pair needs n >= 1 and k >= 1".into()));
    }
    // Vertex layout (BFS): 0 source, 1..=n source children (1 is on the path),
    // then the remaining k-1 path vertices, then the target, then its leaves.
    let mut parents: Vec<Option<VertexId>> = vec![None];
    parents.extend((0..n).map(|_| Some(0)));
    let mut tail: VertexId = 1;
    for _ in 1..k {
        parents.push(Some(tail));
        tail = parents.len() as VertexId - 1;
    }
    let target = parents.len() as VertexId;
    parents.push(Some(tail));
    parents.extend((0..n).map(|_| Some(target)));
    let mut g = Graph::from_parents(&parents)?;
    g.kind = GraphKind::HubPair;
    g.spec = Some(DegreeSpec::new(n, vec![1; k])?);
    g.hub[target as usize] = true;
    Ok(g)
}

impl Graph {
    /// For a hub-pair graph, the target hub center.
    pub fn relay_target(&self) -> Option<VertexId> {
        if self.kind != GraphKind::HubPair {
            return None;
        }
        (1..self.vertex_count() as VertexId).find(|&v| self.hub[v as usize])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub vertices: usize,
    pub depth: u32,
    pub level_sizes: Vec<usize>,
    pub hub_count: usize,
    pub leaf_count: usize,
    /// `n * a_1 * ... * a_k`, when the graph came from a degree spec.
    pub hub_branching: Option<u64>,
}

pub fn graph_stats(g: &Graph) -> GraphStats {
    GraphStats {
        vertices: g.vertex_count(),
        depth: g.depth(),
        level_sizes: g.level_sizes(),
        hub_count: g.hub.iter().filter(|&&h| h).count(),
        leaf_count: (0..g.vertex_count() as VertexId)
            .filter(|&v| g.children(v).is_empty())
            .count(),
        hub_branching: g.spec().map(DegreeSpec::hub_branching),
    }
}

/// Textual graph description used on the command line:
/// `star:<n>`, `periodic:<n>:<a1,...,ak>:<depth>`, `pinned:<a1,...,ak>` or
/// `hubpair:<n>:<k>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSpec {
    Star(usize),
    Periodic(DegreeSpec, u32),
    Pinned(Vec<usize>),
    HubPair(usize, usize),
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph, TopologyError> {
        self.build_capped(DEFAULT_VERTEX_CAP)
    }

    pub fn build_capped(&self, cap: u64) -> Result<Graph, TopologyError> {
        match self {
            GraphSpec::Star(n) => {
                if *n as u64 + 1 > cap {
                    return Err(TopologyError::TooLarge { would_be: *n as u64 + 1, cap });
                }
                build_star(*n)
            }
            GraphSpec::Periodic(spec, depth) => build_periodic_tree_capped(spec, *depth, cap),
            GraphSpec::Pinned(d) => build_pinned_subtree(d),
            GraphSpec::HubPair(n, k) => {
                let would_be = (2 * *n + *k + 1) as u64;
                if would_be > cap {
                    return Err(TopologyError::TooLarge { would_be, cap });
                }
                build_hub_pair(*n, *k)
            }
        }
    }

    /// Hub offspring `n` (for pinned subtrees, 1).
    pub fn n(&self) -> usize {
        match self {
            GraphSpec::Star(n) => *n,
            GraphSpec::Periodic(s, _) => s.n(),
            GraphSpec::Pinned(_) => 1,
            GraphSpec::HubPair(n, _) => *n,
        }
    }

    pub fn degrees(&self) -> &[usize] {
        match self {
            GraphSpec::Star(_) => &[],
            GraphSpec::Periodic(s, _) => s.degrees(),
            GraphSpec::Pinned(d) => d,
            GraphSpec::HubPair(..) => &[],
        }
    }

    /// Period length `k`: the number of non-hub levels between hubs.
    pub fn k(&self) -> usize {
        match self {
            GraphSpec::HubPair(_, k) => *k,
            other => other.degrees().len(),
        }
    }
}

fn parse_degrees(s: &str, input: &str) -> Result<Vec<usize>, TopologyError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|e| TopologyError::Parse {
                input: input.to_string(),
                reason: format!("degree {t:?}: {e}"),
            })
        })
        .collect()
}

impl FromStr for GraphSpec {
    type Err = TopologyError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = input.trim().split(':').collect();
        let bad = |reason: &str| TopologyError::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let num = |s: &str| -> Result<usize, TopologyError> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| bad(&format!("{s:?}: {e}")))
        };
        match parts.as_slice() {
            ["star", n] => {
                let n = num(n)?;
                if n == 0 {
                    return Err(bad("star needs n >= 1"));
                }
                Ok(GraphSpec::Star(n))
            }
            ["periodic", n, degrees, depth] => {
                let spec = DegreeSpec::new(num(n)?, parse_degrees(degrees, input)?)?;
                let depth = u32::try_from(num(depth)?).map_err(|_| bad("depth too large"))?;
                Ok(GraphSpec::Periodic(spec, depth))
            }
            ["pinned", degrees] => {
                let d = parse_degrees(degrees, input)?;
                if d.is_empty() {
                    return Err(bad("pinned needs at least one degree"));
                }
                DegreeSpec::new(1, d.clone())?;
                Ok(GraphSpec::Pinned(d))
            }
            ["hubpair", n, k] => {
                let (n, k) = (num(n)?, num(k)?);
                if n == 0 || k == 0 {
                    return Err(bad("hub pair needs n >= 1 and k >= 1"));
                }
                Ok(GraphSpec::HubPair(n, k))
            }
            _ => Err(bad(
                "expected star:<n> | periodic:<n>:<a1,...,ak>:<depth> | pinned:<a1,...,ak> \
                 | hubpair:<n>:<k>",
            )),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Star(n) => write!(f, "star:{n}"),
            GraphSpec::Periodic(s, d) => write!(f, "periodic:{}:{}:{}", s.n(), s.degrees_csv(), d),
            GraphSpec::Pinned(d) => write!(
                f,
                "pinned:{}",
                d.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
            ),
            GraphSpec::HubPair(n, k) => write!(f, "hubpair:{n}:{k}"),
        }
    }
}
