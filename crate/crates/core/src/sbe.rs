//! State bias estimation.
//!
//! Drones cannot observe GPS bias directly, only how it changes between two
//! readings. A [`Delta`] records such a change: `bias(p1) - bias(p2) ≈ delta`.
//! Two kinds are produced each tick:
//!
//! * pair deltas, from two drones' simultaneous GPS readings corrected by the
//!   measured relative displacement `r · b`;
//! * step deltas, from one drone's consecutive GPS readings corrected by its
//!   dead-reckoned motion.
//!
//! The deltas form a graph over GPS readings. Fixing the bias of one reading
//! (the anchor) and minimizing the squared delta residuals gives an anchored
//! graph-Laplacian system, solved independently for the x and y components.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::is_finite;
use crate::sim::{DroneEstimate, Observation};
use crate::spatial::PointIndex;
use crate::{Error, Result, Vec2};

/// Default endpoint merge tolerance, meters. Shared endpoints come from
/// reusing the same GPS reading, so matching is effectively exact.
pub const DEFAULT_MERGE_TOL: f64 = 1e-6;

/// Above this many unknowns the solve switches from a dense Cholesky
/// factorization to conjugate gradients.
pub const DENSE_LIMIT: usize = 2000;

const CG_REL_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObsKey {
    pub timestep: u64,
    pub drone: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    Pair,
    Step,
}

impl DeltaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeltaKind::Pair => "pair",
            DeltaKind::Step => "step",
        }
    }
}

/// Asserts `bias(p1) - bias(p2) ≈ delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delta {
    pub p1: Vec2,
    pub p2: Vec2,
    pub delta: Vec2,
    pub kind: DeltaKind,
    pub timestep: u64,
    /// Observations the two endpoints were read from.
    pub sources: [ObsKey; 2],
}

fn key(obs: &Observation) -> ObsKey {
    ObsKey {
        timestep: obs.timestep,
        drone: obs.drone_id,
    }
}

/// Delta between two drones' simultaneous readings, using drone `i`'s range
/// and bearing to `j`.
pub fn make_pair_delta(obs_i: &Observation, obs_j: &Observation) -> Result<Delta> {
    if obs_i.timestep != obs_j.timestep {
        return Err(Error::arg(format!(
            "pair delta needs simultaneous observations, got timesteps {} and {}",
            obs_i.timestep, obs_j.timestep
        )));
    }
    if obs_i.drone_id == obs_j.drone_id {
        return Err(Error::arg("pair delta needs two distinct drones"));
    }
    let slot = obs_i.peer_slot(obs_j.drone_id).ok_or_else(|| {
        Error::arg(format!(
            "drone {} has no measurement of drone {}",
            obs_i.drone_id, obs_j.drone_id
        ))
    })?;
    let relative = obs_i.bearings[slot] * obs_i.ranges[slot];
    Ok(Delta {
        p1: obs_i.gps,
        p2: obs_j.gps,
        delta: obs_i.gps - obs_j.gps - relative,
        kind: DeltaKind::Pair,
        timestep: obs_i.timestep,
        sources: [key(obs_i), key(obs_j)],
    })
}

/// Delta between one drone's consecutive readings.
pub fn make_step_delta(
    obs_k: &Observation,
    obs_prev: &Observation,
    est_k: &DroneEstimate,
    est_prev: &DroneEstimate,
) -> Result<Delta> {
    if obs_k.drone_id != obs_prev.drone_id {
        return Err(Error::arg(format!(
            "step delta needs one drone, got {} and {}",
            obs_k.drone_id, obs_prev.drone_id
        )));
    }
    if obs_k.timestep != obs_prev.timestep + 1 {
        return Err(Error::arg(format!(
            "step delta needs consecutive timesteps, got {} after {}",
            obs_k.timestep, obs_prev.timestep
        )));
    }
    Ok(Delta {
        p1: obs_k.gps,
        p2: obs_prev.gps,
        delta: (obs_k.gps - est_k.position) - (obs_prev.gps - est_prev.position),
        kind: DeltaKind::Step,
        timestep: obs_k.timestep,
        sources: [key(obs_k), key(obs_prev)],
    })
}

/// All deltas for one tick: one pair delta per ordered drone pair, then one
/// step delta per drone, `n²` in total. Inputs are indexed by drone id.
pub fn tick_deltas(
    current: &[Observation],
    previous: &[Observation],
    est_now: &[DroneEstimate],
    est_prev: &[DroneEstimate],
) -> Result<Vec<Delta>> {
    let n = current.len();
    if previous.len() != n || est_now.len() != n || est_prev.len() != n {
        return Err(Error::arg("tick deltas need one observation and estimate per drone"));
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(make_pair_delta(&current[i], &current[j])?);
            }
        }
    }
    for i in 0..n {
        out.push(make_step_delta(&current[i], &previous[i], &est_now[i], &est_prev[i])?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub position: Vec2,
    /// Observation of the first endpoint merged into this node.
    pub source: Option<ObsKey>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Target for `bias[a] - bias[b]`.
    pub delta: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub node: usize,
    pub bias: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    anchor: Anchor,
}

impl DeltaGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, anchor: Anchor) -> Result<Self> {
        if anchor.node >= nodes.len() {
            return Err(Error::arg(format!(
                "anchor node {} out of range for {} nodes",
                anchor.node,
                nodes.len()
            )));
        }
        if !is_finite(&anchor.bias) {
            return Err(Error::arg("anchor bias must be finite"));
        }
        for e in &edges {
            if e.a >= nodes.len() || e.b >= nodes.len() {
                return Err(Error::arg(format!("edge {e:?} references a missing node")));
            }
            if !is_finite(&e.delta) {
                return Err(Error::arg(format!("edge {e:?} has a non-finite delta")));
            }
        }
        Ok(DeltaGraph {
            nodes,
            edges,
            anchor,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    /// Same graph with a different anchor bias.
    pub fn with_anchor_bias(&self, bias: Vec2) -> Self {
        DeltaGraph {
            anchor: Anchor {
                node: self.anchor.node,
                bias,
            },
            ..self.clone()
        }
    }

    /// Least-squares objective summed over all edges and both components.
    pub fn objective(&self, biases: &[Vec2]) -> f64 {
        self.edges
            .iter()
            .map(|e| (biases[e.a] - biases[e.b] - e.delta).norm_squared())
            .sum()
    }
}

/// Merges delta endpoints into graph nodes and locates the anchor.
///
/// An endpoint joins the lowest-index existing node within `merge_tol`;
/// otherwise it starts a new node.
pub fn build_graph(
    deltas: &[Delta],
    anchor_position: Vec2,
    anchor_bias: Vec2,
    merge_tol: f64,
) -> Result<DeltaGraph> {
    if !(merge_tol >= 0.0) {
        return Err(Error::arg(format!("merge tolerance must be >= 0, got {merge_tol}")));
    }
    if deltas.is_empty() {
        return Err(Error::EmptyInput("no deltas to build a graph from"));
    }
    let mut index = PointIndex::new(merge_tol);
    let mut sources = Vec::new();
    let mut edges = Vec::with_capacity(deltas.len());
    for d in deltas {
        if !is_finite(&d.p1) || !is_finite(&d.p2) || !is_finite(&d.delta) {
            return Err(Error::arg(format!("non-finite delta {d:?}")));
        }
        let mut ends = [0usize; 2];
        for (slot, (p, src)) in [(d.p1, d.sources[0]), (d.p2, d.sources[1])]
            .into_iter()
            .enumerate()
        {
            let (id, fresh) = index.find_or_insert(p);
            if fresh {
                sources.push(Some(src));
            }
            ends[slot] = id;
        }
        edges.push(Edge {
            a: ends[0],
            b: ends[1],
            delta: d.delta,
        });
    }
    let anchor_node = index
        .find(&anchor_position)
        .ok_or(Error::Anchoring([anchor_position.x, anchor_position.y]))?;
    let nodes = index
        .into_points()
        .into_iter()
        .zip(sources)
        .map(|(position, source)| Node { position, source })
        .collect();
    DeltaGraph::new(
        nodes,
        edges,
        Anchor {
            node: anchor_node,
            bias: anchor_bias,
        },
    )
}

/// Undirected reachability from the anchor node.
pub fn connected_component(graph: &DeltaGraph) -> Vec<bool> {
    let n = graph.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &graph.edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([graph.anchor.node]);
    seen[graph.anchor.node] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasEstimate {
    pub position: Vec2,
    /// `None` when the node is not connected to the anchor.
    pub bias: Option<Vec2>,
    pub source: Option<ObsKey>,
}

impl BiasEstimate {
    pub fn reachable(&self) -> bool {
        self.bias.is_some()
    }
}

/// One entry per graph node, in node order.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasEstimateSet {
    pub entries: Vec<BiasEstimate>,
}

impl BiasEstimateSet {
    /// `(position, bias, source)` for every anchor-connected node.
    pub fn reachable(&self) -> impl Iterator<Item = (Vec2, Vec2, Option<ObsKey>)> + '_ {
        self.entries
            .iter()
            .filter_map(|e| e.bias.map(|b| (e.position, b, e.source)))
    }

    pub fn reachable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.reachable()).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense up to [`DENSE_LIMIT`] unknowns, iterative above.
    #[default]
    Auto,
    Dense,
    ConjugateGradient,
}

/// Anchored least-squares bias estimate at every anchor-connected node.
pub fn solve_biases(graph: &DeltaGraph) -> Result<BiasEstimateSet> {
    solve_biases_with(graph, SolveMethod::Auto)
}

pub fn solve_biases_with(graph: &DeltaGraph, method: SolveMethod) -> Result<BiasEstimateSet> {
    let reach = connected_component(graph);
    let anchor = graph.anchor;

    // unknown index for every reachable non-anchor node
    let mut unknown = vec![usize::MAX; graph.nodes.len()];
    let mut count = 0;
    for (i, &r) in reach.iter().enumerate() {
        if r && i != anchor.node {
            unknown[i] = count;
            count += 1;
        }
    }

    let system = Laplacian::assemble(graph, &unknown, count);
    let solution = match method {
        SolveMethod::Dense => system.solve_dense()?,
        SolveMethod::ConjugateGradient => system.solve_cg()?,
        SolveMethod::Auto if count <= DENSE_LIMIT => system.solve_dense()?,
        SolveMethod::Auto => system.solve_cg()?,
    };

    let entries = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let bias = if i == anchor.node {
                Some(anchor.bias)
            } else if reach[i] {
                let u = unknown[i];
                Some(Vec2::new(solution[0][u], solution[1][u]))
            } else {
                None
            };
            BiasEstimate {
                position: node.position,
                bias,
                source: node.source,
            }
        })
        .collect();
    Ok(BiasEstimateSet { entries })
}

/// Normal equations of the anchored objective restricted to the unknowns.
/// The matrix is shared by both components; only the right-hand sides differ.
struct Laplacian {
    size: usize,
    diag: Vec<f64>,
    /// Unknown-to-unknown couplings, one per edge (parallel edges repeat).
    links: Vec<(usize, usize)>,
    rhs: [DVector<f64>; 2],
}

impl Laplacian {
    fn assemble(graph: &DeltaGraph, unknown: &[usize], size: usize) -> Self {
        let anchor = graph.anchor;
        let mut diag = vec![0.0; size];
        let mut links = Vec::new();
        let mut rhs = [DVector::zeros(size), DVector::zeros(size)];
        for e in &graph.edges {
            if e.a == e.b {
                // a self-loop only adds a constant to the objective
                continue;
            }
            let ua = unknown[e.a];
            let ub = unknown[e.b];
            let a_free = ua != usize::MAX;
            let b_free = ub != usize::MAX;
            // d/db_a of (b_a - b_b - δ)² = 0 gives b_a - b_b = δ
            if a_free {
                diag[ua] += 1.0;
                for c in 0..2 {
                    rhs[c][ua] += e.delta[c];
                }
            }
            if b_free {
                diag[ub] += 1.0;
                for c in 0..2 {
                    rhs[c][ub] -= e.delta[c];
                }
            }
            match (a_free, b_free) {
                (true, true) => links.push((ua, ub)),
                (true, false) if e.b == anchor.node => {
                    for c in 0..2 {
                        rhs[c][ua] += anchor.bias[c];
                    }
                }
                (false, true) if e.a == anchor.node => {
                    for c in 0..2 {
                        rhs[c][ub] += anchor.bias[c];
                    }
                }
                // both endpoints fixed: the anchor to itself, or edges among
                // nodes outside the anchor's component
                _ => {}
            }
        }
        Laplacian {
            size,
            diag,
            links,
            rhs,
        }
    }

    fn solve_dense(&self) -> Result<[DVector<f64>; 2]> {
        let n = self.size;
        if n == 0 {
            return Ok([DVector::zeros(0), DVector::zeros(0)]);
        }
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for &(a, b) in &self.links {
            m[(a, b)] -= 1.0;
            m[(b, a)] -= 1.0;
        }
        let chol = m.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "anchored Laplacian with {n} unknowns is not positive definite"
            ))
        })?;
        Ok([chol.solve(&self.rhs[0]), chol.solve(&self.rhs[1])])
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for i in 0..self.size {
            out[i] = self.diag[i] * x[i];
        }
        for &(a, b) in &self.links {
            out[a] -= x[b];
            out[b] -= x[a];
        }
    }

    /// Jacobi-preconditioned conjugate gradients, per component.
    fn solve_cg(&self) -> Result<[DVector<f64>; 2]> {
        let n = self.size;
        if self.diag.iter().any(|&d| d <= 0.0) {
            return Err(Error::Numerical("isolated unknown in anchored Laplacian".into()));
        }
        let inv_diag = DVector::from_iterator(n, self.diag.iter().map(|d| 1.0 / d));
        let max_iter = 10 * n + 100;
        let mut out = [DVector::zeros(n), DVector::zeros(n)];
        for c in 0..2 {
            let b = &self.rhs[c];
            let b_norm = b.norm();
            if b_norm == 0.0 {
                continue;
            }
            let x = &mut out[c];
            let mut r = b.clone();
            let mut z = r.component_mul(&inv_diag);
            let mut p = z.clone();
            let mut ap = DVector::zeros(n);
            let mut rz = r.dot(&z);
            let mut converged = false;
            for _ in 0..max_iter {
                self.apply(&p, &mut ap);
                let alpha = rz / p.dot(&ap);
                x.axpy(alpha, &p, 1.0);
                r.axpy(-alpha, &ap, 1.0);
                if r.norm() <= CG_REL_TOL * b_norm {
                    converged = true;
                    break;
                }
                z = r.component_mul(&inv_diag);
                let rz_next = r.dot(&z);
                p = &z + &p * (rz_next / rz);
                rz = rz_next;
            }
            if !converged {
                return Err(Error::Numerical(format!(
                    "conjugate gradients did not converge in {max_iter} iterations ({n} unknowns)"
                )));
            }
        }
        Ok(out)
    }
}
