//! Communication graphs: generation, partitioning into regular/misbehaving sets,
//! and edge editing.
//!
//! A [`Network`] couples an undirected graph with its nominal row-stochastic weight
//! matrix `W°` (uniform weights `1/deg(i)` on edges, zero diagonal) and a partition
//! of the nodes. Internally regular nodes always occupy the leading indices
//! `0..n_regular`; the original 1-based node ids survive in a label map so that
//! external interfaces can keep talking about the ids a graph was created with.

use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Tolerance on `W°` row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// How a random graph is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Every node has exactly `degree` neighbors (configuration model with rejection).
    KRegular { degree: usize },
    /// Each pair is linked independently with probability `p`.
    ErdosRenyi { p: f64 },
    /// Nodes placed i.i.d. uniform on the unit square, linked iff within `radius`.
    Geometric { radius: f64 },
    /// Explicit 1-based edge list.
    Explicit { edges: Vec<(usize, usize)> },
}

/// A reproducible graph specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GraphSpec {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            GraphKind::KRegular { .. } => "k_regular",
            GraphKind::ErdosRenyi { .. } => "erdos_renyi",
            GraphKind::Geometric { .. } => "geometric",
            GraphKind::Explicit { .. } => "explicit",
        }
    }
}

/// An undirected communication graph with nominal weights and a regular/misbehaving
/// partition.
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    n_regular: usize,
    /// Internal index -> external 1-based node id.
    labels: Vec<usize>,
    /// Sorted adjacency lists over internal indices.
    adj: Vec<Vec<usize>>,
    /// Nominal weight matrix over internal indices.
    w_nominal: Matrix,
    /// Node positions for geometric graphs, kept for reproducibility.
    positions: Option<Vec<[f64; 2]>>,
    /// The spec this network was generated from, if any.
    source: Option<GraphSpec>,
}

impl Network {
    /// Builds an all-regular network from an edge list over internal 0-based
    /// indices, assigning uniform nominal weights. The graph must be simple.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("network must have at least one node".into()));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop at node {u}")));
            }
            if adj[u].contains(&v) {
                return Err(Error::Graph(format!("duplicate edge ({u}, {v})")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        let w_nominal = uniform_weights(&adj);
        Ok(Self {
            n,
            n_regular: n,
            labels: (1..=n).collect(),
            adj,
            w_nominal,
            positions: None,
            source: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_regular(&self) -> usize {
        self.n_regular
    }

    pub fn n_misbehaving(&self) -> usize {
        self.n - self.n_regular
    }

    /// Nominal weight matrix `W°` over internal indices (regular nodes first).
    pub fn w_nominal(&self) -> &Matrix {
        &self.w_nominal
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// All edges as internal index pairs `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for &v in &self.adj[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// External 1-based id of internal node `i`.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Internal index of the node with external id `label`, if present.
    pub fn internal_index(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// External ids of the regular nodes, in internal order.
    pub fn regular_ids(&self) -> &[usize] {
        &self.labels[..self.n_regular]
    }

    /// External ids of the misbehaving nodes, in internal order.
    pub fn misbehaving_ids(&self) -> &[usize] {
        &self.labels[self.n_regular..]
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn source(&self) -> Option<&GraphSpec> {
        self.source.as_ref()
    }

    pub fn is_connected(&self) -> bool {
        connected(&self.adj)
    }

    /// Degree histogram: `hist[d]` = number of nodes with degree `d`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let dmax = (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0);
        let mut hist = vec![0usize; dmax + 1];
        for i in 0..self.n {
            hist[self.degree(i)] += 1;
        }
        hist
    }

    /// Checks the structural invariants: symmetric simple adjacency, zero diagonal,
    /// row-stochastic `W°` supported exactly on the edges.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.w_nominal[(i, i)] != 0.0 {
                return Err(Error::Graph(format!("nonzero diagonal weight at {i}")));
            }
            let row_sum: f64 = self.w_nominal.row(i).iter().sum();
            if self.degree(i) > 0 && (row_sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Graph(format!(
                    "row {i} of W° sums to {row_sum}, expected 1"
                )));
            }
            for j in 0..self.n {
                let w = self.w_nominal[(i, j)];
                if w < 0.0 {
                    return Err(Error::Graph(format!("negative weight at ({i}, {j})")));
                }
                if (w > 0.0) != self.has_edge(i, j) {
                    return Err(Error::Graph(format!(
                        "weight/adjacency mismatch at ({i}, {j})"
                    )));
                }
                if self.has_edge(i, j) != self.has_edge(j, i) {
                    return Err(Error::Graph("asymmetric adjacency".into()));
                }
            }
        }
        Ok(())
    }

    /// Returns a copy with exactly the nodes of the given external 1-based ids
    /// marked misbehaving, relabeled so regular nodes occupy the leading internal
    /// indices (stable order by original id) and `W°` permuted conjugately.
    ///
    /// Replaces any previous partition. Errors if an id is unknown, repeated, or
    /// if no regular node would remain.
    pub fn mark_misbehaving(&self, ids: &[usize]) -> Result<Self> {
        let mut mark = vec![false; self.n];
        for &id in ids {
            let i = self
                .internal_index(id)
                .ok_or_else(|| Error::Graph(format!("unknown node id {id}")))?;
            if mark[i] {
                return Err(Error::Graph(format!("node id {id} listed twice")));
            }
            mark[i] = true;
        }
        if ids.len() == self.n {
            return Err(Error::Graph(
                "cannot mark every node misbehaving: no regular node left".into(),
            ));
        }

        // Order nodes by original id, regular block first.
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&i| self.labels[i]);
        let mut perm: Vec<usize> = order.iter().copied().filter(|&i| !mark[i]).collect();
        perm.extend(order.iter().copied().filter(|&i| mark[i]));

        let mut inv = vec![0usize; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let adj: Vec<Vec<usize>> = perm
            .iter()
            .map(|&old| {
                let mut list: Vec<usize> = self.adj[old].iter().map(|&v| inv[v]).collect();
                list.sort_unstable();
                list
            })
            .collect();
        let w_nominal = Matrix::from_fn(self.n, self.n, |i, j| self.w_nominal[(perm[i], perm[j])]);
        let labels: Vec<usize> = perm.iter().map(|&old| self.labels[old]).collect();
        let positions = self
            .positions
            .as_ref()
            .map(|pos| perm.iter().map(|&old| pos[old]).collect());
        Ok(Self {
            n: self.n,
            n_regular: self.n - ids.len(),
            labels,
            adj,
            w_nominal,
            positions,
            source: self.source.clone(),
        })
    }

    /// Removes the edge `(u, v)` (internal indices) and recomputes uniform weights.
    /// Errors if the edge does not exist or its removal disconnects the graph.
    pub fn remove_edge(&self, u: usize, v: usize) -> Result<Self> {
        if u >= self.n || v >= self.n || !self.has_edge(u, v) {
            return Err(Error::Graph(format!("edge ({u}, {v}) does not exist")));
        }
        let mut adj = self.adj.clone();
        adj[u].retain(|&x| x != v);
        adj[v].retain(|&x| x != u);
        if !connected(&adj) {
            return Err(Error::Graph(format!(
                "removing edge ({u}, {v}) disconnects the graph"
            )));
        }
        Ok(Self {
            w_nominal: uniform_weights(&adj),
            adj,
            ..self.clone()
        })
    }

    /// Removes a perfect matching (a node-disjoint edge set covering every node),
    /// dropping all degrees by one. Reports infeasibility when none exists.
    /// Unlike [`Network::remove_edge`] the result may be disconnected (removing a
    /// matching from a cycle `C4` legitimately leaves two disjoint edges).
    pub fn perfect_matching_removal(&self) -> Result<Self> {
        let matching = maximum_matching(self);
        if matching.len() * 2 != self.n {
            return Err(Error::Infeasible(format!(
                "no perfect matching: maximum matching covers {} of {} nodes",
                matching.len() * 2,
                self.n
            )));
        }
        let mut adj = self.adj.clone();
        for &(u, v) in &matching {
            adj[u].retain(|&x| x != v);
            adj[v].retain(|&x| x != u);
        }
        Ok(Self {
            w_nominal: uniform_weights(&adj),
            adj,
            ..self.clone()
        })
    }
}

fn uniform_weights(adj: &[Vec<usize>]) -> Matrix {
    let n = adj.len();
    let mut w = Matrix::zeros(n, n);
    for (i, list) in adj.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let wij = 1.0 / list.len() as f64;
        for &j in list {
            w[(i, j)] = wij;
        }
    }
    w
}

fn connected(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Maximum matching as internal index pairs, via petgraph (Gabow's algorithm,
/// exact on general graphs).
fn maximum_matching(net: &Network) -> Vec<(usize, usize)> {
    use petgraph::graph::UnGraph;
    let mut g = UnGraph::<(), ()>::new_undirected();
    let nodes: Vec<_> = (0..net.n()).map(|_| g.add_node(())).collect();
    for (u, v) in net.edges() {
        g.add_edge(nodes[u], nodes[v], ());
    }
    let matching = petgraph::algo::matching::maximum_matching(&g);
    matching
        .edges()
        .map(|(a, b)| (a.index(), b.index()))
        .collect()
}

/// Generates a connected all-regular network from `spec`, resampling with an
/// incremented sub-seed (up to 1000 attempts) until the graph is connected.
pub fn generate(spec: &GraphSpec) -> Result<Network> {
    validate_spec(spec)?;
    if let GraphKind::Explicit { edges } = &spec.kind {
        let internal: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(u, v)| {
                if u == 0 || v == 0 || u > spec.n || v > spec.n {
                    Err(Error::Graph(format!(
                        "explicit edge ({u}, {v}) is not 1-based within n = {}",
                        spec.n
                    )))
                } else {
                    Ok((u - 1, v - 1))
                }
            })
            .collect::<Result<_>>()?;
        let mut net = Network::from_edges(spec.n, &internal)?;
        if !net.is_connected() {
            return Err(Error::Graph("explicit graph is not connected".into()));
        }
        net.source = Some(spec.clone());
        return Ok(net);
    }

    const MAX_ATTEMPTS: u64 = 1000;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(attempt));
        let sampled = match &spec.kind {
            GraphKind::KRegular { degree } => sample_k_regular(spec.n, *degree, &mut rng),
            GraphKind::ErdosRenyi { p } => Some((sample_erdos_renyi(spec.n, *p, &mut rng), None)),
            GraphKind::Geometric { radius } => {
                let (edges, pos) = sample_geometric(spec.n, *radius, &mut rng);
                Some((edges, Some(pos)))
            }
            GraphKind::Explicit { .. } => unreachable!(),
        };
        let Some((edges, positions)) = sampled else {
            continue;
        };
        let mut net = Network::from_edges(spec.n, &edges)?;
        if net.is_connected() {
            net.positions = positions;
            net.source = Some(spec.clone());
            return Ok(net);
        }
    }
    Err(Error::Graph(format!(
        "failed to draw a connected {} graph within {MAX_ATTEMPTS} attempts",
        spec.kind_name()
    )))
}

fn validate_spec(spec: &GraphSpec) -> Result<()> {
    if spec.n == 0 {
        return Err(Error::Graph("graph spec requires n ≥ 1".into()));
    }
    match &spec.kind {
        GraphKind::KRegular { degree } => {
            if *degree == 0 || *degree >= spec.n {
                return Err(Error::Graph(format!(
                    "k-regular degree {degree} infeasible for n = {}",
                    spec.n
                )));
            }
            if (degree * spec.n) % 2 != 0 {
                return Err(Error::Graph(format!(
                    "k-regular requires Δ·n even, got Δ = {degree}, n = {}",
                    spec.n
                )));
            }
        }
        GraphKind::ErdosRenyi { p } => {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Graph(format!(
                    "Erdős–Rényi probability must lie in (0, 1], got {p}"
                )));
            }
        }
        GraphKind::Geometric { radius } => {
            if !(*radius > 0.0 && *radius <= std::f64::consts::SQRT_2) {
                return Err(Error::Graph(format!(
                    "geometric radius must lie in (0, √2], got {radius}"
                )));
            }
        }
        GraphKind::Explicit { .. } => {}
    }
    Ok(())
}

/// Configuration-model pairing: each node contributes `degree` stubs, stubs are
/// shuffled and paired; pairings with self-loops or multi-edges are rejected and
/// redrawn (bounded retries per sub-seed).
fn sample_k_regular(
    n: usize,
    degree: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<(usize, usize)>, Option<Vec<[f64; 2]>>)> {
    const PAIRING_RETRIES: usize = 200;
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, degree)).collect();
    'retry: for _ in 0..PAIRING_RETRIES {
        stubs.shuffle(rng);
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'retry;
            }
            edges.push((u, v));
        }
        return Some((edges, None));
    }
    None
}

fn sample_erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn sample_geometric(
    n: usize,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<(usize, usize)>, Vec<[f64; 2]>) {
    let pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let dx = pos[u][0] - pos[v][0];
            let dy = pos[u][1] - pos[v][1];
            if dx * dx + dy * dy <= r2 {
                edges.push((u, v));
            }
        }
    }
    (edges, pos)
}

/// All-pairs shortest path lengths (hop counts) via BFS from every node.
/// Errors if the graph is disconnected.
pub fn shortest_path_lengths(net: &Network) -> Result<Vec<Vec<u32>>> {
    let n = net.n();
    let mut dist = vec![vec![u32::MAX; n]; n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        let row = &mut dist[s];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in net.neighbors(u) {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if row.iter().any(|&d| d == u32::MAX) {
            return Err(Error::Graph(
                "shortest paths undefined: graph is disconnected".into(),
            ));
        }
    }
    Ok(dist)
}
