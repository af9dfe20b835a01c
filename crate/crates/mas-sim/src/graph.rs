//! Delayed communication topology.
//!
//! A weighted directed acyclic graph whose edges carry fixed positive integer
//! transmission delays (in steps). Node 0 is the reference generator and has
//! no in-edges. The quantities computed here size the predictor bundles that
//! flow along each edge:
//!
//! - the *modified longest path* `w(i, j)`: the maximum over all directed
//!   paths from `i` to `j` of (sum of edge delays − number of edges), i.e.
//!   each edge contributes `delay − 1`;
//! - the *prediction horizon* of edge `(i, j)`: the index range `0..=w(j, N)`
//!   of future values the sender must bundle, where `N` is the sink-most
//!   node (the last node in topological order);
//! - the *exactness time* `T_max`: after this step every delivered predicted
//!   value matches the future value it predicts exactly.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

/// Errors raised by graph construction, validation, and path queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    /// An edge endpoint is not a valid node id.
    #[error("edge ({sender}, {receiver}): node id out of range 0..{node_count}")]
    NodeOutOfRange {
        sender: usize,
        receiver: usize,
        node_count: usize,
    },
    /// The same (sender, receiver) pair appears more than once.
    #[error("edge ({sender}, {receiver}) listed more than once")]
    DuplicateEdge { sender: usize, receiver: usize },
    /// An edge connects a node to itself.
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    /// Node 0 generates the reference trajectory and accepts no input.
    #[error("node 0 is the reference generator and cannot have an in-edge (got {sender} -> 0)")]
    LeaderHasInEdge { sender: usize },
    /// Edge weights enter the observer coupling and must be positive.
    #[error("edge ({sender}, {receiver}): weight must be positive and finite, got {weight}")]
    NonPositiveWeight {
        sender: usize,
        receiver: usize,
        weight: f64,
    },
    /// Transmission takes at least one step; a zero delay is rejected.
    #[error("edge ({sender}, {receiver}): delay must be at least one step")]
    ZeroDelay { sender: usize, receiver: usize },
    /// The edge relation contains a directed cycle.
    #[error("communication graph has a cycle through node {0}")]
    CycleDetected(usize),
    /// A node's onward forecasts need deeper values than its in-edges
    /// carry. Horizons are directed at the terminal node, so a branch
    /// that leaves the terminal-directed spine can outrun them; such a
    /// topology cannot be simulated and is rejected up front.
    #[error(
        "node {node} must forward forecasts {need} steps deep on edge \
         ({node}, {receiver}) but its in-edges carry only {supply}; this \
         branch outruns the terminal-directed horizons"
    )]
    BranchOutrunsHorizons {
        node: usize,
        receiver: usize,
        need: usize,
        supply: usize,
    },
    /// A query referenced an edge that is not in the graph.
    #[error("no edge ({sender}, {receiver}) in the graph")]
    EdgeAbsent { sender: usize, receiver: usize },
}

/// A directed communication link with coupling weight and transmission delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayEdge {
    /// Transmitting node.
    pub sender: usize,
    /// Receiving node.
    pub receiver: usize,
    /// Coupling weight `a_{receiver,sender} > 0`.
    pub weight: f64,
    /// Transmission delay in steps, at least 1.
    pub delay: usize,
}

/// A delay-annotated communication graph over nodes `0..node_count`.
///
/// Construction checks everything local to single edges (id ranges, positive
/// weights, delays ≥ 1, duplicates, self-loops, no in-edge into node 0).
/// Acyclicity is a global property and is checked by
/// [`DelayGraph::validate_and_order`].
#[derive(Debug, Clone)]
pub struct DelayGraph {
    node_count: usize,
    edges: Vec<DelayEdge>,
    /// Edge indices grouped by receiver, ascending by sender.
    in_adj: Vec<Vec<usize>>,
    /// Edge indices grouped by sender, ascending by receiver.
    out_adj: Vec<Vec<usize>>,
}

impl DelayGraph {
    /// Builds a graph from an edge list, rejecting locally invalid edges.
    pub fn new(node_count: usize, mut edges: Vec<DelayEdge>) -> Result<Self, GraphError> {
        for e in &edges {
            if e.sender >= node_count || e.receiver >= node_count {
                return Err(GraphError::NodeOutOfRange {
                    sender: e.sender,
                    receiver: e.receiver,
                    node_count,
                });
            }
            if e.sender == e.receiver {
                return Err(GraphError::SelfLoop(e.sender));
            }
            if e.receiver == 0 {
                return Err(GraphError::LeaderHasInEdge { sender: e.sender });
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::NonPositiveWeight {
                    sender: e.sender,
                    receiver: e.receiver,
                    weight: e.weight,
                });
            }
            if e.delay == 0 {
                return Err(GraphError::ZeroDelay {
                    sender: e.sender,
                    receiver: e.receiver,
                });
            }
        }
        edges.sort_by_key(|e| (e.sender, e.receiver));
        for pair in edges.windows(2) {
            if pair[0].sender == pair[1].sender && pair[0].receiver == pair[1].receiver {
                return Err(GraphError::DuplicateEdge {
                    sender: pair[0].sender,
                    receiver: pair[0].receiver,
                });
            }
        }
        let mut in_adj = vec![Vec::new(); node_count];
        let mut out_adj = vec![Vec::new(); node_count];
        for (idx, e) in edges.iter().enumerate() {
            in_adj[e.receiver].push(idx);
            out_adj[e.sender].push(idx);
        }
        Ok(Self {
            node_count,
            edges,
            in_adj,
            out_adj,
        })
    }

    /// Number of nodes, including the reference generator at index 0.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// All edges, sorted by (sender, receiver).
    pub fn edges(&self) -> &[DelayEdge] {
        &self.edges
    }

    /// The edge from `sender` to `receiver`, if present.
    pub fn edge(&self, sender: usize, receiver: usize) -> Option<&DelayEdge> {
        self.out_adj
            .get(sender)?
            .iter()
            .map(|&idx| &self.edges[idx])
            .find(|e| e.receiver == receiver)
    }

    /// The delay of edge `(sender, receiver)`, if present.
    pub fn delay(&self, sender: usize, receiver: usize) -> Option<usize> {
        self.edge(sender, receiver).map(|e| e.delay)
    }

    /// In-edges of `node`, ascending by sender.
    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &DelayEdge> {
        self.in_adj[node].iter().map(move |&idx| &self.edges[idx])
    }

    /// Out-edges of `node`, ascending by receiver.
    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &DelayEdge> {
        self.out_adj[node].iter().map(move |&idx| &self.edges[idx])
    }

    /// Checks acyclicity and returns a topological order of all nodes.
    ///
    /// Node 0 comes first (it has no in-edges); ties among ready nodes are
    /// broken by ascending node id, so the order is deterministic. On a
    /// cycle, the error names the smallest node id on it.
    pub fn validate_and_order(&self) -> Result<Vec<usize>, GraphError> {
        let mut in_deg: Vec<usize> = (0..self.node_count).map(|v| self.in_adj[v].len()).collect();
        let mut order = Vec::with_capacity(self.node_count);
        let mut ready: Vec<usize> = (0..self.node_count).filter(|&v| in_deg[v] == 0).collect();
        // `ready` is kept sorted descending so pop() yields the smallest id.
        ready.sort_unstable_by(|a, b| b.cmp(a));
        while let Some(v) = ready.pop() {
            order.push(v);
            for &idx in &self.out_adj[v] {
                let w = self.edges[idx].receiver;
                in_deg[w] -= 1;
                if in_deg[w] == 0 {
                    let pos = ready.binary_search_by(|x| w.cmp(x)).unwrap_or_else(|p| p);
                    ready.insert(pos, w);
                }
            }
        }
        if order.len() < self.node_count {
            let stuck = (0..self.node_count)
                .find(|&v| in_deg[v] > 0)
                .expect("some node must remain on a cycle");
            return Err(GraphError::CycleDetected(stuck));
        }
        Ok(order)
    }

    /// Modified longest path weight `w(from, to)`.
    ///
    /// Maximum over all directed paths from `from` to `to` of
    /// `sum(delay) − path length`; equivalently each edge contributes
    /// `delay − 1 ≥ 0`. Returns `Ok(None)` when no path exists (in
    /// particular whenever `from == to`, since the graph is acyclic).
    pub fn modified_longest_path(
        &self,
        from: usize,
        to: usize,
    ) -> Result<Option<usize>, GraphError> {
        let order = self.validate_and_order()?;
        // dist[v] = best modified weight of a path from `from` to v, or None.
        let mut dist: Vec<Option<usize>> = vec![None; self.node_count];
        let mut started = false;
        for &v in &order {
            if v == from {
                dist[v] = Some(0);
                started = true;
            }
            if !started {
                continue;
            }
            let Some(d) = dist[v] else { continue };
            for &idx in &self.out_adj[v] {
                let e = &self.edges[idx];
                let cand = d + (e.delay - 1);
                let slot = &mut dist[e.receiver];
                if slot.is_none_or(|best| cand > best) {
                    *slot = Some(cand);
                }
            }
        }
        Ok(if from == to { None } else { dist[to] })
    }

    /// The sink-most node: the last node in topological order.
    pub fn sink(&self) -> Result<usize, GraphError> {
        Ok(*self
            .validate_and_order()?
            .last()
            .expect("graph has at least node 0"))
    }

    /// Prediction horizon of edge `(sender, receiver)`: the inclusive index
    /// range `0..=w(receiver, N)` of predicted values the sender bundles on
    /// this edge, where `N` is the sink-most node. A receiver with no path
    /// to `N` (including `N` itself) gets `0..=0`: only the base value.
    pub fn prediction_horizon(
        &self,
        sender: usize,
        receiver: usize,
    ) -> Result<std::ops::RangeInclusive<usize>, GraphError> {
        if self.edge(sender, receiver).is_none() {
            return Err(GraphError::EdgeAbsent { sender, receiver });
        }
        let sink = self.sink()?;
        let w = self.modified_longest_path(receiver, sink)?.unwrap_or(0);
        Ok(0..=w)
    }

    /// The exactness time `T_max = Σ_i max_j τ_{j,i}` over receiving nodes:
    /// the sum, over every node with in-edges, of its largest in-edge delay.
    /// From this step on, every delivered predicted value in a compensated
    /// run equals the future value it predicts.
    pub fn exactness_time(&self) -> usize {
        (0..self.node_count)
            .map(|v| self.in_edges(v).map(|e| e.delay).max().unwrap_or(0))
            .sum()
    }
}

/// Coupling matrices and per-edge horizons derived from a validated graph.
#[derive(Debug, Clone)]
pub struct TopologyMatrices {
    /// Follower Laplacian `H` (agents 1..=N): `H[i-1][i-1] = Σ_{j≥1} a_{i,j}`,
    /// `H[i-1][j-1] = −a_{i,j}` for j ≥ 1.
    pub h: DMatrix<f64>,
    /// Leader in-weights `D_0 = diag(a_{1,0}, …, a_{N,0})`.
    pub d0: DMatrix<f64>,
    /// Topological order of all nodes, node 0 first.
    pub order: Vec<usize>,
    /// Upper horizon index `w(receiver, N)` for every edge `(sender, receiver)`.
    pub horizons: BTreeMap<(usize, usize), usize>,
    /// The exactness time `T_max`.
    pub t_max: usize,
}

impl TopologyMatrices {
    /// Derives coupling matrices, horizons, and `T_max` from `graph`.
    pub fn from_graph(graph: &DelayGraph) -> Result<Self, GraphError> {
        let order = graph.validate_and_order()?;
        let n_agents = graph.node_count() - 1;
        let mut h = DMatrix::zeros(n_agents, n_agents);
        let mut d0 = DMatrix::zeros(n_agents, n_agents);
        for e in graph.edges() {
            let row = e.receiver - 1;
            if e.sender == 0 {
                d0[(row, row)] += e.weight;
            } else {
                h[(row, row)] += e.weight;
                h[(row, e.sender - 1)] -= e.weight;
            }
        }
        let mut horizons = BTreeMap::new();
        for e in graph.edges() {
            let w = *graph.prediction_horizon(e.sender, e.receiver)?.end();
            horizons.insert((e.sender, e.receiver), w);
        }
        // Forecast-depth feasibility: computing the bundle for out-edge
        // (r, s) consumes delivered values up to index delay + w(s, N) − 1,
        // while every in-edge of r supplies indices 0..=w(r, N). On a
        // single-terminal graph the longest-path recursion makes the supply
        // sufficient automatically; a branch that cannot reach the terminal
        // node can demand more, and such a run would fail mid-flight.
        for e in graph.edges() {
            let r = e.receiver;
            let supply = horizons[&(e.sender, r)];
            for out in graph.out_edges(r) {
                let need = out.delay + horizons[&(r, out.receiver)] - 1;
                if need > supply {
                    return Err(GraphError::BranchOutrunsHorizons {
                        node: r,
                        receiver: out.receiver,
                        need,
                        supply,
                    });
                }
            }
        }
        Ok(Self {
            h,
            d0,
            order,
            horizons,
            t_max: graph.exactness_time(),
        })
    }
}
