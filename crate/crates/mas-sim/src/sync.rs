//! Per-node synchronization machinery.
//!
//! Each agent runs a distributed observer of the exosystem state driven by
//! delayed neighbor messages. Senders do not forward raw observer states:
//! node `i` sends along edge `(i, r)` a *predicted* observer value
//! `Ξ_{i,r}(k) ≈ ξ_i(k + τ_{i,r})` plus a tail of *distributed predictor*
//! values `Ξ_{i,r,s}(k) ≈ ξ_i(k + τ_{i,r} + s)` for `s = 1..=w`, so the
//! receiver (and everything downstream of it) can cancel the transmission
//! delay exactly once enough history has flowed through the network.
//!
//! All predictor values at one node and step are prefixes of a single
//! forward recursion: starting from `z_0 = ξ_i(k)`,
//!
//! ```text
//! z_{t+1} = Ŝ_i z_t + β Σ_{j ∈ in(i)} a_{i,j} S · (value t of j's bundle)
//! ```
//!
//! where a missing bundle contributes zero (zero history). Then
//! `ξ_i(k+1) = z_1`, `Ξ_{i,r} = z_{τ_{i,r}}`, and `Ξ_{i,r,s} = z_{τ_{i,r}+s}`,
//! which is exactly the closed-form predictor cascade unrolled one level per
//! step. [`observer_step`], [`agent_predictor`], and
//! [`distributed_predictor`] each expose one slice of this recursion.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::graph::DelayGraph;
use crate::linalg::RegulatorSolution;
use crate::netsim::MessageBundle;

/// Errors raised by the per-node operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    /// A received bundle is too short for the requested prediction index.
    #[error(
        "bundle from node {sender} to node {receiver} has no value at index {index} \
         (carries indices 0..={available})"
    )]
    HorizonInsufficient {
        sender: usize,
        receiver: usize,
        index: usize,
        available: usize,
    },
    /// A predictor was requested for a non-existent edge.
    #[error("node {sender} has no out-edge to node {receiver}")]
    NoSuchEdge { sender: usize, receiver: usize },
    /// Vectors or matrices disagree on dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Output feedback requires a Luenberger gain.
    #[error("agent has no Luenberger gain but output feedback was requested")]
    MissingLuenbergerGain,
    /// The pair (A, B) has an uncontrollable unstable mode.
    #[error("pair (A, B) fails the stabilizability rank test at eigenvalue modulus {modulus:.6}")]
    NotStabilizable { modulus: f64 },
    /// The pair (C, A) has an unobservable unstable mode.
    #[error("pair (C, A) fails the detectability rank test at eigenvalue modulus {modulus:.6}")]
    NotDetectable { modulus: f64 },
}

/// The autonomous reference generator `υ(k+1) = S υ(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExosystemModel {
    /// Reference dynamics `S` (q × q).
    pub s: DMatrix<f64>,
}

impl ExosystemModel {
    /// Reference state dimension `q`.
    pub fn q(&self) -> usize {
        self.s.nrows()
    }
}

/// One heterogeneous agent `x(k+1) = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl AgentModel {
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Checks shapes plus stabilizability and detectability of every
    /// eigenvalue on or outside the unit circle (rank test on the
    /// eigenvalue-shifted pencils).
    pub fn validate(&self) -> Result<(), SyncError> {
        let n = self.n();
        if self.a.ncols() != n {
            return Err(SyncError::DimensionMismatch {
                context: "agent A columns",
                expected: n,
                got: self.a.ncols(),
            });
        }
        if self.b.nrows() != n {
            return Err(SyncError::DimensionMismatch {
                context: "agent B rows",
                expected: n,
                got: self.b.nrows(),
            });
        }
        if self.c.ncols() != n {
            return Err(SyncError::DimensionMismatch {
                context: "agent C columns",
                expected: n,
                got: self.c.ncols(),
            });
        }
        for lambda in self.a.complex_eigenvalues().iter() {
            if lambda.norm() < 1.0 - 1e-9 {
                continue;
            }
            if !pencil_full_rank(&self.a, &self.b, *lambda, false) {
                return Err(SyncError::NotStabilizable {
                    modulus: lambda.norm(),
                });
            }
            if !pencil_full_rank(&self.a, &self.c, *lambda, true) {
                return Err(SyncError::NotDetectable {
                    modulus: lambda.norm(),
                });
            }
        }
        Ok(())
    }
}

/// Rank test of `[λI − A, B]` (stabilizability) or `[λI − A; C]`
/// (detectability, `stacked = true`).
fn pencil_full_rank(
    a: &DMatrix<f64>,
    other: &DMatrix<f64>,
    lambda: Complex<f64>,
    stacked: bool,
) -> bool {
    let n = a.nrows();
    let (rows, cols) = if stacked {
        (n + other.nrows(), n)
    } else {
        (n, n + other.ncols())
    };
    let mut pencil = DMatrix::<Complex<f64>>::zeros(rows, cols);
    for i in 0..n {
        for j in 0..n {
            pencil[(i, j)] = -Complex::new(a[(i, j)], 0.0);
        }
        pencil[(i, i)] += lambda;
    }
    if stacked {
        for i in 0..other.nrows() {
            for j in 0..n {
                pencil[(n + i, j)] = Complex::new(other[(i, j)], 0.0);
            }
        }
    } else {
        for i in 0..n {
            for j in 0..other.ncols() {
                pencil[(i, n + j)] = Complex::new(other[(i, j)], 0.0);
            }
        }
    }
    let sv = pencil.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > smax.max(1.0) * 1e-9).count();
    rank == n
}

/// Synthesized gains for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    /// State-feedback gain `K_x` (m × n), Schur-stabilizing `A + B K_x`.
    pub k_x: DMatrix<f64>,
    /// Observer-feedforward gain `K_ξ = U − K_x X` (m × q).
    pub k_xi: DMatrix<f64>,
    /// Luenberger output-injection gain `L` (n × p), if synthesized.
    pub l: Option<DMatrix<f64>>,
    /// Regulator state correspondence `X` (n × q).
    pub x: DMatrix<f64>,
    /// Regulator feedforward correspondence `U` (m × q).
    pub u: DMatrix<f64>,
}

impl AgentGains {
    /// Assembles gains from a stabilizing `K_x`, an optional Luenberger `L`,
    /// and the agent's regulator solution. The feedforward gain is defined
    /// as `K_ξ = U − K_x X` — an identity, not an approximation.
    pub fn new(k_x: DMatrix<f64>, l: Option<DMatrix<f64>>, reg: &RegulatorSolution) -> Self {
        let k_xi = &reg.u - &k_x * &reg.x;
        Self {
            k_x,
            k_xi,
            l,
            x: reg.x.clone(),
            u: reg.u.clone(),
        }
    }
}

/// Every gain the closed loop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    /// Per-agent gains, index 0 ↔ node 1.
    pub agents: Vec<AgentGains>,
    /// Shared output-comparison matrix `F` (p × q); the regulated output is
    /// `e_i = C_i x_i + F υ`.
    pub f: DMatrix<f64>,
    /// Observer coupling gain `β`.
    pub beta: f64,
}

/// Mutable per-node simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Node id (≥ 1; node 0 is the exosystem).
    pub id: usize,
    /// Distributed observer state `ξ_i(k)`.
    pub xi: DVector<f64>,
    /// Plant state `x_i(k)`.
    pub x: DVector<f64>,
    /// Luenberger estimate `x̂_i(k)`.
    pub x_hat: DVector<f64>,
    /// Leakage dynamics `Ŝ_i = (1 − β Σ_{j ∈ in(i)} a_{i,j}) S`, a scalar
    /// multiple of `S` (the in-weight sum includes the leader weight).
    pub s_hat: DMatrix<f64>,
    /// Bundles that arrived at the current step, by sender. A sender with
    /// no entry contributes zero vectors (zero history).
    pub received: BTreeMap<usize, MessageBundle>,
}

impl NodeState {
    /// Initializes node `id` with the given states and its leakage matrix.
    pub fn new(
        id: usize,
        xi: DVector<f64>,
        x: DVector<f64>,
        x_hat: DVector<f64>,
        exo: &ExosystemModel,
        gains: &GainSet,
        graph: &DelayGraph,
    ) -> Self {
        let in_weight: f64 = graph.in_edges(id).map(|e| e.weight).sum();
        let s_hat = exo.s.scale(1.0 - gains.beta * in_weight);
        Self {
            id,
            xi,
            x,
            x_hat,
            s_hat,
            received: BTreeMap::new(),
        }
    }
}

/// A predicted reference bundle produced by the exosystem for one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ExoPrediction {
    /// `Υ = S^τ υ(k)`, the reference value at arrival time.
    pub base: DVector<f64>,
    /// `S^{τ+s} υ(k)` for `s = 1..=w`.
    pub horizon: Vec<DVector<f64>>,
}

/// Regulated output error and state deviation of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatedError {
    /// `e_i = C_i x_i + F υ`.
    pub e: DVector<f64>,
    /// `x̃_i = x_i − X_i υ`.
    pub x_tilde: DVector<f64>,
}

/// Advances the reference: `υ(k+1) = S υ(k)`.
pub fn exosystem_step(exo: &ExosystemModel, v: &DVector<f64>) -> DVector<f64> {
    &exo.s * v
}

/// Exact reference prediction for an edge with delay `tau` and horizon `w`:
/// the base value `S^tau υ` and the tail `S^{tau+s} υ`, `s = 1..=w`.
pub fn exo_predictor(
    exo: &ExosystemModel,
    v: &DVector<f64>,
    tau: usize,
    horizon_w: usize,
) -> ExoPrediction {
    let mut base = v.clone();
    for _ in 0..tau {
        base = &exo.s * base;
    }
    let mut horizon = Vec::with_capacity(horizon_w);
    let mut cur = base.clone();
    for _ in 0..horizon_w {
        cur = &exo.s * cur;
        horizon.push(cur.clone());
    }
    ExoPrediction { base, horizon }
}

/// The delayed coupling term `β Σ_{j ∈ in(i)} a_{i,j} S · value_j(slot)`,
/// where `value_j(slot)` is entry `slot` of the bundle received from `j`
/// this step (index 0 is the base value) and a missing bundle contributes
/// zero.
fn coupling_sum(
    node: &NodeState,
    exo: &ExosystemModel,
    gains: &GainSet,
    graph: &DelayGraph,
    slot: usize,
) -> Result<DVector<f64>, SyncError> {
    let mut acc = DVector::<f64>::zeros(exo.q());
    for edge in graph.in_edges(node.id) {
        let Some(bundle) = node.received.get(&edge.sender) else {
            continue;
        };
        let value = bundle
            .value(slot)
            .ok_or_else(|| SyncError::HorizonInsufficient {
                sender: edge.sender,
                receiver: node.id,
                index: slot,
                available: bundle.horizon_values.len(),
            })?;
        if value.len() != exo.q() {
            return Err(SyncError::DimensionMismatch {
                context: "bundle value length",
                expected: exo.q(),
                got: value.len(),
            });
        }
        acc.axpy(edge.weight, &(&exo.s * value), 1.0);
    }
    Ok(acc.scale(gains.beta))
}

/// One observer update: `ξ_i(k+1) = Ŝ_i ξ_i(k) + β Σ_j a_{i,j} S ·
/// (base value received from j)`, with zero for absent bundles.
pub fn observer_step(
    node: &NodeState,
    exo: &ExosystemModel,
    gains: &GainSet,
    graph: &DelayGraph,
) -> Result<DVector<f64>, SyncError> {
    Ok(&node.s_hat * &node.xi + coupling_sum(node, exo, gains, graph, 0)?)
}

/// Predictor for out-edge `(i, target)`: `Ξ_{i,target}(k) ≈ ξ_i(k + τ)`
/// where `τ` is the edge delay.
///
/// Computed by unrolling the observer recursion `τ` levels forward, feeding
/// level `t` with index-`t` values of this step's received bundles; this is
/// the closed-form predictor evaluated without storing matrix powers.
pub fn agent_predictor(
    node: &NodeState,
    exo: &ExosystemModel,
    gains: &GainSet,
    graph: &DelayGraph,
    target: usize,
) -> Result<DVector<f64>, SyncError> {
    let tau = graph.delay(node.id, target).ok_or(SyncError::NoSuchEdge {
        sender: node.id,
        receiver: target,
    })?;
    let mut z = node.xi.clone();
    for t in 0..tau {
        z = &node.s_hat * z + coupling_sum(node, exo, gains, graph, t)?;
    }
    Ok(z)
}

/// Distributed predictor for out-edge `(i, target)` at tail index `s ≥ 1`:
/// `Ξ_{i,target,s}(k) ≈ ξ_i(k + τ + s)`, continued from `prev`, the value at
/// tail index `s − 1` (the base predictor for `s = 1`).
pub fn distributed_predictor(
    node: &NodeState,
    exo: &ExosystemModel,
    gains: &GainSet,
    graph: &DelayGraph,
    target: usize,
    s: usize,
    prev: &DVector<f64>,
) -> Result<DVector<f64>, SyncError> {
    debug_assert!(s >= 1, "tail indices start at 1");
    let tau = graph.delay(node.id, target).ok_or(SyncError::NoSuchEdge {
        sender: node.id,
        receiver: target,
    })?;
    Ok(&node.s_hat * prev + coupling_sum(node, exo, gains, graph, tau + s - 1)?)
}

/// State feedback `u = K_x x + K_ξ ξ`.
pub fn state_feedback(g: &AgentGains, x: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
    &g.k_x * x + &g.k_xi * xi
}

/// Output feedback `u = K_x x̂ + K_ξ ξ` using the Luenberger estimate.
pub fn output_feedback(g: &AgentGains, x_hat: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
    &g.k_x * x_hat + &g.k_xi * xi
}

/// Luenberger estimator update
/// `x̂(k+1) = A x̂ + B u + L (y − C x̂)`.
pub fn luenberger_step(
    agent: &AgentModel,
    g: &AgentGains,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, SyncError> {
    let l = g.l.as_ref().ok_or(SyncError::MissingLuenbergerGain)?;
    Ok(&agent.a * x_hat + &agent.b * u + l * (y - &agent.c * x_hat))
}

/// Regulated output error `e = C x + F υ` and state deviation
/// `x̃ = x − X υ` of one agent against the current reference.
pub fn regulated_error(
    agent: &AgentModel,
    gains: &GainSet,
    g: &AgentGains,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> RegulatedError {
    RegulatedError {
        e: &agent.c * x + &gains.f * v,
        x_tilde: x - &g.x * v,
    }
}
