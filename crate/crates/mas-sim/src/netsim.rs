//! Delayed channels and the lock-step simulation kernel.
//!
//! Every edge of the communication graph is a FIFO channel with a fixed
//! integer delay: a bundle sent at step `k` becomes visible to the receiver
//! at step `k + delay`, never earlier (causality) and never reordered. The
//! kernel advances the whole network one step at a time:
//!
//! 1. deliver every bundle whose arrival step is `k`;
//! 2. every node sends on each out-edge (predicted bundles, or raw states
//!    in the uncompensated mode);
//! 3. every agent computes its control, records its outputs and errors,
//!    and all states advance simultaneously.
//!
//! The run is fully deterministic: identical setups produce bit-identical
//! traces.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DelayEdge, DelayGraph, TopologyMatrices};
use crate::sync::{
    agent_predictor, distributed_predictor, exo_predictor, exosystem_step, luenberger_step,
    observer_step, output_feedback, regulated_error, state_feedback, AgentModel, ExosystemModel,
    GainSet, NodeState, SyncError,
};

/// Errors raised by channels and the simulation kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// A node attempted two sends on one edge in the same step.
    #[error("duplicate send on edge ({sender}, {receiver}) at step {step}")]
    DuplicateSend {
        sender: usize,
        receiver: usize,
        step: usize,
    },
    /// A per-node operation failed (bundle too short, missing gain, …).
    #[error(transparent)]
    Sync(#[from] SyncError),
}

/// Feedback mode of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `u = K_x x + K_ξ ξ` with full state measurement.
    StateFeedback,
    /// `u = K_x x̂ + K_ξ ξ` with a Luenberger estimate from `y`.
    OutputFeedback,
    /// Degraded baseline: nodes forward raw current states instead of
    /// predictions, so every delay acts uncompensated.
    NoCompensation,
}

impl Mode {
    /// Stable textual name (matches scenario files and CLI flags).
    pub fn name(self) -> &'static str {
        match self {
            Mode::StateFeedback => "state_feedback",
            Mode::OutputFeedback => "output_feedback",
            Mode::NoCompensation => "no_compensation",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state_feedback" => Ok(Mode::StateFeedback),
            "output_feedback" => Ok(Mode::OutputFeedback),
            "no_compensation" => Ok(Mode::NoCompensation),
            other => Err(format!(
                "unknown mode {other:?}; expected state_feedback, output_feedback, \
                 or no_compensation"
            )),
        }
    }
}

/// One message in flight: the predicted value at arrival time plus the
/// predicted tail the receiver needs for its own onward predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBundle {
    /// Transmitting node.
    pub sender: usize,
    /// Step at which the bundle was sent.
    pub send_step: usize,
    /// Predicted value for the arrival step (index 0).
    pub base: DVector<f64>,
    /// Predicted values for arrival step + 1, + 2, …, in order.
    pub horizon_values: Vec<DVector<f64>>,
}

impl MessageBundle {
    /// Value at bundle index `idx`: 0 is the base, `s ≥ 1` is the tail.
    pub fn value(&self, idx: usize) -> Option<&DVector<f64>> {
        if idx == 0 {
            Some(&self.base)
        } else {
            self.horizon_values.get(idx - 1)
        }
    }
}

/// One delayed FIFO channel.
#[derive(Debug, Clone)]
pub struct ChannelState {
    /// Transmitting node.
    pub sender: usize,
    /// Receiving node.
    pub receiver: usize,
    /// Fixed transmission delay in steps (≥ 1).
    pub delay: usize,
    queue: VecDeque<MessageBundle>,
    delivered: usize,
    sent: usize,
}

impl ChannelState {
    /// An empty channel for `edge`.
    pub fn new(edge: &DelayEdge) -> Self {
        Self {
            sender: edge.sender,
            receiver: edge.receiver,
            delay: edge.delay,
            queue: VecDeque::new(),
            delivered: 0,
            sent: 0,
        }
    }

    /// Enqueues a bundle sent at step `k`; it will arrive at `k + delay`.
    /// At most one bundle per step may enter the channel.
    pub fn send(&mut self, bundle: MessageBundle, k: usize) -> Result<(), SimError> {
        assert_eq!(bundle.send_step, k, "bundle stamped with a foreign step");
        if self.queue.back().is_some_and(|b| b.send_step >= k) {
            return Err(SimError::DuplicateSend {
                sender: self.sender,
                receiver: self.receiver,
                step: k,
            });
        }
        self.queue.push_back(bundle);
        self.sent += 1;
        Ok(())
    }

    /// Removes and returns the bundle arriving exactly at step `k`, if any.
    pub fn receive(&mut self, k: usize) -> Option<MessageBundle> {
        let front_arrival = self.queue.front().map(|b| b.send_step + self.delay)?;
        debug_assert!(front_arrival >= k, "channel skipped a delivery");
        if front_arrival == k {
            self.delivered += 1;
            self.queue.pop_front()
        } else {
            None
        }
    }

    /// Bundles currently in flight.
    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    /// Bundles delivered so far.
    pub fn delivered(&self) -> usize {
        self.delivered
    }

    /// Bundles accepted so far.
    pub fn sent(&self) -> usize {
        self.sent
    }
}

/// Everything the kernel needs for one run. Produced from a scenario file
/// by [`crate::scenario::ValidatedScenario`], or assembled directly.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub graph: DelayGraph,
    pub topo: TopologyMatrices,
    pub exo: ExosystemModel,
    /// Agent models, index 0 ↔ node 1.
    pub agents: Vec<AgentModel>,
    pub gains: GainSet,
    pub mode: Mode,
    /// Number of steps; the trace records steps `0..=horizon`.
    pub horizon: usize,
    /// Reference initial state `υ(0)`.
    pub v0: DVector<f64>,
    /// Plant initial states `x_i(0)`.
    pub x0: Vec<DVector<f64>>,
    /// Observer initial states `ξ_i(0)`.
    pub xi0: Vec<DVector<f64>>,
    /// Luenberger initial estimates `x̂_i(0)`.
    pub x_hat0: Vec<DVector<f64>>,
    /// Componentwise threshold below which a delivered prediction counts
    /// as exact (metrics only, default 1e−9).
    pub exact_threshold: f64,
}

/// Per-agent record at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    /// Plant state `x_i(k)`.
    pub x: DVector<f64>,
    /// Output `y_i(k) = C_i x_i(k)`.
    pub y: DVector<f64>,
    /// Control `u_i(k)`.
    pub u: DVector<f64>,
    /// Regulated output `e_i(k) = C_i x_i(k) + F υ(k)`.
    pub e: DVector<f64>,
    /// Observer state `ξ_i(k)`.
    pub xi: DVector<f64>,
    /// Luenberger estimate (output-feedback runs only).
    pub x_hat: Option<DVector<f64>>,
    /// `‖ξ_i(k) − υ(k)‖₂`.
    pub observer_error_norm: f64,
    /// Worst delivered-prediction error this step: the max over in-edges of
    /// `‖base − current sender state‖∞` (zero vectors stand in for absent
    /// bundles).
    pub prediction_error_norm: f64,
}

/// Network-wide record at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Reference state `υ(k)`.
    pub exo: DVector<f64>,
    /// Reference output `−F υ(k)` that all agent outputs converge to.
    pub exo_output: DVector<f64>,
    /// Agent records, index 0 ↔ node 1.
    pub agents: Vec<AgentRecord>,
}

/// Complete recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub mode: Mode,
    pub horizon: usize,
    pub t_max: usize,
    pub exact_threshold: f64,
    /// One record per step `0..=horizon`.
    pub steps: Vec<StepRecord>,
    /// Every bundle sent, per edge, indexed by send step.
    pub bundles: BTreeMap<(usize, usize), Vec<MessageBundle>>,
}

/// Runs the lock-step simulation. Deterministic: identical setups produce
/// bit-identical traces.
pub fn run_simulation(setup: &SimulationSetup) -> Result<SimTrace, SimError> {
    let g = &setup.graph;
    let n_nodes = g.node_count();
    let mut channels: BTreeMap<(usize, usize), ChannelState> = g
        .edges()
        .iter()
        .map(|e| ((e.sender, e.receiver), ChannelState::new(e)))
        .collect();
    let mut nodes: Vec<NodeState> = (1..n_nodes)
        .map(|i| {
            NodeState::new(
                i,
                setup.xi0[i - 1].clone(),
                setup.x0[i - 1].clone(),
                setup.x_hat0[i - 1].clone(),
                &setup.exo,
                &setup.gains,
                g,
            )
        })
        .collect();
    let mut v = setup.v0.clone();
    let mut trace = SimTrace {
        mode: setup.mode,
        horizon: setup.horizon,
        t_max: setup.topo.t_max,
        exact_threshold: setup.exact_threshold,
        steps: Vec::with_capacity(setup.horizon + 1),
        bundles: g
            .edges()
            .iter()
            .map(|e| {
                (
                    (e.sender, e.receiver),
                    Vec::with_capacity(setup.horizon + 1),
                )
            })
            .collect(),
    };

    for k in 0..=setup.horizon {
        // (1) Deliveries: each node sees exactly the bundles arriving now.
        for node in nodes.iter_mut() {
            node.received.clear();
        }
        for ((sender, receiver), channel) in channels.iter_mut() {
            if let Some(bundle) = channel.receive(k) {
                nodes[receiver - 1].received.insert(*sender, bundle);
            }
        }

        // (2) Sends, reference generator first, then agents in topological
        // order. Predictors read only this step's deliveries and the
        // sender's own pre-update state, so the order has no effect on the
        // values — it mirrors the information flow.
        for e in g.out_edges(0) {
            let bundle = match setup.mode {
                Mode::NoCompensation => MessageBundle {
                    sender: 0,
                    send_step: k,
                    base: v.clone(),
                    horizon_values: Vec::new(),
                },
                _ => {
                    let w = setup.topo.horizons[&(0, e.receiver)];
                    let pred = exo_predictor(&setup.exo, &v, e.delay, w);
                    MessageBundle {
                        sender: 0,
                        send_step: k,
                        base: pred.base,
                        horizon_values: pred.horizon,
                    }
                }
            };
            trace
                .bundles
                .get_mut(&(0, e.receiver))
                .expect("edge recorded at setup")
                .push(bundle.clone());
            channels
                .get_mut(&(0, e.receiver))
                .expect("channel exists for edge")
                .send(bundle, k)?;
        }
        for &i in setup.topo.order.iter().filter(|&&i| i != 0) {
            let node = &nodes[i - 1];
            for e in g.out_edges(i) {
                let bundle = match setup.mode {
                    Mode::NoCompensation => MessageBundle {
                        sender: i,
                        send_step: k,
                        base: node.xi.clone(),
                        horizon_values: Vec::new(),
                    },
                    _ => {
                        let base = agent_predictor(node, &setup.exo, &setup.gains, g, e.receiver)?;
                        let w = setup.topo.horizons[&(i, e.receiver)];
                        let mut horizon_values = Vec::with_capacity(w);
                        let mut prev = base.clone();
                        for s in 1..=w {
                            prev = distributed_predictor(
                                node,
                                &setup.exo,
                                &setup.gains,
                                g,
                                e.receiver,
                                s,
                                &prev,
                            )?;
                            horizon_values.push(prev.clone());
                        }
                        MessageBundle {
                            sender: i,
                            send_step: k,
                            base,
                            horizon_values,
                        }
                    }
                };
                trace
                    .bundles
                    .get_mut(&(i, e.receiver))
                    .expect("edge recorded at setup")
                    .push(bundle.clone());
                channels
                    .get_mut(&(i, e.receiver))
                    .expect("channel exists for edge")
                    .send(bundle, k)?;
            }
        }

        // (3) Controls, errors, and next states from pre-update values.
        let truths: Vec<DVector<f64>> = nodes.iter().map(|n| n.xi.clone()).collect();
        let mut agent_records = Vec::with_capacity(n_nodes - 1);
        let mut next_states = Vec::with_capacity(n_nodes - 1);
        for i in 1..n_nodes {
            let node = &nodes[i - 1];
            let agent = &setup.agents[i - 1];
            let gi = &setup.gains.agents[i - 1];
            let y = &agent.c * &node.x;
            let u = match setup.mode {
                Mode::OutputFeedback => output_feedback(gi, &node.x_hat, &node.xi),
                Mode::StateFeedback | Mode::NoCompensation => state_feedback(gi, &node.x, &node.xi),
            };
            let reg = regulated_error(agent, &setup.gains, gi, &node.x, &v);
            let observer_error_norm = (&node.xi - &v).norm();
            let mut prediction_error_norm = 0.0_f64;
            for e in g.in_edges(i) {
                let truth = if e.sender == 0 {
                    &v
                } else {
                    &truths[e.sender - 1]
                };
                let err = match node.received.get(&e.sender) {
                    Some(b) => (&b.base - truth).amax(),
                    None => truth.amax(),
                };
                prediction_error_norm = prediction_error_norm.max(err);
            }
            let xi_next = observer_step(node, &setup.exo, &setup.gains, g)?;
            let x_next = &agent.a * &node.x + &agent.b * &u;
            let x_hat_next = if setup.mode == Mode::OutputFeedback {
                luenberger_step(agent, gi, &node.x_hat, &u, &y)?
            } else {
                node.x_hat.clone()
            };
            agent_records.push(AgentRecord {
                x: node.x.clone(),
                y,
                u,
                e: reg.e,
                xi: node.xi.clone(),
                x_hat: (setup.mode == Mode::OutputFeedback).then(|| node.x_hat.clone()),
                observer_error_norm,
                prediction_error_norm,
            });
            next_states.push((xi_next, x_next, x_hat_next));
        }
        trace.steps.push(StepRecord {
            step: k,
            exo: v.clone(),
            exo_output: -(&setup.gains.f * &v),
            agents: agent_records,
        });

        // (4) Simultaneous state advance.
        for (node, (xi_n, x_n, x_hat_n)) in nodes.iter_mut().zip(next_states) {
            node.xi = xi_n;
            node.x = x_n;
            node.x_hat = x_hat_n;
        }
        v = exosystem_step(&setup.exo, &v);
    }
    Ok(trace)
}

/// Headline numbers extracted from a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub mode: String,
    pub horizon: usize,
    /// The exactness time of the topology.
    pub t_max: usize,
    /// Componentwise exactness threshold used below.
    pub exact_threshold: f64,
    /// First step from which every delivered prediction error stays at or
    /// below the threshold for the rest of the run (`None` if never).
    pub first_exact_step: Option<usize>,
    /// Largest per-agent observer error norm over steps `0..=t_max`.
    pub observer_error_sup_pre_t_max: f64,
    /// `‖e_i(horizon)‖₂` per agent.
    pub final_regulated_norms: Vec<f64>,
    /// Largest `‖y_i(horizon) − y_j(horizon)‖₂` over agent pairs.
    pub final_max_pairwise_output_gap: f64,
}

/// Computes [`SimMetrics`] from a recorded trace.
pub fn compute_metrics(trace: &SimTrace) -> SimMetrics {
    let threshold = trace.exact_threshold;
    let mut first_exact_step = None;
    for rec in trace.steps.iter().rev() {
        let worst = rec
            .agents
            .iter()
            .map(|a| a.prediction_error_norm)
            .fold(0.0, f64::max);
        if worst <= threshold {
            first_exact_step = Some(rec.step);
        } else {
            break;
        }
    }
    let observer_error_sup_pre_t_max = trace
        .steps
        .iter()
        .take_while(|r| r.step <= trace.t_max)
        .flat_map(|r| r.agents.iter().map(|a| a.observer_error_norm))
        .fold(0.0, f64::max);
    let last = trace.steps.last().expect("trace has at least step 0");
    let final_regulated_norms: Vec<f64> = last.agents.iter().map(|a| a.e.norm()).collect();
    let mut final_max_pairwise_output_gap = 0.0_f64;
    for i in 0..last.agents.len() {
        for j in (i + 1)..last.agents.len() {
            final_max_pairwise_output_gap =
                final_max_pairwise_output_gap.max((&last.agents[i].y - &last.agents[j].y).norm());
        }
    }
    SimMetrics {
        mode: trace.mode.name().to_string(),
        horizon: trace.horizon,
        t_max: trace.t_max,
        exact_threshold: threshold,
        first_exact_step,
        observer_error_sup_pre_t_max,
        final_regulated_norms,
        final_max_pairwise_output_gap,
    }
}

/// One flattened trace row (one node at one step), the unit of both the CSV
/// and JSON trace exports. Node 0 is the reference generator: its `state`
/// is `υ(k)`, its `output` is the reference output `−F υ(k)`, and the
/// remaining columns are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub node: usize,
    pub state: Vec<f64>,
    pub output: Vec<f64>,
    pub control: Vec<f64>,
    pub regulated: Vec<f64>,
    pub observer_error_norm: Option<f64>,
    pub prediction_error_norm: Option<f64>,
}

impl SimTrace {
    /// Flattens the trace into rows: per step, node 0 first, then agents.
    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::with_capacity(self.steps.len() * (1 + self.agent_count()));
        for rec in &self.steps {
            rows.push(TraceRow {
                step: rec.step,
                node: 0,
                state: rec.exo.iter().cloned().collect(),
                output: rec.exo_output.iter().cloned().collect(),
                control: Vec::new(),
                regulated: Vec::new(),
                observer_error_norm: None,
                prediction_error_norm: None,
            });
            for (idx, a) in rec.agents.iter().enumerate() {
                rows.push(TraceRow {
                    step: rec.step,
                    node: idx + 1,
                    state: a.x.iter().cloned().collect(),
                    output: a.y.iter().cloned().collect(),
                    control: a.u.iter().cloned().collect(),
                    regulated: a.e.iter().cloned().collect(),
                    observer_error_norm: Some(a.observer_error_norm),
                    prediction_error_norm: Some(a.prediction_error_norm),
                });
            }
        }
        rows
    }

    /// Number of agents (nodes minus the reference generator).
    pub fn agent_count(&self) -> usize {
        self.steps.first().map_or(0, |r| r.agents.len())
    }
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the trace as CSV: one row per node per step with a mandatory
/// header; floats carry 17 significant digits. Columns whose dimension
/// varies across nodes are padded with empty cells.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: &mut W) -> io::Result<()> {
    let rows = trace.rows();
    let width = |f: fn(&TraceRow) -> usize| rows.iter().map(f).max().unwrap_or(0);
    let (sw, ow, cw, rw) = (
        width(|r| r.state.len()),
        width(|r| r.output.len()),
        width(|r| r.control.len()),
        width(|r| r.regulated.len()),
    );
    let mut header = vec!["step".to_string(), "node".to_string()];
    for (prefix, n) in [
        ("state", sw),
        ("output", ow),
        ("control", cw),
        ("regulated", rw),
    ] {
        for i in 0..n {
            header.push(format!("{prefix}_{i}"));
        }
    }
    header.push("observer_error_norm".to_string());
    header.push("prediction_error_norm".to_string());
    writeln!(out, "{}", header.join(","))?;

    for row in &rows {
        let mut cells = vec![row.step.to_string(), row.node.to_string()];
        for (values, n) in [
            (&row.state, sw),
            (&row.output, ow),
            (&row.control, cw),
            (&row.regulated, rw),
        ] {
            for i in 0..n {
                cells.push(values.get(i).map(|&x| fmt17(x)).unwrap_or_default());
            }
        }
        for opt in [row.observer_error_norm, row.prediction_error_norm] {
            cells.push(opt.map(fmt17).unwrap_or_default());
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(send_step: usize) -> MessageBundle {
        MessageBundle {
            sender: 0,
            send_step,
            base: DVector::from_row_slice(&[send_step as f64]),
            horizon_values: vec![],
        }
    }

    fn channel(delay: usize) -> ChannelState {
        ChannelState::new(&DelayEdge {
            sender: 0,
            receiver: 1,
            weight: 1.0,
            delay,
        })
    }

    #[test]
    fn channel_delivers_exactly_delay_steps_later() {
        let mut ch = channel(3);
        ch.send(bundle(0), 0).unwrap();
        ch.send(bundle(1), 1).unwrap();
        assert_eq!(ch.receive(1), None);
        assert_eq!(ch.receive(2), None);
        let got = ch.receive(3).unwrap();
        assert_eq!(got.send_step, 0);
        let got = ch.receive(4).unwrap();
        assert_eq!(got.send_step, 1);
        assert_eq!(ch.receive(5), None);
        assert_eq!(ch.sent(), 2);
        assert_eq!(ch.delivered(), 2);
        assert_eq!(ch.in_flight(), 0);
    }

    #[test]
    fn channel_rejects_duplicate_sends() {
        let mut ch = channel(2);
        ch.send(bundle(4), 4).unwrap();
        let err = ch.send(bundle(4), 4).unwrap_err();
        assert_eq!(
            err,
            SimError::DuplicateSend {
                sender: 0,
                receiver: 1,
                step: 4
            }
        );
    }

    #[test]
    fn channel_keeps_fifo_order_under_gaps() {
        let mut ch = channel(2);
        ch.send(bundle(0), 0).unwrap();
        // No send at step 1.
        ch.send(bundle(2), 2).unwrap();
        assert_eq!(ch.receive(2).unwrap().send_step, 0);
        assert_eq!(ch.receive(3), None);
        assert_eq!(ch.receive(4).unwrap().send_step, 2);
    }
}
