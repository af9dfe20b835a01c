//! Scenario files: declarative TOML/JSON descriptions of a complete
//! multi-agent run (exosystem, agents, delay graph, gains, mode, horizon)
//! plus the validation pass that turns one into a ready
//! [`SimulationSetup`] and a [`CheckReport`] of every feasibility quantity
//! — topological order, per-edge prediction horizons, the exactness time,
//! the observer coupling condition, regulator residuals, and closed-loop
//! spectral radii.
//!
//! Matrices are nested arrays of floats (row-major). Gains can be given
//! explicitly (`k_x`, `l`) or as real pole targets (`k_x_poles`,
//! `observer_poles`) synthesized at load time. Node 0 is the exosystem;
//! `agents[i]` in the file is node `i + 1` in the graph.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DelayEdge, DelayGraph, TopologyMatrices};
use crate::linalg::{
    check_coupling_gain, observer_gain, place_poles, solve_regulator, spectral_radius, SCHUR_MARGIN,
};
use crate::netsim::{Mode, SimulationSetup};
use crate::sync::{AgentGains, AgentModel, ExosystemModel, GainSet};

/// Errors from loading or validating a scenario file. Every validation
/// failure names the offending field with its path in the file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Top-level scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Feedback mode: `state_feedback`, `output_feedback`, or
    /// `no_compensation`.
    pub mode: Mode,
    /// Number of simulation steps.
    pub horizon: usize,
    /// Reserved for randomized variants; recorded, not consumed here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Componentwise exactness threshold for prediction-error metrics
    /// (default 1e−9).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_threshold: Option<f64>,
    pub exosystem: ExosystemSection,
    pub gains: GainsSection,
    pub agents: Vec<AgentSection>,
    pub graph: GraphSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemSection {
    /// Reference dynamics `S` (q × q).
    pub s: Vec<Vec<f64>>,
    /// Initial reference state `υ(0)` (length q).
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    /// Observer coupling gain `β`.
    pub beta: f64,
    /// Output-comparison matrix `F` (p × q); the regulated output is
    /// `e_i = C_i x_i + F υ`.
    pub f: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    /// Plant matrices: `A` (n × n), `B` (n × m), `C` (p × n).
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Initial plant state `x(0)` (length n).
    pub initial: Vec<f64>,
    /// Initial observer state `ξ(0)` (length q, default zeros).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_initial: Option<Vec<f64>>,
    /// Initial Luenberger estimate `x̂(0)` (length n, default zeros).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_initial: Option<Vec<f64>>,
    /// Explicit feedback gain `K_x` (m × n); exactly one of `k_x` and
    /// `k_x_poles` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_x: Option<Vec<Vec<f64>>>,
    /// Real pole targets for `A + B K_x` (length n, single-input plants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_x_poles: Option<Vec<f64>>,
    /// Explicit Luenberger gain `L` (n × p); at most one of `l` and
    /// `observer_poles`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<Vec<f64>>>,
    /// Real pole targets for `A − L C` (length n, single-output plants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_poles: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub edges: Vec<EdgeSection>,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    pub from: usize,
    pub to: usize,
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub delay: usize,
}

impl ScenarioFile {
    /// Parses a scenario from text in the named format (`"toml"` or
    /// `"json"`).
    pub fn from_str(text: &str, format: &str, origin: &str) -> Result<Self, ScenarioError> {
        match format {
            "toml" => toml::from_str(text).map_err(|e| ScenarioError::Parse {
                path: origin.to_string(),
                message: e.to_string(),
            }),
            "json" => serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
                path: origin.to_string(),
                message: e.to_string(),
            }),
            other => Err(ScenarioError::Parse {
                path: origin.to_string(),
                message: format!("unsupported format {other:?} (expected toml or json)"),
            }),
        }
    }

    /// Loads a scenario file, dispatching on the `.toml` / `.json`
    /// extension.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let format = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        Self::from_str(&text, &format, &path.display().to_string())
    }

    /// Serializes back to TOML (round-trips matrices bit-exactly).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Serializes back to JSON.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Per-edge entry of a [`CheckReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub delay: usize,
    /// Upper index of the prediction horizon shipped on this edge; the
    /// bundle carries forecasts `0..=horizon_end`.
    pub horizon_end: usize,
}

/// Per-agent entry of a [`CheckReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    /// Graph node id (1-based; node 0 is the exosystem).
    pub node: usize,
    /// `‖X S − A X − B U‖_F` of the accepted regulator solution.
    pub regulator_residual_primary: f64,
    /// `‖C X + F‖_F` of the accepted regulator solution.
    pub regulator_residual_output: f64,
    /// `ρ(A + B K_x)`.
    pub state_loop_radius: f64,
    /// `ρ(A − L C)` when a Luenberger gain is present.
    pub observer_loop_radius: Option<f64>,
}

/// Everything `check` verifies about a scenario, in one serializable
/// report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub mode: Mode,
    pub horizon: usize,
    pub exact_threshold: f64,
    /// Topological order of all nodes (exosystem first).
    pub topological_order: Vec<usize>,
    pub edges: Vec<EdgeReport>,
    /// Steps until every delivered prediction is exact.
    pub t_max: usize,
    /// `ρ(S)` of the reference dynamics.
    pub exo_spectral_radius: f64,
    /// Left-hand side of the observer coupling condition
    /// `ρ(S) · ρ(I − β(H + D₀)) < 1`.
    pub coupling_lhs: f64,
    pub coupling_ok: bool,
    pub agents: Vec<AgentReport>,
}

impl CheckReport {
    /// Human-readable rendering (one line per fact).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "horizon: {} steps", self.horizon);
        let _ = writeln!(
            s,
            "topological order: {}",
            self.topological_order
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(" -> ")
        );
        for e in &self.edges {
            let _ = writeln!(
                s,
                "edge {} -> {}: weight {}, delay {}, prediction horizon 0..={}",
                e.from, e.to, e.weight, e.delay, e.horizon_end
            );
        }
        let _ = writeln!(s, "exactness time T_max: {}", self.t_max);
        let _ = writeln!(
            s,
            "exosystem spectral radius: {:.6}",
            self.exo_spectral_radius
        );
        let _ = writeln!(
            s,
            "coupling condition: lhs = {:.9} ({})",
            self.coupling_lhs,
            if self.coupling_ok {
                "holds"
            } else {
                "VIOLATED"
            }
        );
        for a in &self.agents {
            let _ = writeln!(
                s,
                "agent {}: regulator residuals {:.3e} / {:.3e}, state-loop radius {:.6}{}",
                a.node,
                a.regulator_residual_primary,
                a.regulator_residual_output,
                a.state_loop_radius,
                match a.observer_loop_radius {
                    Some(r) => format!(", observer-loop radius {r:.6}"),
                    None => String::new(),
                }
            );
        }
        s
    }
}

/// A scenario that passed every check, ready to run.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    pub setup: SimulationSetup,
    pub report: CheckReport,
}

fn parse_matrix(
    rows: &[Vec<f64>],
    path: &str,
    want: Option<(usize, usize)>,
) -> Result<DMatrix<f64>, ScenarioError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows == 0 || ncols == 0 {
        return Err(invalid(path, "matrix must be non-empty"));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(invalid(
            path,
            format!(
                "row {bad} has {} entries, expected {ncols}",
                rows[bad].len()
            ),
        ));
    }
    if let Some((r, c)) = want {
        if (nrows, ncols) != (r, c) {
            return Err(invalid(
                path,
                format!("expected a {r}x{c} matrix, got {nrows}x{ncols}"),
            ));
        }
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(path, "matrix entries must be finite"));
    }
    Ok(m)
}

fn parse_vector(values: &[f64], path: &str, want: usize) -> Result<DVector<f64>, ScenarioError> {
    if values.len() != want {
        return Err(invalid(
            path,
            format!("expected {want} entries, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(path, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

fn real_targets(
    poles: &[f64],
    path: &str,
    want: usize,
) -> Result<Vec<Complex<f64>>, ScenarioError> {
    if poles.len() != want {
        return Err(invalid(
            path,
            format!("expected {want} pole targets, got {}", poles.len()),
        ));
    }
    if poles.iter().any(|p| !p.is_finite()) {
        return Err(invalid(path, "pole targets must be finite"));
    }
    Ok(poles.iter().map(|&p| Complex::new(p, 0.0)).collect())
}

/// Validates a parsed scenario: graph structure, model shapes and PBH
/// tests, regulator solvability, gain synthesis, Schur checks, and the
/// observer coupling condition. Returns the runnable setup with the full
/// check report.
pub fn validate(file: &ScenarioFile) -> Result<ValidatedScenario, ScenarioError> {
    // Exosystem.
    let q = file.exosystem.s.len();
    let s = parse_matrix(&file.exosystem.s, "exosystem.s", Some((q.max(1), q.max(1))))?;
    let v0 = parse_vector(&file.exosystem.initial, "exosystem.initial", q)?;

    // Comparison matrix F fixes the output dimension p.
    let p = file.gains.f.len();
    let f = parse_matrix(&file.gains.f, "gains.f", Some((p.max(1), q)))?;
    if !(file.gains.beta.is_finite() && file.gains.beta > 0.0) {
        return Err(invalid("gains.beta", "must be finite and positive"));
    }

    if file.agents.is_empty() {
        return Err(invalid("agents", "at least one agent is required"));
    }
    if file.horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    let exact_threshold = file.exact_threshold.unwrap_or(1e-9);
    if !(exact_threshold.is_finite() && exact_threshold > 0.0) {
        return Err(invalid("exact_threshold", "must be finite and positive"));
    }

    // Graph over node 0 (exosystem) and nodes 1..=N (agents).
    let node_count = file.agents.len() + 1;
    let edges: Vec<DelayEdge> = file
        .graph
        .edges
        .iter()
        .map(|e| DelayEdge {
            sender: e.from,
            receiver: e.to,
            weight: e.weight,
            delay: e.delay,
        })
        .collect();
    let graph = DelayGraph::new(node_count, edges).map_err(|e| invalid("graph.edges", e))?;
    let topo = TopologyMatrices::from_graph(&graph).map_err(|e| invalid("graph.edges", e))?;

    // Every agent must hear from the exosystem along some path, or its
    // observer has no information to converge on.
    {
        let mut reachable = vec![false; node_count];
        reachable[0] = true;
        for &node in &topo.order {
            if !reachable[node] {
                continue;
            }
            for e in graph.out_edges(node) {
                reachable[e.receiver] = true;
            }
        }
        if let Some(node) = reachable.iter().position(|&r| !r) {
            return Err(invalid(
                "graph.edges",
                format!("node {node} is unreachable from the exosystem (node 0)"),
            ));
        }
    }

    let exo = ExosystemModel { s: s.clone() };
    let rho_s = spectral_radius(&s).map_err(|e| invalid("exosystem.s", e))?;

    // Coupling condition for the distributed observer.
    let hd0 = &topo.h + &topo.d0;
    let coupling =
        check_coupling_gain(&s, &hd0, file.gains.beta).map_err(|e| invalid("gains.beta", e))?;
    if !coupling.ok {
        return Err(invalid(
            "gains.beta",
            format!(
                "observer coupling condition violated: ρ(S)·ρ(I − β(H + D₀)) = {:.9} ≥ 1",
                coupling.lhs
            ),
        ));
    }

    // Agents.
    let mut agents = Vec::with_capacity(file.agents.len());
    let mut agent_gains = Vec::with_capacity(file.agents.len());
    let mut agent_reports = Vec::with_capacity(file.agents.len());
    let mut x0 = Vec::with_capacity(file.agents.len());
    let mut xi0 = Vec::with_capacity(file.agents.len());
    let mut x_hat0 = Vec::with_capacity(file.agents.len());

    for (idx, section) in file.agents.iter().enumerate() {
        let base = format!("agents[{idx}]");
        let n = section.a.len();
        let a = parse_matrix(&section.a, &format!("{base}.a"), Some((n.max(1), n.max(1))))?;
        let m = section.b.first().map_or(0, |r| r.len());
        let b = parse_matrix(&section.b, &format!("{base}.b"), Some((n, m.max(1))))?;
        let c = parse_matrix(&section.c, &format!("{base}.c"), Some((p, n)))?;
        let model = AgentModel { a, b, c };
        model.validate().map_err(|e| invalid(&base, e))?;

        let reg = solve_regulator(&model.a, &model.b, &model.c, &s, &f)
            .map_err(|e| invalid(format!("{base} regulator equations"), e))?;

        // Feedback gain: explicit or placed.
        let k_x = match (&section.k_x, &section.k_x_poles) {
            (Some(rows), None) => parse_matrix(rows, &format!("{base}.k_x"), Some((model.m(), n)))?,
            (None, Some(poles)) => {
                let targets = real_targets(poles, &format!("{base}.k_x_poles"), n)?;
                place_poles(&model.a, &model.b, &targets)
                    .map_err(|e| invalid(format!("{base}.k_x_poles"), e))?
            }
            (Some(_), Some(_)) => {
                return Err(invalid(&base, "specify exactly one of k_x and k_x_poles"))
            }
            (None, None) => return Err(invalid(&base, "one of k_x or k_x_poles is required")),
        };
        let state_cl = &model.a + &model.b * &k_x;
        let state_loop_radius = spectral_radius(&state_cl).map_err(|e| invalid(&base, e))?;
        if state_loop_radius >= 1.0 - SCHUR_MARGIN {
            return Err(invalid(
                format!("{base}.k_x"),
                format!("A + B K_x is not Schur (spectral radius {state_loop_radius:.9})"),
            ));
        }

        // Luenberger gain: explicit or placed; mandatory in output mode.
        let l = match (&section.l, &section.observer_poles) {
            (Some(rows), None) => Some(parse_matrix(rows, &format!("{base}.l"), Some((n, p)))?),
            (None, Some(poles)) => {
                let targets = real_targets(poles, &format!("{base}.observer_poles"), n)?;
                Some(
                    observer_gain(&model.a, &model.c, &targets)
                        .map_err(|e| invalid(format!("{base}.observer_poles"), e))?,
                )
            }
            (Some(_), Some(_)) => {
                return Err(invalid(
                    &base,
                    "specify at most one of l and observer_poles",
                ))
            }
            (None, None) => None,
        };
        if file.mode == Mode::OutputFeedback && l.is_none() {
            return Err(invalid(
                &base,
                "output_feedback mode requires l or observer_poles",
            ));
        }
        let observer_loop_radius = match &l {
            Some(l) => {
                let obs_cl = &model.a - l * &model.c;
                let radius = spectral_radius(&obs_cl).map_err(|e| invalid(&base, e))?;
                if radius >= 1.0 - SCHUR_MARGIN {
                    return Err(invalid(
                        format!("{base}.l"),
                        format!("A − L C is not Schur (spectral radius {radius:.9})"),
                    ));
                }
                Some(radius)
            }
            None => None,
        };

        x0.push(parse_vector(
            &section.initial,
            &format!("{base}.initial"),
            n,
        )?);
        xi0.push(match &section.observer_initial {
            Some(v) => parse_vector(v, &format!("{base}.observer_initial"), q)?,
            None => DVector::zeros(q),
        });
        x_hat0.push(match &section.estimate_initial {
            Some(v) => parse_vector(v, &format!("{base}.estimate_initial"), n)?,
            None => DVector::zeros(n),
        });

        agent_reports.push(AgentReport {
            node: idx + 1,
            regulator_residual_primary: reg.residual_primary,
            regulator_residual_output: reg.residual_output,
            state_loop_radius,
            observer_loop_radius,
        });
        agent_gains.push(AgentGains::new(k_x, l, &reg));
        agents.push(model);
    }

    let edges_report = graph
        .edges()
        .iter()
        .map(|e| EdgeReport {
            from: e.sender,
            to: e.receiver,
            weight: e.weight,
            delay: e.delay,
            horizon_end: topo.horizons[&(e.sender, e.receiver)],
        })
        .collect();
    let report = CheckReport {
        mode: file.mode,
        horizon: file.horizon,
        exact_threshold,
        topological_order: topo.order.clone(),
        edges: edges_report,
        t_max: topo.t_max,
        exo_spectral_radius: rho_s,
        coupling_lhs: coupling.lhs,
        coupling_ok: coupling.ok,
        agents: agent_reports,
    };
    let setup = SimulationSetup {
        graph,
        topo,
        exo,
        agents,
        gains: GainSet {
            agents: agent_gains,
            f,
            beta: file.gains.beta,
        },
        mode: file.mode,
        horizon: file.horizon,
        v0,
        x0,
        xi0,
        x_hat0,
        exact_threshold,
    };
    Ok(ValidatedScenario { setup, report })
}

/// Convenience: load and validate in one call.
pub fn load_validated(path: &Path) -> Result<ValidatedScenario, ScenarioError> {
    validate(&ScenarioFile::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// A minimal two-node scenario: scalar marginally stable reference,
    /// one double-integrator-like agent fed over a delay-3 link.
    fn toy_toml() -> String {
        r#"
mode = "state_feedback"
horizon = 40

[exosystem]
s = [[1.0]]
initial = [2.0]

[gains]
beta = 0.5
f = [[-1.0]]

[[agents]]
a = [[0.0, 1.0], [0.0, 0.0]]
b = [[0.0], [1.0]]
c = [[1.0, 0.0]]
initial = [0.0, 0.0]
k_x_poles = [0.2, 0.3]
observer_poles = [0.1, 0.15]

[graph]
edges = [{ from = 0, to = 1, delay = 3 }]
"#
        .to_string()
    }

    #[test]
    fn toml_and_json_parse_to_the_same_scenario() {
        let from_toml = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();
        let json = from_toml.to_json_string();
        let from_json = ScenarioFile::from_str(&json, "json", "toy").unwrap();
        assert_eq!(from_toml, from_json);
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let file = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();
        let back = ScenarioFile::from_str(&file.to_toml_string(), "toml", "toy").unwrap();
        assert_eq!(file, back);
    }

    #[test]
    fn validates_and_reports_the_toy_scenario() {
        let file = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();
        let v = validate(&file).unwrap();
        assert_eq!(v.report.topological_order, vec![0, 1]);
        assert_eq!(v.report.t_max, 3);
        assert_eq!(v.report.edges[0].horizon_end, 0);
        // β = 0.5, single edge of weight 1: ρ(I − β·1) = 0.5, ρ(S) = 1.
        assert_relative_eq!(v.report.coupling_lhs, 0.5, epsilon = 1e-12);
        let agent = &v.report.agents[0];
        assert!(agent.regulator_residual_primary <= 1e-9);
        assert!(agent.regulator_residual_output <= 1e-9);
        assert_relative_eq!(agent.state_loop_radius, 0.3, epsilon = 1e-6);
        assert_relative_eq!(agent.observer_loop_radius.unwrap(), 0.15, epsilon = 1e-6);
        // Default weight applied, default initial observers zero.
        assert_eq!(v.setup.graph.edges()[0].weight, 1.0);
        assert_eq!(v.setup.xi0[0], DVector::zeros(1));
        let text = v.report.to_text();
        assert!(text.contains("coupling condition: lhs = 0.500000000 (holds)"));
    }

    #[test]
    fn rejects_unknown_fields_with_a_parse_error() {
        let text = toy_toml().replace("horizon = 40", "horizon = 40\nbogus = 1");
        let err = ScenarioFile::from_str(&text, "toml", "toy").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { .. }));
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn field_paths_name_the_offending_agent() {
        let file = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();

        // Both gain forms at once.
        let mut both = file.clone();
        both.agents[0].k_x = Some(vec![vec![0.0, 0.0]]);
        let err = validate(&both).unwrap_err();
        assert_eq!(
            err.to_string(),
            "agents[0]: specify exactly one of k_x and k_x_poles"
        );

        // Wrong initial-state length.
        let mut short = file.clone();
        short.agents[0].initial = vec![0.0];
        let err = validate(&short).unwrap_err();
        assert!(err.to_string().starts_with("agents[0].initial:"));

        // Destabilizing explicit gain: A + B·[1, 2] has spectrum 1 ± √2.
        let mut unstable = file.clone();
        unstable.agents[0].k_x_poles = None;
        unstable.agents[0].k_x = Some(vec![vec![1.0, 2.0]]);
        let err = validate(&unstable).unwrap_err();
        assert!(err.to_string().starts_with("agents[0].k_x:"));
        assert!(err.to_string().contains("not Schur"));
    }

    #[test]
    fn rejects_coupling_violation_and_unreachable_nodes() {
        let file = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();

        let mut hot = file.clone();
        hot.gains.beta = 2.0; // ρ(I − 2) = 1 ⇒ lhs = 1, violated.
        let err = validate(&hot).unwrap_err();
        assert!(err.to_string().starts_with("gains.beta:"));

        let mut cut = file.clone();
        cut.graph.edges.clear();
        let err = validate(&cut).unwrap_err();
        assert!(err
            .to_string()
            .contains("node 1 is unreachable from the exosystem"));
    }

    #[test]
    fn output_mode_requires_an_observer_gain() {
        let mut file = ScenarioFile::from_str(&toy_toml(), "toml", "toy").unwrap();
        file.mode = Mode::OutputFeedback;
        file.agents[0].observer_poles = None;
        let err = validate(&file).unwrap_err();
        assert_eq!(
            err.to_string(),
            "agents[0]: output_feedback mode requires l or observer_poles"
        );
    }
}
