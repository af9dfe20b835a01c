//! Acceptance gate: one test per criterion, each printing a single
//! `criterion N: PASS (…)` line (visible with `--nocapture`).
//!
//! Criterion 1 checks the kernel against an independent centralized oracle
//! implemented here from the closed-form prediction formulas — explicit
//! power sums over precomputed matrix-power tables, with no message
//! queues, no incremental chains, and no kernel code on the reference
//! path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mas_sim::graph::{DelayEdge, DelayGraph};
use mas_sim::koopman::{lift, Dictionary};
use mas_sim::linalg::{check_coupling_gain, solve_regulator};
use mas_sim::netsim::{compute_metrics, run_simulation, write_trace_csv, Mode, SimTrace};
use mas_sim::scenario::{validate, ScenarioFile, ValidatedScenario};
use mas_sim::sir::{fit_model, run_sir_comparison, SirComparison, SirParams};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn benchmark_scenario() -> ScenarioFile {
    ScenarioFile::load(&scenario_path("four_agent.toml")).expect("shipped scenario parses")
}

fn benchmark_sir_params() -> SirParams {
    #[derive(serde::Deserialize)]
    struct SirFile {
        sir: SirParams,
    }
    let text = std::fs::read_to_string(scenario_path("two_region_sir.toml"))
        .expect("shipped scenario readable");
    let file: SirFile = toml::from_str(&text).expect("shipped scenario parses");
    file.sir
}

/// The epidemic comparison is shared by criteria 6 and 7 (and costs a few
/// seconds), so it is computed once.
fn shared_sir_comparison() -> &'static SirComparison {
    static CMP: OnceLock<SirComparison> = OnceLock::new();
    CMP.get_or_init(|| run_sir_comparison(&benchmark_sir_params()).expect("comparison runs"))
}

// ---------------------------------------------------------------------------
// Independent centralized oracle.
//
// Discrete dynamics being verified: each agent's reference observer obeys
//
//   ξ_i(k+1) = Ŝ_i ξ_i(k) + β Σ_j a_{i,j} S · V_j(k, 0)
//
// where V_j(k, t) is slot t of the message delivered at step k on edge
// (j, i) — the sender's forecast for step k + t — and absent messages are
// zero. The slot values of the bundle agent i sends at step k are the
// closed-form forward solution of the same recursion driven by i's
// currently delivered slots:
//
//   slot h:  Ŝ_i^h ξ_i(k) + β Σ_j a_{i,j} Σ_{t<h} Ŝ_i^{h−1−t} S · V_j(k, t)
//
// evaluated directly from power tables, one independent sum per slot.
// The reference node's forecasts are exact powers: slot t of its bundle
// sent at u on an edge of delay τ is S^{u+τ+t} υ(0).
// ---------------------------------------------------------------------------

struct Oracle {
    /// υ(k) for k = 0..=extended horizon.
    v: Vec<DVector<f64>>,
    /// ξ_i(k) per agent (index 0 ↔ node 1), k = 0..=horizon.
    xi: Vec<Vec<DVector<f64>>>,
    /// Bundle slot values per edge and send step: `bundles[&(i, r)][k][t]`
    /// is the forecast for step k + delay + t.
    bundles: BTreeMap<(usize, usize), Vec<Vec<DVector<f64>>>>,
}

fn mat_pows(m: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let mut pows = Vec::with_capacity(count + 1);
    pows.push(DMatrix::identity(m.nrows(), m.ncols()));
    for _ in 0..count {
        let next = pows.last().unwrap() * m;
        pows.push(next);
    }
    pows
}

fn oracle_run(v: &ValidatedScenario, horizon: usize) -> Oracle {
    let setup = &v.setup;
    let graph = &setup.graph;
    let s = &setup.exo.s;
    let q = setup.v0.len();
    let beta = setup.gains.beta;
    let order = &setup.topo.order;
    let horizons = &setup.topo.horizons;

    // Deepest slot any bundle carries, to size the υ table.
    let max_reach = graph
        .edges()
        .iter()
        .map(|e| e.delay + horizons[&(e.sender, e.receiver)])
        .max()
        .unwrap_or(0);
    let s_pows = mat_pows(s, horizon + max_reach + 1);
    let v_table: Vec<DVector<f64>> = s_pows.iter().map(|p| p * &setup.v0).collect();

    // Per-agent leakage matrices Ŝ_i = (1 − β Σ_j a_{i,j}) S and their
    // powers up to the longest chain any of its out-edges needs.
    let n_agents = setup.agents.len();
    let mut s_hat_pows: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n_agents);
    for node in 1..=n_agents {
        let in_weight: f64 = graph.in_edges(node).map(|e| e.weight).sum();
        let s_hat = s * (1.0 - beta * in_weight);
        let chain = graph
            .out_edges(node)
            .map(|e| e.delay + horizons[&(e.sender, e.receiver)])
            .max()
            .unwrap_or(1)
            .max(1);
        s_hat_pows.push(mat_pows(&s_hat, chain));
    }

    let mut xi: Vec<Vec<DVector<f64>>> = setup.xi0.iter().map(|x| vec![x.clone()]).collect();
    let mut bundles: BTreeMap<(usize, usize), Vec<Vec<DVector<f64>>>> = graph
        .edges()
        .iter()
        .map(|e| ((e.sender, e.receiver), Vec::new()))
        .collect();

    // Slot t of the message delivered to `node` at step k on the in-edge
    // from `sender` (zero before the first arrival).
    let delivered = |bundles: &BTreeMap<(usize, usize), Vec<Vec<DVector<f64>>>>,
                     sender: usize,
                     node: usize,
                     k: usize,
                     t: usize|
     -> DVector<f64> {
        let delay = graph.delay(sender, node).expect("edge exists");
        if k < delay {
            DVector::zeros(q)
        } else {
            bundles[&(sender, node)][k - delay][t].clone()
        }
    };

    for k in 0..=horizon {
        // Reference bundles sent at k: exact powers of S.
        for edge in graph.out_edges(0) {
            let h_end = horizons[&(0, edge.receiver)];
            let slots: Vec<DVector<f64>> = (0..=h_end)
                .map(|t| v_table[k + edge.delay + t].clone())
                .collect();
            bundles.get_mut(&(0, edge.receiver)).unwrap().push(slots);
        }
        // Agent bundles in topological order (their inputs were all sent
        // at strictly earlier steps, so ordering is only for tidiness).
        for &node in order.iter().filter(|&&n| n != 0) {
            let idx = node - 1;
            let xi_k = xi[idx][k].clone();
            let pows = &s_hat_pows[idx];
            let mut outgoing: Vec<((usize, usize), Vec<DVector<f64>>)> = Vec::new();
            {
                // Closed-form slot evaluation for horizon index h.
                let slot_value = |h: usize| -> DVector<f64> {
                    let mut value = &pows[h] * &xi_k;
                    for in_edge in graph.in_edges(node) {
                        for t in 0..h {
                            let v_t = delivered(&bundles, in_edge.sender, node, k, t);
                            value += &pows[h - 1 - t] * (s * v_t * (beta * in_edge.weight));
                        }
                    }
                    value
                };
                for edge in graph.out_edges(node) {
                    let h_end = horizons[&(node, edge.receiver)];
                    let slots: Vec<DVector<f64>> =
                        (0..=h_end).map(|t| slot_value(edge.delay + t)).collect();
                    outgoing.push(((node, edge.receiver), slots));
                }
                if k < horizon {
                    let next = slot_value(1);
                    xi[idx].push(next);
                }
            }
            for (key, slots) in outgoing {
                bundles.get_mut(&key).unwrap().push(slots);
            }
        }
    }
    Oracle {
        v: v_table,
        xi,
        bundles,
    }
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_exact_delay_compensation() {
    let mut file = benchmark_scenario();
    file.horizon = 200;
    let validated = validate(&file).expect("benchmark is feasible");
    let t_max = validated.report.t_max;
    assert_eq!(t_max, 33, "benchmark exactness time");

    let trace = run_simulation(&validated.setup).expect("simulation runs");
    let oracle = oracle_run(&validated, file.horizon);

    // Kernel and oracle observers agree to fp-accumulation accuracy even
    // though they never share code paths.
    let mut max_xi_gap = 0.0_f64;
    for (idx, per_agent) in oracle.xi.iter().enumerate() {
        for (k, oracle_xi) in per_agent.iter().enumerate() {
            let gap = (&trace.steps[k].agents[idx].xi - oracle_xi).amax();
            max_xi_gap = max_xi_gap.max(gap);
        }
    }
    assert!(
        max_xi_gap <= 1e-12,
        "kernel vs oracle observer states diverged: {max_xi_gap}"
    );

    // Every bundle the kernel ever shipped — transient included — matches
    // the oracle's closed-form slot values, so channel timing and
    // zero-history handling agree between the two implementations.
    let mut max_bundle_gap = 0.0_f64;
    for ((sender, receiver), sent) in &trace.bundles {
        let oracle_sent = &oracle.bundles[&(*sender, *receiver)];
        for bundle in sent {
            let slots = &oracle_sent[bundle.send_step];
            for (t, slot) in slots.iter().enumerate() {
                let gap = (bundle.value(t).unwrap() - slot).amax();
                max_bundle_gap = max_bundle_gap.max(gap);
            }
        }
    }
    assert!(
        max_bundle_gap <= 1e-12,
        "kernel vs oracle bundle slots diverged: {max_bundle_gap}"
    );

    // Every forecast shipped from step T_max on equals the oracle's true
    // future value, componentwise within 1e-9.
    let mut worst_exact = 0.0_f64;
    let mut checked = 0usize;
    for ((sender, receiver), sent) in &trace.bundles {
        let delay = validated.setup.graph.delay(*sender, *receiver).unwrap();
        for bundle in sent.iter().filter(|b| b.send_step >= t_max) {
            for t in 0..=bundle.horizon_values.len() {
                let target = bundle.send_step + delay + t;
                if target > file.horizon {
                    break;
                }
                let truth = if *sender == 0 {
                    &oracle.v[target]
                } else {
                    &oracle.xi[*sender - 1][target]
                };
                let err = (bundle.value(t).unwrap() - truth).amax();
                worst_exact = worst_exact.max(err);
                checked += 1;
            }
        }
    }
    assert!(
        checked > 2_000,
        "exactness check covered {checked} forecasts"
    );
    assert!(
        worst_exact <= 1e-9,
        "prediction error {worst_exact} beyond exactness time"
    );

    // Before lock-on, errors are finite and recorded, not silently exact.
    let mut pre_errors = Vec::new();
    for record in trace.steps.iter().take(t_max) {
        for agent in &record.agents {
            assert!(agent.prediction_error_norm.is_finite());
            pre_errors.push(agent.prediction_error_norm);
        }
    }
    assert!(
        pre_errors.iter().any(|&e| e > 1e-3),
        "transient should show real prediction errors"
    );

    println!(
        "criterion 1: PASS (worst forecast error {worst_exact:.2e} over {checked} forecasts \
         from step {t_max}; kernel-vs-oracle observer gap {max_xi_gap:.2e})"
    );
}

#[test]
fn criterion_2_coupling_gain_condition() {
    let file = benchmark_scenario();
    let validated = validate(&file).expect("benchmark is feasible");
    let topo = &validated.setup.topo;
    let s = &validated.setup.exo.s;
    let hd0 = &topo.h + &topo.d0;

    let nominal = check_coupling_gain(s, &hd0, 0.25).unwrap();
    assert!(nominal.ok);
    assert!(
        (nominal.lhs - 0.75).abs() <= 1e-9,
        "lhs at beta = 0.25 is {}",
        nominal.lhs
    );
    let at_zero = check_coupling_gain(s, &hd0, 0.0).unwrap();
    let at_one = check_coupling_gain(s, &hd0, 1.0).unwrap();
    assert!(
        !at_zero.ok,
        "beta = 0 must be rejected (lhs {})",
        at_zero.lhs
    );
    assert!(!at_one.ok, "beta = 1 must be rejected (lhs {})", at_one.lhs);

    println!(
        "criterion 2: PASS (lhs {:.9} at beta 0.25; rejected beta 0 with lhs {:.2} and \
         beta 1 with lhs {:.2})",
        nominal.lhs, at_zero.lhs, at_one.lhs
    );
}

#[test]
fn criterion_3_regulator_equations_match_closed_forms() {
    let file = benchmark_scenario();
    let validated = validate(&file).expect("benchmark is feasible");
    let s = &validated.setup.exo.s;
    let f = &validated.setup.gains.f;

    // Closed forms for this agent family, derived symbolically: with
    // C = [1 0 0] and F = [0 −1], the output equation pins the first row
    // of X to [0 1]; the first two state rows of X S = A X + B U then give
    // row2 = row1·S and row3 = row2·S / α₁, and the third gives
    // U = row3·S − α₂·row1 − α₃·row2 − α₄·row3.
    let alphas: [[f64; 4]; 4] = [
        [1.0, 0.0, 1.0, 1.0],
        [2.0, 0.0, 1.0, 2.0],
        [1.0, 3.0, 1.0, 2.0],
        [2.0, 1.0, 1.0, 1.0],
    ];
    let mut worst_x = 0.0_f64;
    let mut worst_residual = 0.0_f64;
    for (idx, agent) in validated.setup.agents.iter().enumerate() {
        let [a1, a2, a3, a4] = alphas[idx];
        let row1 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let row2 = &row1 * s;
        let row3 = &row2 * s / a1;
        let u_closed = &row3 * s - &row1 * a2 - &row2 * a3 - &row3 * a4;
        let mut x_closed = DMatrix::zeros(3, 2);
        x_closed.row_mut(0).copy_from(&row1);
        x_closed.row_mut(1).copy_from(&row2);
        x_closed.row_mut(2).copy_from(&row3);

        let reg = solve_regulator(&agent.a, &agent.b, &agent.c, s, f).expect("solvable");
        worst_x = worst_x
            .max((&reg.x - &x_closed).norm())
            .max((&reg.u - &u_closed).norm());
        worst_residual = worst_residual
            .max(reg.residual_primary)
            .max(reg.residual_output);
    }
    assert!(worst_x <= 1e-8, "closed-form gap {worst_x}");
    assert!(worst_residual <= 1e-9, "residual {worst_residual}");

    println!(
        "criterion 3: PASS (max closed-form gap {worst_x:.2e}, max residual \
         {worst_residual:.2e} across four agents)"
    );
}

fn run_mode(mode: Mode) -> (ValidatedScenario, SimTrace) {
    let mut file = benchmark_scenario();
    file.mode = mode;
    let validated = validate(&file).expect("benchmark is feasible");
    let trace = run_simulation(&validated.setup).expect("simulation runs");
    (validated, trace)
}

#[test]
fn criterion_4_output_synchronization_both_feedback_modes() {
    let mut summaries = Vec::new();
    for mode in [Mode::StateFeedback, Mode::OutputFeedback] {
        let (validated, trace) = run_mode(mode);
        assert_eq!(trace.horizon, 800);
        if mode == Mode::OutputFeedback {
            for agent in &validated.report.agents {
                let radius = agent.observer_loop_radius.expect("output mode has L");
                assert!(radius <= 0.5, "observer pole modulus {radius}");
            }
        }
        let metrics = compute_metrics(&trace);
        assert!(
            metrics.final_max_pairwise_output_gap <= 1e-4,
            "{mode}: pairwise gap {}",
            metrics.final_max_pairwise_output_gap
        );
        for (idx, e) in metrics.final_regulated_norms.iter().enumerate() {
            assert!(*e <= 1e-4, "{mode}: agent {} regulated {e}", idx + 1);
        }
        summaries.push(format!(
            "{} gap {:.1e}",
            mode.name(),
            metrics.final_max_pairwise_output_gap
        ));
    }
    println!(
        "criterion 4: PASS (at step 800: {}; regulated norms all <= 1e-4; observer poles \
         at modulus <= 0.5)",
        summaries.join(", ")
    );
}

#[test]
fn criterion_5_no_compensation_degrades_tenfold() {
    let (_, trace) = run_mode(Mode::NoCompensation);
    let metrics = compute_metrics(&trace);
    let gap = metrics.final_max_pairwise_output_gap;
    assert!(
        gap >= 10.0 * 1e-4,
        "uncompensated gap {gap} is not >= 10x the 1e-4 threshold"
    );
    assert!(metrics.first_exact_step.is_none());

    println!(
        "criterion 5: PASS (uncompensated pairwise gap {:.4} at step 800, {:.0}x the \
         synchronization threshold)",
        gap,
        gap / 1e-4
    );
}

#[test]
fn criterion_6_surrogate_fidelity() {
    let cmp = shared_sir_comparison();
    let names = ["i_r", "r_r", "i_u", "r_u"];
    for (name, err) in names.iter().zip(cmp.fidelity_max_abs) {
        assert!(err <= 0.02, "{name}: rollout error {err}");
    }
    let worst = cmp.fidelity_max_abs.iter().cloned().fold(0.0_f64, f64::max);
    println!(
        "criterion 6: PASS (re-lifted rollout vs nonlinear loop: worst state error \
         {worst:.2e} over 10000 steps, bound 0.02)"
    );
}

#[test]
fn criterion_7_peak_reduction() {
    let cmp = shared_sir_comparison();
    let tau = benchmark_sir_params().tau().unwrap();

    // Both arms consume identical (zero) inputs before the first report
    // arrives, so their trajectories coincide exactly through step τ.
    for k in 0..=tau {
        assert_eq!(
            cmp.baseline.trace.states[k], cmp.compensated.trace.states[k],
            "arms diverged at pre-arrival step {k}"
        );
    }

    // Global peaks: both arms start at the initial urban outbreak, which
    // dominates everything after it, so the global-peak difference is zero.
    // The compensation acts on the delayed second wave (k >= τ).
    let delta_global = cmp.delta_peak_i_u;
    let delta_wave = cmp.delta_wave_peak_i_u.expect("wave covered");
    assert!(delta_global.abs() <= 1e-12, "global delta {delta_global}");
    assert!(
        (0.043..=0.10).contains(&delta_wave),
        "wave-peak reduction {delta_wave} outside [0.043, 0.10]"
    );

    let base = cmp.baseline.wave_peak_i_u.unwrap();
    let comp = cmp.compensated.wave_peak_i_u.unwrap();
    println!(
        "criterion 7: PASS (wave peaks: baseline {:.6} @ {}, compensated {:.6} @ {}; \
         reduction {delta_wave:.6}; global peaks coincide at i_u(0) so global delta is \
         {delta_global:.1e})",
        base.value, base.step, comp.value, comp.step
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: property suites.
// ---------------------------------------------------------------------------

/// Random feasible scenario over the benchmark agent family: random DAG
/// with every node reachable from the reference, random delays/weights,
/// coupling gain set safely from the max in-weight, random initial data.
fn random_scenario(rng: &mut ChaCha8Rng) -> ScenarioFile {
    let template = benchmark_scenario();
    let n_agents = rng.random_range(2..=4);
    let mut agents: Vec<_> = template.agents[..n_agents].to_vec();
    for agent in &mut agents {
        agent.initial = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        agent.observer_initial = Some((0..2).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let mut edges = Vec::new();
    for node in 1..=n_agents {
        // At least one in-edge from an earlier node keeps the DAG rooted.
        let mut senders: Vec<usize> = (0..node).collect();
        let keep = rng.random_range(1..=senders.len().min(2));
        while senders.len() > keep {
            let drop = rng.random_range(0..senders.len());
            senders.remove(drop);
        }
        for sender in senders {
            edges.push(mas_sim::scenario::EdgeSection {
                from: sender,
                to: node,
                weight: rng.random_range(2..=6) as f64 * 0.25,
                delay: rng.random_range(1..=6),
            });
        }
    }
    // Give every intermediate node a forward edge so the final node is the
    // unique terminal; the longest-path recursion then guarantees every
    // bundle is deep enough for its receiver's onward forecasts.
    for node in 1..n_agents {
        if !edges.iter().any(|e| e.from == node) {
            edges.push(mas_sim::scenario::EdgeSection {
                from: node,
                to: n_agents,
                weight: rng.random_range(2..=6) as f64 * 0.25,
                delay: rng.random_range(1..=6),
            });
        }
    }
    let max_in: f64 = (1..=n_agents)
        .map(|node| {
            edges
                .iter()
                .filter(|e| e.to == node)
                .map(|e| e.weight)
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let mut file = template;
    file.agents = agents;
    file.graph.edges = edges;
    file.gains.beta = 0.9 / max_in;
    file.horizon = 120;
    file.exosystem.initial = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    file
}

fn scale_setup(v: &ValidatedScenario, factor: f64) -> ValidatedScenario {
    let mut scaled = v.clone();
    scaled.setup.v0 *= factor;
    for x in &mut scaled.setup.x0 {
        *x *= factor;
    }
    for xi in &mut scaled.setup.xi0 {
        *xi *= factor;
    }
    for x_hat in &mut scaled.setup.x_hat0 {
        *x_hat *= factor;
    }
    scaled
}

/// Doubling every initial condition must double every recorded quantity
/// *exactly*: scaling by 2 is an fp exponent shift, and the whole pipeline
/// is linear with identical operation order in both runs.
fn assert_trace_doubles(base: &SimTrace, doubled: &SimTrace) {
    for (r1, r2) in base.steps.iter().zip(doubled.steps.iter()) {
        assert_eq!(&r1.exo * 2.0, r2.exo);
        for (a1, a2) in r1.agents.iter().zip(r2.agents.iter()) {
            assert_eq!(&a1.x * 2.0, a2.x, "state at step {}", r1.step);
            assert_eq!(&a1.y * 2.0, a2.y, "output at step {}", r1.step);
            assert_eq!(&a1.u * 2.0, a2.u, "control at step {}", r1.step);
            assert_eq!(&a1.xi * 2.0, a2.xi, "observer at step {}", r1.step);
            assert_eq!(&a1.e * 2.0, a2.e, "regulated at step {}", r1.step);
        }
    }
}

/// All simple-path enumeration of the modified longest path, the slow
/// reference for the DP.
fn brute_force_longest(graph: &DelayGraph, from: usize, to: usize) -> Option<usize> {
    fn dfs(graph: &DelayGraph, at: usize, to: usize, acc: usize, best: &mut Option<usize>) {
        if at == to {
            *best = Some(best.map_or(acc, |b: usize| b.max(acc)));
            return;
        }
        for e in graph.out_edges(at) {
            dfs(graph, e.receiver, to, acc + e.delay - 1, best);
        }
    }
    if from == to {
        return None;
    }
    let mut best = None;
    dfs(graph, from, to, 0, &mut best);
    best
}

#[test]
fn criterion_8_property_suites() {
    // (a) Linearity: five seeded random scenarios, each doubled.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
    let mut linear_runs = 0;
    while linear_runs < 5 {
        let file = random_scenario(&mut rng);
        let validated = match validate(&file) {
            Ok(v) => v,
            // A random draw may be infeasible (e.g. regulator solvability);
            // resample rather than bias the generator.
            Err(_) => continue,
        };
        let base = run_simulation(&validated.setup).expect("runs");
        let doubled_setup = scale_setup(&validated, 2.0);
        let doubled = run_simulation(&doubled_setup.setup).expect("runs");
        assert_trace_doubles(&base, &doubled);
        linear_runs += 1;
    }

    // (b) Manifold preservation: propagating a lifted vector through the
    // raw operator drifts it off the feature manifold (products no longer
    // equal products of the embedded states), while the re-lifting step
    // the rollout performs restores every constraint exactly.
    let cmp = shared_sir_comparison();
    let dict = Dictionary::rural();
    let manifold_defect = |psi: &DVector<f64>| -> f64 {
        let (i, r) = (psi[0], psi[1]);
        let s = 1.0 - i - r;
        [
            (psi[2] - s).abs(),
            (psi[3] - s * i).abs(),
            (psi[4] - s * r).abs(),
            (psi[5] - i * r).abs(),
            (psi[6] - s * s).abs(),
            (psi[7] - i * i).abs(),
            (psi[8] - r * r).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    };
    let mut worst_manifold = 0.0_f64;
    let mut worst_raw = 0.0_f64;
    for k in (0..500).step_by(25) {
        let st = &cmp.nonlinear.states[k];
        let psi = lift(&dict, &Vector2::new(st.i_r, st.r_r), None).unwrap();
        let raw_next = &cmp.model.k_r * &psi;
        let relifted = lift(&dict, &Vector2::new(raw_next[0], raw_next[1]), None).unwrap();
        worst_raw = worst_raw.max(manifold_defect(&raw_next));
        worst_manifold = worst_manifold.max(manifold_defect(&relifted));
    }
    assert!(worst_manifold <= 1e-12, "re-lifted defect {worst_manifold}");
    assert!(
        worst_raw > worst_manifold,
        "raw propagation should drift off the manifold (raw {worst_raw})"
    );

    // (c) DP vs exhaustive enumeration of the modified longest path on 200
    // random DAGs with up to 7 nodes.
    let mut dag_rng = ChaCha8Rng::seed_from_u64(0xdecade);
    let mut pairs_checked = 0usize;
    for _ in 0..200 {
        let n = dag_rng.random_range(2..=7);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if dag_rng.random_bool(0.5) {
                    edges.push(DelayEdge {
                        sender: i,
                        receiver: j,
                        weight: 1.0,
                        delay: dag_rng.random_range(1..=9),
                    });
                }
            }
        }
        let graph = DelayGraph::new(n, edges).expect("generated DAGs are valid");
        for from in 0..n {
            for to in 0..n {
                if from == to {
                    continue;
                }
                let dp = graph.modified_longest_path(from, to).expect("valid DAG");
                let brute = brute_force_longest(&graph, from, to);
                assert_eq!(dp, brute, "path weight mismatch {from} -> {to}");
                pairs_checked += 1;
            }
        }
    }
    assert!(pairs_checked > 1_000, "only {pairs_checked} pairs checked");

    // (d) Determinism: repeat runs are bit-identical, in trace bytes and in
    // the serialized surrogate model.
    let validated = validate(&benchmark_scenario()).expect("benchmark is feasible");
    let mut csv = Vec::new();
    write_trace_csv(&run_simulation(&validated.setup).expect("runs"), &mut csv).unwrap();
    let mut csv_again = Vec::new();
    write_trace_csv(
        &run_simulation(&validated.setup).expect("runs"),
        &mut csv_again,
    )
    .unwrap();
    assert_eq!(csv, csv_again, "trace CSV bytes differ between runs");
    let mut sir_small = benchmark_sir_params();
    sir_small.steps = 1500;
    sir_small.delay = 2.0;
    let (model_a, _) = fit_model(&sir_small).expect("fits");
    let (model_b, _) = fit_model(&sir_small).expect("fits");
    assert_eq!(model_a.to_json(), model_b.to_json(), "model JSON differs");

    println!(
        "criterion 8: PASS (5 scenarios scale exactly 2x; manifold defect {worst_manifold:.1e}; \
         {pairs_checked} longest-path pairs match enumeration; repeat runs bit-identical)"
    );
}
