//! What the delays do when nobody compensates them: in `no_compensation`
//! mode every node forwards its raw current state instead of predictions,
//! so each observer tracks a stale reference. With a marginally stable
//! rotation reference the phase lag never decays — outputs stay apart by a
//! fixed rotation angle instead of synchronizing.

use mas_sim::netsim::{compute_metrics, run_simulation, Mode};
use mas_sim::scenario::{validate, ScenarioFile};
use std::path::Path;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/four_agent.toml");
    let mut file = ScenarioFile::load(&path).expect("shipped scenario parses");

    let mut summary = Vec::new();
    for mode in [Mode::StateFeedback, Mode::NoCompensation] {
        file.mode = mode;
        let validated = validate(&file).expect("shipped scenario is feasible");
        let trace = run_simulation(&validated.setup).expect("simulation runs");
        let metrics = compute_metrics(&trace);
        summary.push((mode, metrics));
    }

    println!("mode              exact-from   final output gap   final |e_1|");
    for (mode, m) in &summary {
        println!(
            "{:<17} {:<12} {:<18.6e} {:.6e}",
            mode.name(),
            m.first_exact_step
                .map(|k| k.to_string())
                .unwrap_or_else(|| "never".into()),
            m.final_max_pairwise_output_gap,
            m.final_regulated_norms[0]
        );
    }
    let degraded = summary[1].1.final_max_pairwise_output_gap;
    println!();
    println!(
        "with compensation the final gap is machine precision; without it the gap \
         settles at {degraded:.4} — {:.0}x above a 1e-4 synchronization threshold",
        degraded / 1e-4
    );
    println!(
        "(agent 1 converges to a reference rotated by its 4-step arrival delay, \
         so its regulated output settles near |(S^-4 - I) v| instead of zero)"
    );
}
