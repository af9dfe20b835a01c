//! Checks the exactness guarantee on real message traffic: every bundle
//! sent on edge (i, r) at step k predicts the sender's state at the arrival
//! step and beyond. Comparing each delivered forecast against the recorded
//! truth shows per-edge lock-on steps, all at or before T_max = 33.

use mas_sim::netsim::run_simulation;
use mas_sim::scenario::load_validated;
use std::path::Path;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/four_agent.toml");
    let validated = load_validated(&path).expect("shipped scenario is feasible");
    let trace = run_simulation(&validated.setup).expect("simulation runs");
    let horizon = trace.horizon;

    println!("edge      delay  forecasts  exact from step   worst error after T_max");
    for ((sender, receiver), bundles) in &trace.bundles {
        let delay = validated.setup.graph.delay(*sender, *receiver).unwrap();
        // The truth a bundle predicts: the sender's observer state (or the
        // reference itself for node 0) at arrival step + forecast index.
        let truth = |step: usize| {
            if *sender == 0 {
                trace.steps[step].exo.clone()
            } else {
                trace.steps[step].agents[*sender - 1].xi.clone()
            }
        };
        let mut first_exact = None;
        let mut worst_after_t_max = 0.0_f64;
        for bundle in bundles {
            let k = bundle.send_step;
            let mut bundle_err = 0.0_f64;
            for idx in 0..=bundle.horizon_values.len() {
                let target = k + delay + idx;
                if target > horizon {
                    break;
                }
                let forecast = bundle.value(idx).expect("index within bundle horizon");
                let err = (forecast - truth(target)).amax();
                bundle_err = bundle_err.max(err);
            }
            if bundle_err <= 1e-9 {
                first_exact.get_or_insert(k);
            } else {
                first_exact = None;
            }
            if k >= trace.t_max {
                worst_after_t_max = worst_after_t_max.max(bundle_err);
            }
        }
        println!(
            "{sender} -> {receiver}    {delay:>3}    {:>5}      {:>8}          {:.3e}",
            bundles[0].horizon_values.len() + 1,
            first_exact
                .map(|k| k.to_string())
                .unwrap_or_else(|| "never".into()),
            worst_after_t_max
        );
    }
    println!();
    println!(
        "T_max = {} is the worst-case bound; individual edges lock on earlier",
        trace.t_max
    );
}
