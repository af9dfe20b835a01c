//! The epidemic payoff of delay compensation: the urban region's mitigation
//! reacts to rural infection reports that arrive 1000 steps late. Feeding
//! the controller a model-based forecast of the *current* rural level —
//! instead of the stale report — cuts the delayed second wave of urban
//! infections by more than an order of magnitude.

use mas_sim::sir::run_sir_comparison;
use std::path::Path;

#[derive(serde::Deserialize)]
struct SirFile {
    sir: mas_sim::sir::SirParams,
}

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two_region_sir.toml");
    let text = std::fs::read_to_string(&path).expect("shipped scenario readable");
    let file: SirFile = toml::from_str(&text).expect("shipped scenario parses");
    let params = file.sir;
    let tau = params.tau().expect("integer delay");

    let cmp = run_sir_comparison(&params).expect("comparison runs");

    println!(
        "surrogate fidelity vs nonlinear loop (max abs error per state): {:?}",
        cmp.fidelity_max_abs
    );
    println!();
    println!("arm           global peak i_u        second wave (k >= {tau})");
    for outcome in [&cmp.baseline, &cmp.compensated] {
        let wave = outcome.wave_peak_i_u.expect("run covers the wave");
        println!(
            "{:<13} {:.6} @ step {:<6} {:.6} @ step {}",
            outcome.trace.mode.name(),
            outcome.peak_i_u.value,
            outcome.peak_i_u.step,
            wave.value,
            wave.step
        );
    }
    println!();
    println!(
        "global peaks coincide (both arms start inside the initial urban outbreak), \
         so the reduction shows up in the delayed wave:"
    );
    println!(
        "wave-peak reduction = {:.6}",
        cmp.delta_wave_peak_i_u.expect("wave exists")
    );
}
