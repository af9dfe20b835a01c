//! Command-line front end: scenario checking, simulation runs with trace
//! and metrics files, the epidemic case study, and surrogate-model fitting.
//!
//! Subcommands:
//!
//! - `check`   — validate a scenario file and print the feasibility report;
//! - `run`     — simulate a scenario, writing `trace.csv`/`trace.json` and
//!   `metrics.json`;
//! - `sir`     — run the two-region epidemic study (`baseline`,
//!   `compensated`, or `compare`), writing `sir_trace.csv` and `peaks.json`;
//! - `koopman-fit` — fit the epidemic surrogate and save it as JSON.
//!
//! Exit codes: 0 on success, 1 for parse/validation/usage failures, 2 for
//! runtime or I/O failures. Logging is controlled by `MAS_SIM_LOG`
//! (`error` by default; `info` and `debug` add progress detail).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::koopman::KoopmanError;
use crate::netsim::{compute_metrics, run_simulation, write_trace_csv, Mode, SimError, TraceRow};
use crate::scenario::{validate, ScenarioError, ScenarioFile, ValidatedScenario};
use crate::sir::{
    fit_model, run_sir_comparison, run_sir_scenario, write_sir_csv, Peak, SirError, SirMode,
    SirOutcome, SirParams, SirTrace,
};

/// Simulation toolkit for delay-compensated multi-agent synchronization.
#[derive(Debug, Parser)]
#[command(name = "mas-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a scenario file and print its feasibility report.
    Check(CheckArgs),
    /// Run a scenario; write the trace and a metrics summary.
    Run(RunArgs),
    /// Two-region epidemic study: nonlinear loop and surrogate arms.
    Sir(SirArgs),
    /// Fit the epidemic surrogate model and write it as JSON.
    KoopmanFit(KoopmanFitArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Scenario file (.toml or .json).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's feedback mode before validation.
    #[arg(long)]
    mode: Option<Mode>,
    /// Override the scenario's horizon before validation.
    #[arg(long)]
    horizon: Option<usize>,
    /// Report format: text (default) or json.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (.toml or .json).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for trace and metrics files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario's feedback mode before validation.
    #[arg(long)]
    mode: Option<Mode>,
    /// Override the scenario's horizon before validation.
    #[arg(long)]
    horizon: Option<usize>,
    /// Trace format: csv (default) or json. Metrics are always JSON.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug, Args)]
struct SirArgs {
    /// Epidemic parameter file with a [sir] table (.toml or .json).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for sir_trace.csv and peaks.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Arm to run: baseline, compensated, or compare (default).
    #[arg(long, default_value = "compare")]
    mode: String,
    /// Trace format: csv (default) or json. Peaks are always JSON.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug, Args)]
struct KoopmanFitArgs {
    /// Epidemic parameter file with a [sir] table (.toml or .json).
    #[arg(long)]
    scenario: PathBuf,
    /// Output path for the fitted model.
    #[arg(long, default_value = "koopman_model.json")]
    out: PathBuf,
}

/// Parameter file wrapper: the epidemic parameters live under `[sir]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SirFile {
    sir: SirParams,
}

#[derive(Debug)]
enum CliError {
    Scenario(ScenarioError),
    Sir(SirError),
    Sim(SimError),
    Koopman(KoopmanError),
    Io { path: String, message: String },
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Scenario(e) => write!(f, "{e}"),
            CliError::Sir(e) => write!(f, "{e}"),
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::Koopman(e) => write!(f, "{e}"),
            CliError::Io { path, message } => write!(f, "{path}: {message}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl CliError {
    /// 1 for anything the user can fix in the input; 2 for runtime/I/O.
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) => 2,
            CliError::Scenario(_) => 1,
            CliError::Sir(SirError::Koopman(_)) => 2,
            CliError::Sir(_) => 1,
            CliError::Sim(_) => 2,
            CliError::Koopman(_) => 2,
            CliError::Io { .. } => 2,
            CliError::Usage(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}
impl From<SirError> for CliError {
    fn from(e: SirError) -> Self {
        CliError::Sir(e)
    }
}
impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e)
    }
}
impl From<KoopmanError> for CliError {
    fn from(e: KoopmanError) -> Self {
        CliError::Koopman(e)
    }
}

/// Entry point used by the binary and by tests; parses `args` (including
/// the program name) and returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAS_SIM_LOG", "error"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Check(args) => cmd_check(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sir(args) => cmd_sir(&args),
        Command::KoopmanFit(args) => cmd_koopman_fit(&args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_with_overrides(
    path: &Path,
    mode: Option<Mode>,
    horizon: Option<usize>,
) -> Result<ValidatedScenario, CliError> {
    let mut file = ScenarioFile::load(path)?;
    if let Some(mode) = mode {
        file.mode = mode;
    }
    if let Some(horizon) = horizon {
        file.horizon = horizon;
    }
    Ok(validate(&file)?)
}

fn load_sir_params(path: &Path) -> Result<SirParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let format = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let file: SirFile = match format.as_str() {
        "toml" => toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        "json" => serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        other => {
            return Err(CliError::Usage(format!(
                "{}: unsupported format {other:?} (expected toml or json)",
                path.display()
            )))
        }
    };
    file.sir.validate()?;
    Ok(file.sir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let validated = load_with_overrides(&args.scenario, args.mode, args.horizon)?;
    match args.format.as_str() {
        "text" => print!("{}", validated.report.to_text()),
        "json" => println!(
            "{}",
            serde_json::to_string_pretty(&validated.report).expect("report serializes")
        ),
        other => {
            return Err(CliError::Usage(format!(
                "--format {other}: check supports text or json"
            )))
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    if !matches!(args.format.as_str(), "csv" | "json") {
        return Err(CliError::Usage(format!(
            "--format {}: run supports csv or json",
            args.format
        )));
    }
    let validated = load_with_overrides(&args.scenario, args.mode, args.horizon)?;
    log::info!(
        "running {} mode for {} steps (T_max = {})",
        validated.report.mode,
        validated.report.horizon,
        validated.report.t_max
    );
    let trace = run_simulation(&validated.setup)?;
    let metrics = compute_metrics(&trace);
    ensure_dir(&args.out)?;

    let trace_path = args.out.join(match args.format.as_str() {
        "csv" => "trace.csv",
        _ => "trace.json",
    });
    match args.format.as_str() {
        "csv" => {
            let mut buf = Vec::new();
            write_trace_csv(&trace, &mut buf).map_err(|e| CliError::Io {
                path: trace_path.display().to_string(),
                message: e.to_string(),
            })?;
            write_file(&trace_path, &buf)?;
        }
        _ => {
            let rows: Vec<TraceRow> = trace.rows();
            write_file(
                &trace_path,
                serde_json::to_string_pretty(&rows)
                    .expect("rows serialize")
                    .as_bytes(),
            )?;
        }
    }
    let metrics_path = args.out.join("metrics.json");
    write_file(
        &metrics_path,
        serde_json::to_string_pretty(&metrics)
            .expect("metrics serialize")
            .as_bytes(),
    )?;
    println!("wrote {}", trace_path.display());
    println!("wrote {}", metrics_path.display());
    println!(
        "first exact step: {}; final max pairwise output gap: {:.3e}",
        metrics
            .first_exact_step
            .map(|k| k.to_string())
            .unwrap_or_else(|| "never".to_string()),
        metrics.final_max_pairwise_output_gap
    );
    Ok(())
}

/// Peaks of one arm, as serialized into `peaks.json`.
#[derive(Debug, Serialize)]
struct ArmPeaks {
    mode: SirMode,
    peak_i_u: Peak,
    peak_i_r: Peak,
    wave_peak_i_u: Option<Peak>,
    /// True if any compartment left [0, 1] during the run.
    excursion: bool,
}

impl ArmPeaks {
    fn from_outcome(o: &SirOutcome) -> Self {
        ArmPeaks {
            mode: o.trace.mode,
            peak_i_u: o.peak_i_u,
            peak_i_r: o.peak_i_r,
            wave_peak_i_u: o.wave_peak_i_u,
            excursion: o.trace.excursion,
        }
    }
}

/// Contents of `peaks.json`.
#[derive(Debug, Serialize)]
struct PeaksReport {
    /// Delay in steps (τ = D/h).
    tau: usize,
    steps: usize,
    arms: Vec<ArmPeaks>,
    /// Global-peak reduction baseline − compensated (compare mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_peak_i_u: Option<f64>,
    /// Post-arrival wave-peak reduction (compare mode, wave present).
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_wave_peak_i_u: Option<f64>,
    /// Max |baseline − nonlinear| per state [i_r, r_r, i_u, r_u]
    /// (compare mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity_max_abs: Option<[f64; 4]>,
}

fn write_sir_outputs(
    args: &SirArgs,
    params: &SirParams,
    traces: &[&SirTrace],
    report: &PeaksReport,
) -> Result<(), CliError> {
    ensure_dir(&args.out)?;
    let trace_path = args.out.join(match args.format.as_str() {
        "csv" => "sir_trace.csv",
        _ => "sir_trace.json",
    });
    match args.format.as_str() {
        "csv" => {
            let mut buf = Vec::new();
            write_sir_csv(params, traces, &mut buf).map_err(|e| CliError::Io {
                path: trace_path.display().to_string(),
                message: e.to_string(),
            })?;
            write_file(&trace_path, &buf)?;
        }
        _ => {
            #[derive(Serialize)]
            struct JsonTrace<'a> {
                mode: SirMode,
                states: &'a [crate::sir::SirState],
                inputs: &'a [f64],
                excursion: bool,
            }
            let payload: Vec<JsonTrace> = traces
                .iter()
                .map(|t| JsonTrace {
                    mode: t.mode,
                    states: &t.states,
                    inputs: &t.inputs,
                    excursion: t.excursion,
                })
                .collect();
            write_file(
                &trace_path,
                serde_json::to_string_pretty(&payload)
                    .expect("traces serialize")
                    .as_bytes(),
            )?;
        }
    }
    let peaks_path = args.out.join("peaks.json");
    write_file(
        &peaks_path,
        serde_json::to_string_pretty(report)
            .expect("peaks serialize")
            .as_bytes(),
    )?;
    println!("wrote {}", trace_path.display());
    println!("wrote {}", peaks_path.display());
    Ok(())
}

fn cmd_sir(args: &SirArgs) -> Result<(), CliError> {
    if !matches!(args.format.as_str(), "csv" | "json") {
        return Err(CliError::Usage(format!(
            "--format {}: sir supports csv or json",
            args.format
        )));
    }
    let params = load_sir_params(&args.scenario)?;
    let tau = params.tau()?;
    match args.mode.as_str() {
        "compare" => {
            log::info!(
                "fitting surrogate and rolling both arms ({} steps)",
                params.steps
            );
            let cmp = run_sir_comparison(&params)?;
            let report = PeaksReport {
                tau,
                steps: params.steps,
                arms: vec![
                    ArmPeaks::from_outcome(&cmp.baseline),
                    ArmPeaks::from_outcome(&cmp.compensated),
                ],
                delta_peak_i_u: Some(cmp.delta_peak_i_u),
                delta_wave_peak_i_u: cmp.delta_wave_peak_i_u,
                fidelity_max_abs: Some(cmp.fidelity_max_abs),
            };
            write_sir_outputs(
                args,
                &params,
                &[&cmp.nonlinear, &cmp.baseline.trace, &cmp.compensated.trace],
                &report,
            )?;
            println!(
                "peak i_u: baseline {:.6} @ {}, compensated {:.6} @ {}, delta {:.6}",
                cmp.baseline.peak_i_u.value,
                cmp.baseline.peak_i_u.step,
                cmp.compensated.peak_i_u.value,
                cmp.compensated.peak_i_u.step,
                cmp.delta_peak_i_u
            );
            if let (Some(b), Some(c), Some(d)) = (
                cmp.baseline.wave_peak_i_u,
                cmp.compensated.wave_peak_i_u,
                cmp.delta_wave_peak_i_u,
            ) {
                println!(
                    "post-arrival wave peak i_u: baseline {:.6} @ {}, compensated {:.6} @ {}, delta {:.6}",
                    b.value, b.step, c.value, c.step, d
                );
            }
        }
        arm @ ("baseline" | "compensated") => {
            let mode = if arm == "baseline" {
                SirMode::Baseline
            } else {
                SirMode::Compensated
            };
            let outcome = run_sir_scenario(&params, mode)?;
            let report = PeaksReport {
                tau,
                steps: params.steps,
                arms: vec![ArmPeaks::from_outcome(&outcome)],
                delta_peak_i_u: None,
                delta_wave_peak_i_u: None,
                fidelity_max_abs: None,
            };
            write_sir_outputs(args, &params, &[&outcome.trace], &report)?;
            println!(
                "peak i_u ({arm}): {:.6} @ step {}",
                outcome.peak_i_u.value, outcome.peak_i_u.step
            );
        }
        other => {
            return Err(CliError::Usage(format!(
                "--mode {other}: sir supports baseline, compensated, or compare"
            )))
        }
    }
    Ok(())
}

fn cmd_koopman_fit(args: &KoopmanFitArgs) -> Result<(), CliError> {
    let params = load_sir_params(&args.scenario)?;
    log::info!("fitting surrogate on {} closed-loop steps", params.steps);
    let (model, _) = fit_model(&params)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    model.save(&args.out)?;
    let d = &model.diagnostics;
    println!("wrote {}", args.out.display());
    println!(
        "autonomous block: rank {} of {}, residual rms {:.3e}",
        d.rank_r,
        model.k_r.nrows(),
        d.residual_rms_r
    );
    println!(
        "driven block: rank {} of {}, residual rms {:.3e}",
        d.rank_u,
        model.k_u.nrows(),
        d.residual_rms_u
    );
    Ok(())
}
