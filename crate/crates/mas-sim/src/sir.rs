//! Delayed two-region SIR epidemic case study.
//!
//! Two coupled compartment models (Euler-discretized, reduced to infected
//! and recovered fractions): a rural region evolving autonomously under a
//! migration-adjusted contact rate, and an urban region whose closed-loop
//! mitigation policy consumes the rural infection level — delivered with a
//! long transmission delay `τ = D/h` steps (zero before the first report
//! arrives).
//!
//! The closed-loop dynamics are
//!
//! ```text
//! i_r(k+1) = [1 − h γ_r + h s_r β_r (1 − m_ru)] · i_r(k)
//! r_r(k+1) = r_r(k) + h γ_r i_r(k)
//! i_u(k+1) = (1 − h γ_u) i_u(k) + h s_u β_u m_ru (ū(k) − i_u(k))
//! r_u(k+1) = r_u(k) + h [γ_u + s_u β_u (1 + m_ru)] i_u(k)
//! ```
//!
//! with `s_σ = 1 − i_σ − r_σ`, the mitigation control
//! `u(k) = s_u β_u (1 + m_ru)` folded in, and `ū(k) = i_r(k − τ)` for
//! `k ≥ τ`, zero otherwise.
//!
//! The Koopman pipeline treats `ū` as an exogenous input of the urban
//! region, fits both regions by EDMD on the nonlinear closed-loop
//! trajectory, and compares two surrogate arms:
//!
//! - **baseline**: the urban surrogate is driven by the raw delayed rural
//!   infection level, exactly as the closed loop above;
//! - **compensated**: the delayed rural state is propagated forward `τ`
//!   steps through the rural surrogate (`L C_r A_r^τ ψ_r(x̄_r(k−τ))`), so
//!   the mitigation reacts to the *predicted current* rural infection level
//!   instead of the stale one.

use std::io::{self, Write};

use nalgebra::{DMatrix, RowDVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koopman::{
    edmd_fit, lift, relift_rollout, Dictionary, KoopmanError, KoopmanModel, RolloutTraj,
};
use crate::netsim::fmt17;

/// Errors raised by the epidemic pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SirError {
    /// A parameter is out of its admissible range.
    #[error("parameter {name} = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// The delay is not an integer number of sampling intervals.
    #[error("delay {delay} is not an integer multiple of the sampling interval {h}")]
    DelayNotMultiple { delay: f64, h: f64 },
    /// The Koopman stage failed.
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
}

/// Parameters of the two-region closed-loop model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirParams {
    /// Rural contact rate `β_r`.
    pub beta_r: f64,
    /// Urban contact rate `β_u`.
    pub beta_u: f64,
    /// Rural recovery rate `γ_r`.
    pub gamma_r: f64,
    /// Urban recovery rate `γ_u`.
    pub gamma_u: f64,
    /// Rural→urban migration rate `m_ru`.
    pub m_ru: f64,
    /// Euler sampling interval `h`.
    pub h: f64,
    /// Reporting delay `D` in time units; `τ = D/h` steps.
    pub delay: f64,
    /// Initial infected fractions.
    pub i_r0: f64,
    pub i_u0: f64,
    /// Initial recovered fractions.
    pub r_r0: f64,
    pub r_u0: f64,
    /// Number of steps to simulate.
    pub steps: usize,
}

impl SirParams {
    /// The delay in steps, `τ = D/h`, which must be (numerically) integer.
    pub fn tau(&self) -> Result<usize, SirError> {
        let ratio = self.delay / self.h;
        let rounded = ratio.round();
        if !(ratio.is_finite() && rounded >= 0.0)
            || (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0)
        {
            return Err(SirError::DelayNotMultiple {
                delay: self.delay,
                h: self.h,
            });
        }
        Ok(rounded as usize)
    }

    /// Range checks on every parameter (fractions in the simplex, positive
    /// sampling interval, non-negative rates and delay).
    pub fn validate(&self) -> Result<(), SirError> {
        let nonneg: [(&'static str, f64); 6] = [
            ("beta_r", self.beta_r),
            ("beta_u", self.beta_u),
            ("gamma_r", self.gamma_r),
            ("gamma_u", self.gamma_u),
            ("m_ru", self.m_ru),
            ("delay", self.delay),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SirError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and non-negative",
                });
            }
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(SirError::InvalidParameter {
                name: "h",
                value: self.h,
                reason: "must be positive",
            });
        }
        let fractions: [(&'static str, f64); 4] = [
            ("i_r0", self.i_r0),
            ("i_u0", self.i_u0),
            ("r_r0", self.r_r0),
            ("r_u0", self.r_u0),
        ];
        for (name, value) in fractions {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(SirError::InvalidParameter {
                    name,
                    value,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        for (name, total) in [
            ("i_r0 + r_r0", self.i_r0 + self.r_r0),
            ("i_u0 + r_u0", self.i_u0 + self.r_u0),
        ] {
            if total > 1.0 {
                return Err(SirError::InvalidParameter {
                    name: if name.starts_with("i_r") {
                        "i_r0 + r_r0"
                    } else {
                        "i_u0 + r_u0"
                    },
                    value: total,
                    reason: "region exceeds the unit simplex",
                });
            }
        }
        if self.steps == 0 {
            return Err(SirError::InvalidParameter {
                name: "steps",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        self.tau()?;
        Ok(())
    }
}

/// Compartment fractions of both regions at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SirState {
    pub i_r: f64,
    pub r_r: f64,
    pub i_u: f64,
    pub r_u: f64,
}

/// The closed-loop mitigation control `u(k) = s_u β_u (1 + m_ru)`.
pub fn mitigation_control(params: &SirParams, i_u: f64, r_u: f64) -> f64 {
    (1.0 - i_u - r_u) * params.beta_u * (1.0 + params.m_ru)
}

/// One exact Euler step of the closed-loop model, fed with the delayed
/// rural infection level `i_r_delayed = ū(k)`. States are not clamped.
pub fn sir_step(params: &SirParams, state: &SirState, i_r_delayed: f64) -> SirState {
    let h = params.h;
    let s_r = 1.0 - state.i_r - state.r_r;
    let s_u = 1.0 - state.i_u - state.r_u;
    SirState {
        i_r: (1.0 - h * params.gamma_r + h * s_r * params.beta_r * (1.0 - params.m_ru)) * state.i_r,
        r_r: state.r_r + h * params.gamma_r * state.i_r,
        i_u: (1.0 - h * params.gamma_u) * state.i_u
            + h * s_u * params.beta_u * params.m_ru * (i_r_delayed - state.i_u),
        r_u: state.r_u
            + h * (params.gamma_u
                + (1.0 - state.i_u - state.r_u) * params.beta_u * (1.0 + params.m_ru))
                * state.i_u,
    }
}

/// Which trajectory a trace holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SirMode {
    /// The exact nonlinear closed loop.
    Nonlinear,
    /// Surrogate rollout driven by the raw delayed rural infection level.
    Baseline,
    /// Surrogate rollout driven by the delay-compensated prediction.
    Compensated,
}

impl SirMode {
    pub fn name(self) -> &'static str {
        match self {
            SirMode::Nonlinear => "nonlinear",
            SirMode::Baseline => "baseline",
            SirMode::Compensated => "compensated",
        }
    }
}

impl std::fmt::Display for SirMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A recorded trajectory of both regions.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrace {
    pub mode: SirMode,
    /// States at steps `0..=steps`.
    pub states: Vec<SirState>,
    /// Input `ū(k)` consumed by the urban region at each step `0..steps`.
    pub inputs: Vec<f64>,
    /// Whether any compartment left `[0, 1]` (beyond 1e−9) during the run.
    pub excursion: bool,
}

/// Simulates the exact nonlinear closed loop with zero input history before
/// the first delayed report arrives.
pub fn simulate_nonlinear(params: &SirParams) -> Result<SirTrace, SirError> {
    params.validate()?;
    let tau = params.tau()?;
    let mut states = Vec::with_capacity(params.steps + 1);
    let mut inputs = Vec::with_capacity(params.steps);
    states.push(SirState {
        i_r: params.i_r0,
        r_r: params.r_r0,
        i_u: params.i_u0,
        r_u: params.r_u0,
    });
    for k in 0..params.steps {
        let u_bar = if k >= tau { states[k - tau].i_r } else { 0.0 };
        let next = sir_step(params, &states[k], u_bar);
        states.push(next);
        inputs.push(u_bar);
    }
    let excursion = states.iter().any(|s| {
        [s.i_r, s.r_r, s.i_u, s.r_u]
            .iter()
            .any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v))
    });
    Ok(SirTrace {
        mode: SirMode::Nonlinear,
        states,
        inputs,
        excursion,
    })
}

/// Fits the paired surrogate model by EDMD on the nonlinear closed-loop
/// trajectory (the rural dictionary sees states only; the urban dictionary
/// sees states and the consumed inputs).
pub fn fit_model(params: &SirParams) -> Result<(KoopmanModel, SirTrace), SirError> {
    let trace = simulate_nonlinear(params)?;
    let rural_snaps: Vec<(Vector2<f64>, Option<f64>)> = trace
        .states
        .iter()
        .map(|s| (Vector2::new(s.i_r, s.r_r), None))
        .collect();
    // Each driven snapshot pairs the urban state at step k with the input
    // signal evaluated at k; ū(steps) is well-defined even though no
    // transition consumes it.
    let tau = params.tau()?;
    let u_at = |k: usize| {
        if k >= tau {
            trace.states[k - tau].i_r
        } else {
            0.0
        }
    };
    let urban_snaps: Vec<(Vector2<f64>, Option<f64>)> = trace
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| (Vector2::new(s.i_u, s.r_u), Some(u_at(k))))
        .collect();
    let fit_r = edmd_fit(&Dictionary::rural(), &rural_snaps)?;
    let fit_u = edmd_fit(&Dictionary::urban(), &urban_snaps)?;
    Ok((KoopmanModel::from_fits(fit_r, fit_u)?, trace))
}

/// The delay-compensation row `L C_r A_r^τ` (1 × 9): applied to the lifted
/// delayed rural state it predicts the *current* rural infection level.
pub fn compensation_row(model: &KoopmanModel, tau: usize) -> RowDVector<f64> {
    let n = model.k_r.nrows();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut base = model.k_r.clone();
    let mut e = tau;
    while e > 0 {
        if e % 2 == 1 {
            power = &power * &base;
        }
        base = &base * &base;
        e /= 2;
    }
    power.row(0).clone_owned()
}

/// Predicted current rural infection level from the `τ`-step-old rural
/// state: `ū = L C_r A_r^τ ψ_r(x̄_r(k−τ))`.
pub fn compensated_input(
    model: &KoopmanModel,
    x_r_delayed: &Vector2<f64>,
    tau: usize,
) -> Result<f64, SirError> {
    let psi = lift(&Dictionary::rural(), x_r_delayed, None)?;
    Ok((compensation_row(model, tau) * psi)[0])
}

/// An infection peak: the maximum value and the first step attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub value: f64,
    pub step: usize,
}

fn peak_of<'a, I: Iterator<Item = &'a f64>>(values: I, offset: usize) -> Option<Peak> {
    let mut best: Option<Peak> = None;
    for (k, &value) in values.enumerate() {
        if best.is_none_or(|b| value > b.value) {
            best = Some(Peak {
                value,
                step: offset + k,
            });
        }
    }
    best
}

/// Outcome of one surrogate arm.
#[derive(Debug, Clone, PartialEq)]
pub struct SirOutcome {
    pub trace: SirTrace,
    /// Global urban infection peak (max over all steps, first argmax).
    pub peak_i_u: Peak,
    /// Global rural infection peak.
    pub peak_i_r: Peak,
    /// Urban infection peak over the post-arrival epoch `k ≥ τ` — the wave
    /// the delayed/compensated reporting can actually influence. `None`
    /// when the run ends before the first report arrives.
    pub wave_peak_i_u: Option<Peak>,
}

fn outcome_from_rollout(
    params: &SirParams,
    mode: SirMode,
    traj: RolloutTraj,
) -> Result<SirOutcome, SirError> {
    let tau = params.tau()?;
    let states: Vec<SirState> = traj
        .rural
        .iter()
        .zip(traj.urban.iter())
        .map(|(r, u)| SirState {
            i_r: r[0],
            r_r: r[1],
            i_u: u[0],
            r_u: u[1],
        })
        .collect();
    let excursion = states.iter().any(|s| {
        [s.i_r, s.r_r, s.i_u, s.r_u]
            .iter()
            .any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v))
    });
    let i_u: Vec<f64> = states.iter().map(|s| s.i_u).collect();
    let i_r: Vec<f64> = states.iter().map(|s| s.i_r).collect();
    let peak_i_u = peak_of(i_u.iter(), 0).expect("non-empty trajectory");
    let peak_i_r = peak_of(i_r.iter(), 0).expect("non-empty trajectory");
    let wave_peak_i_u = if tau <= params.steps {
        peak_of(i_u[tau..].iter(), tau)
    } else {
        None
    };
    Ok(SirOutcome {
        trace: SirTrace {
            mode,
            states,
            inputs: traj.inputs,
            excursion,
        },
        peak_i_u,
        peak_i_r,
        wave_peak_i_u,
    })
}

/// Runs one surrogate arm on a freshly fitted model.
pub fn run_sir_scenario(params: &SirParams, mode: SirMode) -> Result<SirOutcome, SirError> {
    match mode {
        SirMode::Nonlinear => {
            let trace = simulate_nonlinear(params)?;
            let tau = params.tau()?;
            let i_u: Vec<f64> = trace.states.iter().map(|s| s.i_u).collect();
            let i_r: Vec<f64> = trace.states.iter().map(|s| s.i_r).collect();
            Ok(SirOutcome {
                peak_i_u: peak_of(i_u.iter(), 0).expect("non-empty"),
                peak_i_r: peak_of(i_r.iter(), 0).expect("non-empty"),
                wave_peak_i_u: if tau <= params.steps {
                    peak_of(i_u[tau..].iter(), tau)
                } else {
                    None
                },
                trace,
            })
        }
        SirMode::Baseline | SirMode::Compensated => {
            let (model, _) = fit_model(params)?;
            run_arm(params, &model, mode)
        }
    }
}

/// Rolls one surrogate arm with an already fitted model.
pub fn run_arm(
    params: &SirParams,
    model: &KoopmanModel,
    mode: SirMode,
) -> Result<SirOutcome, SirError> {
    let tau = params.tau()?;
    let x0_r = Vector2::new(params.i_r0, params.r_r0);
    let x0_u = Vector2::new(params.i_u0, params.r_u0);
    let traj = match mode {
        SirMode::Baseline => relift_rollout(
            model,
            x0_r,
            x0_u,
            |k, rural| if k >= tau { rural[k - tau][0] } else { 0.0 },
            params.steps,
        )?,
        SirMode::Compensated => {
            let row = compensation_row(model, tau);
            relift_rollout(
                model,
                x0_r,
                x0_u,
                |k, rural| {
                    if k >= tau {
                        let psi = lift(&Dictionary::rural(), &rural[k - tau], None)
                            .expect("rural lift takes no input");
                        (&row * psi)[0]
                    } else {
                        0.0
                    }
                },
                params.steps,
            )?
        }
        SirMode::Nonlinear => unreachable!("nonlinear arm handled by run_sir_scenario"),
    };
    outcome_from_rollout(params, mode, traj)
}

/// Full comparison: fit once on the nonlinear closed loop, then roll both
/// arms with the same model.
#[derive(Debug, Clone, PartialEq)]
pub struct SirComparison {
    pub model: KoopmanModel,
    pub nonlinear: SirTrace,
    pub baseline: SirOutcome,
    pub compensated: SirOutcome,
    /// Max absolute baseline-vs-nonlinear error per state `[i_r, r_r, i_u, r_u]`.
    pub fidelity_max_abs: [f64; 4],
    /// Global-peak reduction `peak(i_u, baseline) − peak(i_u, compensated)`.
    pub delta_peak_i_u: f64,
    /// Post-arrival wave-peak reduction, when the wave exists.
    pub delta_wave_peak_i_u: Option<f64>,
}

/// Fits the surrogate and evaluates both arms plus fidelity numbers.
pub fn run_sir_comparison(params: &SirParams) -> Result<SirComparison, SirError> {
    let (model, nonlinear) = fit_model(params)?;
    let baseline = run_arm(params, &model, SirMode::Baseline)?;
    let compensated = run_arm(params, &model, SirMode::Compensated)?;
    let mut fidelity_max_abs = [0.0_f64; 4];
    for (truth, got) in nonlinear.states.iter().zip(baseline.trace.states.iter()) {
        let diffs = [
            (truth.i_r - got.i_r).abs(),
            (truth.r_r - got.r_r).abs(),
            (truth.i_u - got.i_u).abs(),
            (truth.r_u - got.r_u).abs(),
        ];
        for (slot, d) in fidelity_max_abs.iter_mut().zip(diffs) {
            *slot = slot.max(d);
        }
    }
    let delta_peak_i_u = baseline.peak_i_u.value - compensated.peak_i_u.value;
    let delta_wave_peak_i_u = match (baseline.wave_peak_i_u, compensated.wave_peak_i_u) {
        (Some(b), Some(c)) => Some(b.value - c.value),
        _ => None,
    };
    Ok(SirComparison {
        model,
        nonlinear,
        baseline,
        compensated,
        fidelity_max_abs,
        delta_peak_i_u,
        delta_wave_peak_i_u,
    })
}

/// Writes one or more traces as CSV: step, time, the four compartment
/// fractions, the mitigation control, the consumed input, and the mode
/// label; floats carry 17 significant digits.
pub fn write_sir_csv<W: Write>(
    params: &SirParams,
    traces: &[&SirTrace],
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "step,time,i_r,r_r,i_u,r_u,u_mitigation,u_bar,mode")?;
    for trace in traces {
        for (k, s) in trace.states.iter().enumerate() {
            let u_mit = mitigation_control(params, s.i_u, s.r_u);
            let u_bar = trace.inputs.get(k).copied();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                k,
                fmt17(k as f64 * params.h),
                fmt17(s.i_r),
                fmt17(s.r_r),
                fmt17(s.i_u),
                fmt17(s.r_u),
                fmt17(u_mit),
                u_bar.map(fmt17).unwrap_or_default(),
                trace.mode.name(),
            )?;
        }
    }
    Ok(())
}
