//! Simulation engine for prediction-based compensation of distinct
//! communication delays in discrete-time heterogeneous multi-agent systems.
//!
//! A directed acyclic communication graph connects a reference generator
//! (node 0, an autonomous linear exosystem) to a set of heterogeneous linear
//! agents. Every edge carries a fixed positive transmission delay. Each agent
//! runs a distributed observer of the exosystem state and, instead of
//! forwarding its raw observer state, forwards a *bundle* of predicted future
//! observer values sized so that downstream agents can cancel their incoming
//! delays exactly after a finite, computable settling time. Regulator
//! equations turn the delay-compensated observer states into state- or
//! output-feedback laws that synchronize every agent's output to the
//! reference.
//!
//! The crate is organized in layers:
//!
//! - [`graph`] — delay DAG validation, modified longest paths, prediction
//!   horizons, and the exactness time `T_max`.
//! - [`linalg`] — spectral radius, Schur tests, regulator (Sylvester-type)
//!   equations, pole placement, and the observer coupling-gain condition.
//! - [`sync`] — per-node operations: distributed observers, predictors,
//!   distributed predictors, feedback laws, and regulated errors.
//! - [`netsim`] — delayed FIFO channels, message bundles, the lock-step
//!   simulation kernel, trace recording, and metrics.
//! - [`koopman`] — polynomial lifting dictionaries and EDMD fitting of
//!   linear surrogate models, with re-lifted rollouts.
//! - [`sir`] — a delayed two-region SIR epidemic model driving the Koopman
//!   pipeline: travel-restriction mitigation in one region is triggered by
//!   the other region's infection level, which arrives with a long delay
//!   that the surrogate predictor compensates.
//! - [`scenario`] — TOML/JSON scenario files and validation into runnable
//!   configurations.
//! - [`cli`] — the `check`, `run`, `sir`, and `koopman-fit` subcommands.

pub mod cli;
pub mod graph;
pub mod koopman;
pub mod linalg;
pub mod netsim;
pub mod scenario;
pub mod sir;
pub mod sync;
