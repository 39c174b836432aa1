//! Stepwise Fine-Gray competing-risks modeling.
//!
//! This crate implements dynamic risk prediction for competing events with
//! subdistribution-hazard (Fine-Gray) models whose risk scores come from
//! small feed-forward networks trained on an IPCW-adjusted partial
//! likelihood. Models are fit in two phases: a first model over static
//! features (plus elapsed time), then a second model over static and
//! time-varying features with the frozen first-phase score as an offset.
//! A per-horizon threshold on the incremental log-subhazard contribution of
//! the second phase decides which phase predicts for a given subject.
//!
//! Everything here is deterministic given seeds and free of I/O; CSV
//! ingestion, model files, and the command-line front end live in the
//! companion `stepfg-cli` crate. The crate is `no_std`-compatible (with
//! `alloc`) when built without the default `std` feature.
//!
//! Module map:
//! - [`data`] — subjects, pooled prediction-time snapshots, stratified splits
//! - [`censoring`] — reverse Kaplan-Meier censoring survival and IPCW weights
//! - [`stepfn`] — right-continuous step functions (survival curves, baselines)
//! - [`risk_net`] — minimal MLP with exact gradients and Adam
//! - [`finegray`] — single-phase model: loss, Breslow baseline, training, CIF
//! - [`stepwise`] — two-phase fitting, incremental contribution, thresholding
//! - [`eval`] — competing-risks and Harrell concordance, landmark/subgroup tables
//! - [`synth`] — known-truth data generator and Monte Carlo CIF oracle
//!
//! # Example
//!
//! Fit a two-phase model for one event on a simulated cohort and predict:
//!
//! ```
//! use stepfg_core::data::{build_snapshots, build_snapshots_at, split_stratified, EventCode};
//! use stepfg_core::finegray::FitConfig;
//! use stepfg_core::stepwise::{fit_stepwise, predict};
//! use stepfg_core::synth::{generate, SynthConfig};
//!
//! let cohort = generate(&SynthConfig { n_subjects: 240, seed: 1, ..Default::default() })?;
//! let split = split_stratified(&cohort, (0.64, 0.16, 0.20), 1)?;
//! let train = build_snapshots(&split.train, 6.0, 5.0, 96.0, 5.0)?;
//! let val = build_snapshots_at(&split.val, &[6.0, 11.0, 16.0], 5.0)?;
//!
//! let cfg = FitConfig {
//!     learning_rates: vec![5e-3],
//!     max_epochs: 15,
//!     hidden_dims: vec![8],
//!     eval_times: vec![6.0, 11.0, 16.0],
//!     ..FitConfig::default()
//! };
//! let (model, _log) = fit_stepwise(&train, &val, EventCode::new(1), &cfg, &[24.0, 48.0], 30)?;
//!
//! let p = predict(&model, &val.snapshots[0], 48.0)?;
//! assert!((0.0..1.0).contains(&p.cif));
//! # Ok::<(), stepfg_core::Error>(())
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
// Negated float comparisons are deliberate: `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod censoring;
pub mod data;
pub mod error;
pub mod eval;
pub mod finegray;
pub(crate) mod num;
pub mod risk_net;
pub mod rng;
pub mod stepfn;
pub mod stepwise;
pub mod synth;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
