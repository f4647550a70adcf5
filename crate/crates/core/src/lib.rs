//! Simulation and finite-key analysis toolkit for time-bin QKD with a
//! quantum-dot single-photon source.
//!
//! The crate is layered bottom-up: `optics` holds the interferometer
//! algebra, `photostats` the source/channel/detector statistics, `finitekey`
//! the security analysis, `montecarlo` the pulse-level event simulation, and
//! `sweeps` the experiment drivers. `config` loads and validates the flat
//! key-value parameter files; `cli` dispatches the `tbqkd` binary.

pub mod cli;
pub mod config;
pub mod finitekey;
pub mod montecarlo;
pub mod optics;
pub mod photostats;
pub mod sweeps;

pub use config::{load_config, BasisSplit, ParamBundle, SecurityParams, SystemParams};
pub use finitekey::{
    expected_counts, secure_key_rate, BlockCounts, KeyRateReport, KeyStatus,
};
pub use montecarlo::{simulate_block, sift_and_qber, EncodingSequence, McConfig, McMode};
pub use sweeps::{distance_sweep, max_tolerable_distance, stability_run, SweepSpec};
