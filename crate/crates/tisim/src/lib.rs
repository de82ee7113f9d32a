//! Discrete-event simulator and analysis library for transactional
//! interpretation experiments whose apparatus configuration depends on
//! measurement outcomes.
//!
//! The crate has four layers:
//!
//! - [`wave`]: exact bookkeeping for offer and confirmation waves over a
//!   finite mode basis — phase cancellation, transaction weights, and the
//!   emitter's advanced-wave remnant.
//! - [`scenario`]: experiment definitions (emitter, absorbers, relocation
//!   rules, timeline) and seeded trial execution with the branch-point
//!   semantics: one uniform draw decides the shared incipient transaction,
//!   everything else follows deterministically. [`mod@format`] is the
//!   scenario file format.
//! - [`analysis`]: many-spaces probabilities, the big-space partition and
//!   its conditionals, the coin-toss loop, and consistency reports, with
//!   exact rational measures wherever the amplitudes permit. [`report`]
//!   renders reports to CSV and JSON.
//! - [`verify`]: the acceptance suite behind `tisim verify`.
//!
//! Trials use counter-based random streams keyed by (seed, trial index)
//! ([`rng`]), so batches are reproducible bit-for-bit under any parallel
//! schedule.

pub mod analysis;
pub mod format;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod verify;
pub mod wave;

pub use analysis::{
    big_space_conditional, big_space_partition, coin_loop_trial, consistency_report,
    many_spaces_probability, AnalysisError, BigSpaceRegion, ConsistencyReport, Measure, Verdict,
};
pub use scenario::{
    bilking_probe, build_maudlin, build_trivial, run_batch, run_trial, FrequencyTable, Outcome,
    Scenario, ScenarioError, Setting, TrialRecord,
};
pub use wave::{
    emit_offer, emitter_advanced_remnant, residual_field, respond_confirmation, superpose,
    transaction_weights, Amplitude, ModeLabel, WaveError, WaveSet,
};
