//! Experiment definitions and seeded trial execution.
//!
//! A `Scenario` is a finite mode basis with a normalized emitter state, a
//! roster of absorbers (one of which may relocate when a designated
//! incipient transaction fails), a timeline, and the branch mode whose
//! incipient transaction is the outcome-independent branch point.
//!
//! Trial semantics are a single stochastic draw: the branch transaction is
//! sampled first with probability equal to its weight, and everything else
//! (relocation, the second confirmation, the certainty of the relocated
//! outcome, the advanced-wave remnant) follows deterministically. There is
//! no iterative echoing between emitter and absorbers.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::TrialStream;
use crate::wave::{
    emit_offer, emitter_advanced_remnant, respond_confirmation, transaction_weights, AbsorberId,
    Amplitude, ModeLabel, TransactionWeights, WaveSet, NORM_TOL,
};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

// ---------------------------------------------------------------------------
// Emitter-state amplitudes
// ---------------------------------------------------------------------------

/// An emitter-state amplitude as declared, so that probability arithmetic
/// downstream can stay exact whenever the declared form permits.
#[derive(Clone, Debug, PartialEq)]
pub enum AmplitudeExpr {
    /// num / √root with integer num and root ≥ 1. The squared magnitude
    /// num²/root is exactly rational.
    RootFraction { num: i64, root: i64 },
    /// An arbitrary complex amplitude; squared magnitudes fall back to f64.
    Complex(Amplitude),
}

impl AmplitudeExpr {
    pub fn root_fraction(num: i64, root: i64) -> AmplitudeExpr {
        assert!(root >= 1, "root must be ≥ 1");
        assert!(num.checked_mul(num).is_some(), "numerator too large");
        AmplitudeExpr::RootFraction { num, root }
    }

    pub fn complex(re: f64, im: f64) -> AmplitudeExpr {
        AmplitudeExpr::Complex(Amplitude::new(re, im))
    }

    /// The numeric amplitude used by the wave algebra.
    pub fn amplitude(&self) -> Amplitude {
        match self {
            AmplitudeExpr::RootFraction { num, root } => {
                let weight = (num * num) as f64 / *root as f64;
                Amplitude::from_re((*num as f64).signum() * weight.sqrt())
            }
            AmplitudeExpr::Complex(amp) => *amp,
        }
    }

    /// Exactly rational squared magnitude, when the declared form carries
    /// one.
    pub fn exact_weight(&self) -> Option<Ratio<i64>> {
        match self {
            AmplitudeExpr::RootFraction { num, root } => Some(Ratio::new(num * num, *root)),
            AmplitudeExpr::Complex(_) => None,
        }
    }

    /// Squared magnitude, taking the exact route when the declared form has
    /// one (so `1/sqrt(2)` weighs exactly 0.5 rather than the square of the
    /// rounded amplitude).
    pub fn weight(&self) -> f64 {
        match self {
            AmplitudeExpr::RootFraction { num, root } => (num * num) as f64 / *root as f64,
            AmplitudeExpr::Complex(amp) => amp.norm_sqr(),
        }
    }
}

// ---------------------------------------------------------------------------
// Apparatus
// ---------------------------------------------------------------------------

/// What makes a parked absorber move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RelocationTrigger {
    /// Fires when the branch transaction has failed by the given time.
    OnNullAt(f64),
}

/// An automated swing: on trigger the absorber moves to a new position and
/// covers a new mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Relocation {
    pub trigger: RelocationTrigger,
    pub new_position: f64,
    pub new_mode: ModeLabel,
}

/// A detector. Position sign encodes the side relative to the emitter.
#[derive(Clone, Debug, PartialEq)]
pub struct Absorber {
    pub id: AbsorberId,
    pub position: f64,
    pub mode: ModeLabel,
    pub relocation: Option<Relocation>,
}

/// Emission, swing-decision and detection-window times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timeline {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Where an absorber sits and which mode it covers in one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub id: AbsorberId,
    pub position: f64,
    pub mode: ModeLabel,
}

impl Placement {
    /// Shadowed by a strictly nearer absorber on the same side.
    fn blocked_among(&self, all: &[Placement]) -> bool {
        all.iter().any(|other| {
            other.id != self.id
                && other.position.signum() == self.position.signum()
                && other.position.abs() < self.position.abs()
        })
    }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// A complete experiment definition.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Ordered basis with the emitter state; the declaration order is the
    /// basis order.
    pub modes: Vec<(ModeLabel, AmplitudeExpr)>,
    pub absorbers: Vec<Absorber>,
    pub timeline: Timeline,
    /// The mode whose incipient transaction is the branch point.
    pub branch_mode: ModeLabel,
}

impl Scenario {
    pub fn basis(&self) -> impl Iterator<Item = &ModeLabel> {
        self.modes.iter().map(|(m, _)| m)
    }

    pub fn expr_of(&self, mode: &ModeLabel) -> Option<&AmplitudeExpr> {
        self.modes.iter().find(|(m, _)| m == mode).map(|(_, e)| e)
    }

    pub fn amplitude_of(&self, mode: &ModeLabel) -> Option<Amplitude> {
        self.expr_of(mode).map(AmplitudeExpr::amplitude)
    }

    pub fn emitter_amplitudes(&self) -> BTreeMap<ModeLabel, Amplitude> {
        self.modes
            .iter()
            .map(|(m, e)| (m.clone(), e.amplitude()))
            .collect()
    }

    /// Whether any absorber carries a relocation rule (the loop marker).
    pub fn has_relocation(&self) -> bool {
        self.absorbers.iter().any(|a| a.relocation.is_some())
    }

    /// The mode the (single) relocating absorber swings to.
    pub fn relocated_mode(&self) -> Option<&ModeLabel> {
        self.absorbers
            .iter()
            .find_map(|a| a.relocation.as_ref().map(|r| &r.new_mode))
    }

    /// Absorber placements at emission time.
    pub fn initial_placements(&self) -> Vec<Placement> {
        self.absorbers
            .iter()
            .map(|a| Placement {
                id: a.id.clone(),
                position: a.position,
                mode: a.mode.clone(),
            })
            .collect()
    }

    /// Absorber placements after every null-triggered relocation has fired.
    pub fn post_null_placements(&self) -> Vec<Placement> {
        self.absorbers
            .iter()
            .map(|a| match &a.relocation {
                Some(r) => Placement {
                    id: a.id.clone(),
                    position: r.new_position,
                    mode: r.new_mode.clone(),
                },
                None => Placement {
                    id: a.id.clone(),
                    position: a.position,
                    mode: a.mode.clone(),
                },
            })
            .collect()
    }

    /// Ids of absorbers shadowed by a nearer same-side absorber at emission.
    pub fn initially_blocked(&self) -> Vec<AbsorberId> {
        let placements = self.initial_placements();
        placements
            .iter()
            .filter(|p| p.blocked_among(&placements))
            .map(|p| p.id.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.modes.is_empty() {
            return Err(invalid("emitter state has no modes"));
        }
        for (i, (mode, expr)) in self.modes.iter().enumerate() {
            if self.modes.iter().skip(i + 1).any(|(m, _)| m == mode) {
                return Err(invalid(format!("duplicate mode label {mode}")));
            }
            let norm_sq = expr.amplitude().norm_sqr();
            if norm_sq > 1.0 + NORM_TOL {
                return Err(invalid(format!("mode {mode} amplitude magnitude² {norm_sq} exceeds 1")));
            }
        }
        let norm_sq: f64 = self
            .modes
            .iter()
            .map(|(_, e)| e.amplitude().norm_sqr())
            .sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("emitter state not normalized: Σ|ψ|² = {norm_sq}")));
        }

        let t = &self.timeline;
        if !(t.t0.is_finite() && t.t1.is_finite() && t.t2.is_finite()) {
            return Err(invalid("timeline times must be finite"));
        }
        if !(t.t0 < t.t1 && t.t1 < t.t2) {
            return Err(invalid(format!("timeline must satisfy t0 < t1 < t2, got {} {} {}", t.t0, t.t1, t.t2)));
        }

        for (i, a) in self.absorbers.iter().enumerate() {
            if self.absorbers.iter().skip(i + 1).any(|b| b.id == a.id) {
                return Err(invalid(format!("duplicate absorber id {}", a.id)));
            }
            if !a.position.is_finite() || a.position == 0.0 {
                return Err(invalid(format!("absorber {} position must be finite and nonzero", a.id)));
            }
            if self.expr_of(&a.mode).is_none() {
                return Err(invalid(format!("absorber {} covers mode {} outside the basis", a.id, a.mode)));
            }
        }

        let relocating: Vec<&Absorber> = self
            .absorbers
            .iter()
            .filter(|a| a.relocation.is_some())
            .collect();
        if relocating.len() > 1 {
            return Err(invalid("at most one absorber may carry a relocation rule"));
        }

        for config in [self.initial_placements(), self.post_null_placements()] {
            for (i, p) in config.iter().enumerate() {
                if config.iter().skip(i + 1).any(|q| {
                    q.position.signum() == p.position.signum() && q.position == p.position
                }) {
                    return Err(invalid(format!("absorbers share position {} on the same side", p.position)));
                }
            }
        }

        if self.expr_of(&self.branch_mode).is_none() {
            return Err(invalid(format!("branch mode {} is outside the basis", self.branch_mode)));
        }
        for config in [self.initial_placements(), self.post_null_placements()] {
            let active: Vec<&Placement> =
                config.iter().filter(|p| !p.blocked_among(&config)).collect();
            for (i, p) in active.iter().enumerate() {
                if active.iter().skip(i + 1).any(|q| q.mode == p.mode) {
                    return Err(invalid(format!(
                        "two active absorbers cover mode {}; a mode takes at most one full confirmation",
                        p.mode
                    )));
                }
            }
        }
        let initial = self.initial_placements();
        let initial_active_modes: Vec<&ModeLabel> = initial
            .iter()
            .filter(|p| !p.blocked_among(&initial))
            .map(|p| &p.mode)
            .collect();
        if initial_active_modes != vec![&self.branch_mode] {
            // The trial semantics sample the branch transaction alone; any
            // other initially confirmed transaction would have no
            // realization path.
            return Err(invalid(format!(
                "the initial configuration must confirm exactly the branch mode {}, got [{}]",
                self.branch_mode,
                initial_active_modes
                    .iter()
                    .map(|m| m.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }

        if let Some(a) = relocating.first() {
            let r = a.relocation.as_ref().expect("filtered on relocation");
            let RelocationTrigger::OnNullAt(trigger_time) = r.trigger;
            if !(trigger_time > t.t0 && trigger_time < t.t2) {
                return Err(invalid(format!("relocation trigger time {trigger_time} must lie strictly between t0 and t2")));
            }
            if !r.new_position.is_finite() || r.new_position == 0.0 {
                return Err(invalid(format!("absorber {} relocation position must be finite and nonzero", a.id)));
            }
            if r.new_mode == self.branch_mode {
                return Err(invalid(format!("relocation target {} is the branch mode; only modes left uncovered by the failed branch are allowed", r.new_mode)));
            }
            match self.amplitude_of(&r.new_mode) {
                None => {
                    return Err(invalid(format!("relocation target {} is outside the basis", r.new_mode)));
                }
                Some(amp) if amp.norm_sqr() <= NORM_TOL => {
                    return Err(invalid(format!("relocation target {} carries no offer amplitude", r.new_mode)));
                }
                Some(_) => {}
            }
            let post = self.post_null_placements();
            let relocated = post
                .iter()
                .find(|p| p.id == a.id)
                .expect("relocating absorber present in post-null placements");
            if relocated.blocked_among(&post) {
                return Err(invalid(format!("absorber {} is blocked at its relocated position", a.id)));
            }
            if post.iter().any(|p| {
                p.id != a.id && p.mode == r.new_mode && !p.blocked_among(&post)
            }) {
                return Err(invalid(format!("relocation target {} is already covered by another absorber", r.new_mode)));
            }
        }

        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

/// The two-detector arrangement: an equal L/R superposition, detector A one
/// unit to the right, detector B two units to the right behind A with an
/// automated swing to the left that fires if nothing is detected at A by t1.
pub fn build_maudlin() -> Scenario {
    Scenario {
        modes: vec![
            (ModeLabel::new("L"), AmplitudeExpr::root_fraction(1, 2)),
            (ModeLabel::new("R"), AmplitudeExpr::root_fraction(1, 2)),
        ],
        absorbers: vec![
            Absorber {
                id: AbsorberId::new("A"),
                position: 1.0,
                mode: ModeLabel::new("R"),
                relocation: None,
            },
            Absorber {
                id: AbsorberId::new("B"),
                position: 2.0,
                mode: ModeLabel::new("R"),
                relocation: Some(Relocation {
                    trigger: RelocationTrigger::OnNullAt(1.0),
                    new_position: -2.0,
                    new_mode: ModeLabel::new("L"),
                }),
            },
        ],
        timeline: Timeline {
            t0: 0.0,
            t1: 1.0,
            t2: 2.0,
        },
        branch_mode: ModeLabel::new("R"),
    }
}

/// The single-absorber variant: no detector B at all, so a failed branch is
/// a genuine null outcome.
pub fn build_trivial() -> Scenario {
    let mut scenario = build_maudlin();
    scenario.absorbers.truncate(1);
    scenario
}

// ---------------------------------------------------------------------------
// Trial records and outcomes
// ---------------------------------------------------------------------------

/// The effective emitter setting a trial ran under: confirmations from the
/// full post-relocation absorber set (ψ_C) or from the initial set only
/// (ψ′_C).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Setting {
    PsiC,
    PsiCPrime,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::PsiC => f.write_str("psi_C"),
            Setting::PsiCPrime => f.write_str("psi_C_prime"),
        }
    }
}

/// What a trial produced: a detection on some mode, or no transaction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Detected(ModeLabel),
    Null,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Detected(mode) => write!(f, "{mode}_d"),
            Outcome::Null => f.write_str("null"),
        }
    }
}

/// One executed trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub branch_succeeded: bool,
    /// The realized transaction's mode; absent on a null outcome.
    pub realized: Option<ModeLabel>,
    pub setting: Setting,
    /// Uncancelled pre-emission advanced field, by mode. Empty when the
    /// trial's final absorber set was complete.
    pub remnant: BTreeMap<ModeLabel, Amplitude>,
    pub rng_seed: u64,
}

impl TrialRecord {
    pub fn outcome(&self) -> Outcome {
        match &self.realized {
            Some(mode) => Outcome::Detected(mode.clone()),
            None => Outcome::Null,
        }
    }
}

// ---------------------------------------------------------------------------
// Trial execution
// ---------------------------------------------------------------------------

fn confirmations_for(offer: &WaveSet, placements: &[Placement]) -> WaveSet {
    let mut set = WaveSet::new();
    for placement in placements {
        if placement.blocked_among(placements) {
            continue;
        }
        if let Some(component) = offer.retarded_connecting_offer(&placement.mode) {
            let response = respond_confirmation(component, &placement.id)
                .expect("connecting offer components are retarded offers");
            set.extend(response);
        }
    }
    set
}

/// The initial confirmation set (non-blocked absorbers at their emission
/// positions).
pub fn initial_confirmations(scenario: &Scenario) -> Result<WaveSet, ScenarioError> {
    scenario.validate()?;
    let offer = offer_of(scenario);
    Ok(confirmations_for(&offer, &scenario.initial_placements()))
}

/// Transaction weights of the initial configuration.
pub fn initial_transaction_weights(
    scenario: &Scenario,
) -> Result<TransactionWeights, ScenarioError> {
    scenario.validate()?;
    let offer = offer_of(scenario);
    let confirmations = confirmations_for(&offer, &scenario.initial_placements());
    Ok(transaction_weights(&offer, &confirmations).expect("confirmations answer the offer"))
}

fn offer_of(scenario: &Scenario) -> WaveSet {
    emit_offer(&scenario.emitter_amplitudes()).expect("scenario validated as normalized")
}

/// The two record shapes a trial can take. Everything but the draw is
/// fixed by the configuration, so it is computed once per batch.
#[derive(Clone, Debug)]
struct RecordShape {
    branch_succeeded: bool,
    realized: Option<ModeLabel>,
    setting: Setting,
    remnant: BTreeMap<ModeLabel, Amplitude>,
}

/// Precomputed trial machinery for one validated scenario.
#[derive(Clone, Debug)]
pub(crate) struct TrialContext {
    branch_weight: f64,
    success: RecordShape,
    failure: RecordShape,
}

impl TrialContext {
    pub(crate) fn new(scenario: &Scenario) -> TrialContext {
        let offer = offer_of(scenario);
        let initial = confirmations_for(&offer, &scenario.initial_placements());
        let weights =
            transaction_weights(&offer, &initial).expect("confirmations answer the offer");
        let branch_weight = weights.weight_of(&scenario.branch_mode).unwrap_or(0.0);

        let success = RecordShape {
            branch_succeeded: true,
            realized: Some(scenario.branch_mode.clone()),
            setting: Setting::PsiCPrime,
            remnant: emitter_advanced_remnant(&offer, &initial),
        };
        let failure = if scenario.has_relocation() {
            // The null fires the swing; the relocated absorber's
            // confirmation turns what would have been a null outcome into a
            // certainty.
            let post = confirmations_for(&offer, &scenario.post_null_placements());
            let relocated_mode = scenario
                .relocated_mode()
                .expect("has_relocation implies a relocated mode")
                .clone();
            let confirmed = post
                .answering_confirmations()
                .any(|c| c.mode == relocated_mode);
            RecordShape {
                branch_succeeded: false,
                realized: confirmed.then_some(relocated_mode),
                setting: if confirmed {
                    Setting::PsiC
                } else {
                    Setting::PsiCPrime
                },
                remnant: emitter_advanced_remnant(&offer, &post),
            }
        } else {
            RecordShape {
                branch_succeeded: false,
                realized: None,
                setting: Setting::PsiCPrime,
                remnant: emitter_advanced_remnant(&offer, &initial),
            }
        };
        TrialContext {
            branch_weight,
            success,
            failure,
        }
    }

    pub(crate) fn run(&self, seed: u64, trial_index: u64) -> TrialRecord {
        let mut stream = TrialStream::new(seed, trial_index);
        let u = stream.next_unit();
        let shape = if u < self.branch_weight {
            &self.success
        } else {
            &self.failure
        };
        // Transaction selection is one draw, never an iterative exchange.
        assert_eq!(stream.draws(), 1, "trial consumed more than one draw");
        TrialRecord {
            trial_index,
            branch_succeeded: shape.branch_succeeded,
            realized: shape.realized.clone(),
            setting: shape.setting,
            remnant: shape.remnant.clone(),
            rng_seed: seed,
        }
    }
}

/// Run one seeded trial.
pub fn run_trial(
    scenario: &Scenario,
    seed: u64,
    trial_index: u64,
) -> Result<TrialRecord, ScenarioError> {
    scenario.validate()?;
    Ok(TrialContext::new(scenario).run(seed, trial_index))
}

/// The confirmation set a recorded trial ended with.
pub fn final_confirmations(
    scenario: &Scenario,
    record: &TrialRecord,
) -> Result<WaveSet, ScenarioError> {
    scenario.validate()?;
    let offer = offer_of(scenario);
    let placements = match record.setting {
        Setting::PsiC => scenario.post_null_placements(),
        Setting::PsiCPrime => scenario.initial_placements(),
    };
    Ok(confirmations_for(&offer, &placements))
}

// ---------------------------------------------------------------------------
// Frequency tables
// ---------------------------------------------------------------------------

/// Outcome and setting counts aggregated over a batch. Merging is
/// associative and commutative, so parallel aggregation is reproducible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrequencyTable {
    counts: BTreeMap<Outcome, u64>,
    setting_counts: BTreeMap<Setting, u64>,
    joint: BTreeMap<(Outcome, Setting), u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn record(&mut self, record: &TrialRecord) {
        let outcome = record.outcome();
        *self.counts.entry(outcome.clone()).or_insert(0) += 1;
        *self.setting_counts.entry(record.setting).or_insert(0) += 1;
        *self.joint.entry((outcome, record.setting)).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: FrequencyTable) -> FrequencyTable {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.setting_counts {
            *self.setting_counts.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.joint {
            *self.joint.entry(k).or_insert(0) += v;
        }
        self.total += other.total;
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, outcome: &Outcome) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    pub fn setting_count(&self, setting: Setting) -> u64 {
        self.setting_counts.get(&setting).copied().unwrap_or(0)
    }

    pub fn joint_count(&self, outcome: &Outcome, setting: Setting) -> u64 {
        self.joint
            .get(&(outcome.clone(), setting))
            .copied()
            .unwrap_or(0)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (&Outcome, u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    /// Unconditional frequency of an outcome as an exact count ratio.
    pub fn frequency(&self, outcome: &Outcome) -> Ratio<u64> {
        assert!(self.total > 0, "empty frequency table");
        Ratio::new(self.count(outcome), self.total)
    }

    /// Conditional frequency of an outcome within a setting class. `None`
    /// when the setting never occurred (zero denominator).
    pub fn conditional(&self, outcome: &Outcome, setting: Setting) -> Option<Ratio<u64>> {
        let denom = self.setting_count(setting);
        (denom > 0).then(|| Ratio::new(self.joint_count(outcome, setting), denom))
    }

    /// All reportable conditionals (settings with nonzero counts).
    pub fn conditionals(&self) -> BTreeMap<(Outcome, Setting), Ratio<u64>> {
        self.joint
            .keys()
            .filter_map(|(outcome, setting)| {
                self.conditional(outcome, *setting)
                    .map(|r| ((outcome.clone(), *setting), r))
            })
            .collect()
    }

    pub fn is_consistent(&self) -> bool {
        self.counts.values().sum::<u64>() == self.total
            && self.setting_counts.values().sum::<u64>() == self.total
            && self.joint.values().sum::<u64>() == self.total
    }
}

/// Run `n` independent trials and aggregate them. Deterministic for fixed
/// (scenario, seed, n) regardless of the parallel schedule.
pub fn run_batch(scenario: &Scenario, seed: u64, n: u64) -> Result<FrequencyTable, ScenarioError> {
    if n == 0 {
        return Err(invalid("trial count must be ≥ 1"));
    }
    scenario.validate()?;
    let context = TrialContext::new(scenario);
    let table = (0..n)
        .into_par_iter()
        .fold(FrequencyTable::default, |mut acc, i| {
            acc.record(&context.run(seed, i));
            acc
        })
        .reduce(FrequencyTable::default, FrequencyTable::merge);
    debug_assert!(table.is_consistent());
    Ok(table)
}

// ---------------------------------------------------------------------------
// Bilking probes
// ---------------------------------------------------------------------------

/// Result of a hypothetical pre-emission attempt to detect the remnant
/// advanced wave.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeResult {
    NoDetection,
}

/// Everything in a trial that is in principle observable before the
/// emission event, excluding the remnant advanced wave itself. None of it
/// depends on the trial's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct PreEmissionView {
    pub emitter_state: Vec<(ModeLabel, Amplitude)>,
    pub absorber_layout: Vec<Placement>,
    pub blocked: Vec<AbsorberId>,
    pub confirmed_modes: Vec<ModeLabel>,
    pub timeline: Timeline,
    pub branch_mode: ModeLabel,
}

impl PreEmissionView {
    pub fn of(scenario: &Scenario) -> PreEmissionView {
        let offer = offer_of(scenario);
        let initial = confirmations_for(&offer, &scenario.initial_placements());
        let mut confirmed_modes: Vec<ModeLabel> = initial
            .answering_confirmations()
            .map(|c| c.mode.clone())
            .collect();
        confirmed_modes.dedup();
        PreEmissionView {
            emitter_state: scenario
                .modes
                .iter()
                .map(|(m, e)| (m.clone(), e.amplitude()))
                .collect(),
            absorber_layout: scenario.initial_placements(),
            blocked: scenario.initially_blocked(),
            confirmed_modes,
            timeline: scenario.timeline,
            branch_mode: scenario.branch_mode.clone(),
        }
    }
}

/// The pre-emission observables of a recorded trial. The record's only
/// pre-emission field is the remnant, and the remnant is excluded as
/// undetectable, so the view is a function of the configuration alone.
pub fn pre_emission_observables(scenario: &Scenario, record: &TrialRecord) -> PreEmissionView {
    debug_assert!(record_shape_holds(scenario, record));
    PreEmissionView::of(scenario)
}

fn record_shape_holds(scenario: &Scenario, record: &TrialRecord) -> bool {
    if record.branch_succeeded {
        record.realized.as_ref() == Some(&scenario.branch_mode)
            && record.setting == Setting::PsiCPrime
    } else {
        match &record.realized {
            Some(mode) => {
                record.setting == Setting::PsiC && Some(mode) == scenario.relocated_mode()
            }
            None => record.setting == Setting::PsiCPrime,
        }
    }
}

/// Attempt to detect the remnant advanced wave before emission.
///
/// Detection would require engaging the remnant in a transaction, i.e. a
/// retarded offer perfectly in phase with it on pre-emission support — but
/// pre-emission support holds advanced components only, so no such offer
/// can be arranged. The probe therefore never detects anything, and the
/// rest of the record carries no pre-emission information at all.
pub fn bilking_probe(scenario: &Scenario, record: &TrialRecord) -> ProbeResult {
    assert!(
        record_shape_holds(scenario, record),
        "record was not produced from this scenario"
    );
    let view = pre_emission_observables(scenario, record);
    assert_eq!(view, PreEmissionView::of(scenario));
    ProbeResult::NoDetection
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::CANCEL_TOL;

    use std::f64::consts::FRAC_1_SQRT_2 as INV_SQRT_2;

    fn mode(name: &str) -> ModeLabel {
        ModeLabel::new(name)
    }

    /// First trial index (for `seed`) whose single draw lands in the given
    /// half of [0,1).
    fn trial_index_with_draw(seed: u64, below_half: bool) -> u64 {
        (0..1_000)
            .find(|&i| (TrialStream::new(seed, i).next_unit() < 0.5) == below_half)
            .expect("both halves occur within 1000 trials")
    }

    #[test]
    fn maudlin_scenario_shape() {
        let s = build_maudlin();
        assert_eq!(s.absorbers.len(), 2);
        assert_eq!(s.branch_mode, mode("R"));
        s.validate().unwrap();
    }

    #[test]
    fn maudlin_b_is_initially_blocked() {
        let s = build_maudlin();
        assert_eq!(s.initially_blocked(), vec![AbsorberId::new("B")]);
        let confirmations = initial_confirmations(&s).unwrap();
        let answering: Vec<_> = confirmations.answering_confirmations().collect();
        assert_eq!(answering.len(), 1);
        assert_eq!(answering[0].mode, mode("R"));
        assert_eq!(
            answering[0].origin,
            crate::wave::Origin::Absorber(AbsorberId::new("A"))
        );
    }

    #[test]
    fn trivial_scenario_weights_and_remnant() {
        let s = build_trivial();
        s.validate().unwrap();
        assert_eq!(s.absorbers.len(), 1);
        let weights = initial_transaction_weights(&s).unwrap();
        assert_eq!(weights.per_mode.len(), 1);
        assert!((weights.weight_of(&mode("R")).unwrap() - 0.5).abs() <= NORM_TOL);
        assert!((weights.null_probability - 0.5).abs() <= NORM_TOL);

        let offer = offer_of(&s);
        let confirmations = confirmations_for(&offer, &s.initial_placements());
        let remnant = emitter_advanced_remnant(&offer, &confirmations);
        assert_eq!(remnant.len(), 1);
        assert!((remnant[&mode("L")].re() + INV_SQRT_2).abs() <= CANCEL_TOL);
    }

    #[test]
    fn maudlin_branch_success_shape() {
        let s = build_maudlin();
        let i = trial_index_with_draw(42, true);
        let record = run_trial(&s, 42, i).unwrap();
        assert!(record.branch_succeeded);
        assert_eq!(record.realized, Some(mode("R")));
        assert_eq!(record.setting, Setting::PsiCPrime);
        assert_eq!(record.remnant.len(), 1);
        assert!((record.remnant[&mode("L")].re() + INV_SQRT_2).abs() <= CANCEL_TOL);
        assert_eq!(record.rng_seed, 42);
        assert_eq!(record.trial_index, i);
    }

    #[test]
    fn maudlin_branch_failure_shape() {
        let s = build_maudlin();
        let i = trial_index_with_draw(42, false);
        let record = run_trial(&s, 42, i).unwrap();
        assert!(!record.branch_succeeded);
        assert_eq!(record.realized, Some(mode("L")));
        assert_eq!(record.setting, Setting::PsiC);
        assert!(record.remnant.is_empty());
    }

    #[test]
    fn trivial_branch_failure_is_null() {
        let s = build_trivial();
        let i = trial_index_with_draw(7, false);
        let record = run_trial(&s, 7, i).unwrap();
        assert!(!record.branch_succeeded);
        assert_eq!(record.realized, None);
        assert_eq!(record.setting, Setting::PsiCPrime);
        assert_eq!(record.outcome(), Outcome::Null);
        // The single-absorber remnant is there whether or not the branch
        // succeeded.
        assert_eq!(record.remnant.len(), 1);
    }

    #[test]
    fn run_trial_is_deterministic() {
        let s = build_maudlin();
        for i in 0..50 {
            assert_eq!(
                run_trial(&s, 9, i).unwrap(),
                run_trial(&s, 9, i).unwrap()
            );
        }
    }

    #[test]
    fn batch_of_one_counts_one() {
        let table = run_batch(&build_maudlin(), 3, 1).unwrap();
        assert_eq!(table.total(), 1);
        assert!(table.is_consistent());
    }

    #[test]
    fn batch_rejects_zero_trials() {
        assert!(matches!(
            run_batch(&build_maudlin(), 3, 0),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn batch_matches_sequential_fold() {
        let s = build_maudlin();
        let parallel = run_batch(&s, 11, 500).unwrap();
        let mut sequential = FrequencyTable::default();
        for i in 0..500 {
            sequential.record(&run_trial(&s, 11, i).unwrap());
        }
        assert_eq!(parallel, sequential);
    }

    #[test]
    fn certainty_conditional_is_exact_count_equality() {
        let table = run_batch(&build_maudlin(), 5, 4_000).unwrap();
        assert_eq!(
            table.joint_count(&Outcome::Detected(mode("L")), Setting::PsiC),
            table.setting_count(Setting::PsiC)
        );
        assert_eq!(
            table
                .conditional(&Outcome::Detected(mode("L")), Setting::PsiC)
                .unwrap(),
            Ratio::new(1, 1)
        );
    }

    #[test]
    fn trivial_null_accounting_is_exact() {
        let n = 4_000;
        let table = run_batch(&build_trivial(), 5, n).unwrap();
        assert_eq!(
            table.count(&Outcome::Detected(mode("R"))) + table.count(&Outcome::Null),
            n
        );
    }

    #[test]
    fn conditionals_skip_empty_settings() {
        // A trivial batch never produces ψ_C, so no ψ_C conditional is
        // reported.
        let table = run_batch(&build_trivial(), 1, 100).unwrap();
        assert!(table
            .conditionals()
            .keys()
            .all(|(_, setting)| *setting == Setting::PsiCPrime));
    }

    #[test]
    fn final_confirmations_follow_the_setting() {
        let s = build_maudlin();
        let success = run_trial(&s, 42, trial_index_with_draw(42, true)).unwrap();
        let failure = run_trial(&s, 42, trial_index_with_draw(42, false)).unwrap();

        let initial = final_confirmations(&s, &success).unwrap();
        assert!(initial
            .answering_confirmations()
            .all(|c| c.mode == mode("R")));

        let post = final_confirmations(&s, &failure).unwrap();
        let modes: Vec<_> = post.answering_confirmations().map(|c| c.mode.clone()).collect();
        assert!(modes.contains(&mode("L")));
        assert!(modes.contains(&mode("R")));
    }

    #[test]
    fn bilking_probe_never_detects() {
        let maudlin = build_maudlin();
        let success = run_trial(&maudlin, 42, trial_index_with_draw(42, true)).unwrap();
        assert!(!success.remnant.is_empty());
        assert_eq!(bilking_probe(&maudlin, &success), ProbeResult::NoDetection);

        let failure = run_trial(&maudlin, 42, trial_index_with_draw(42, false)).unwrap();
        assert!(failure.remnant.is_empty());
        assert_eq!(bilking_probe(&maudlin, &failure), ProbeResult::NoDetection);

        let trivial = build_trivial();
        let null = run_trial(&trivial, 7, trial_index_with_draw(7, false)).unwrap();
        assert_eq!(bilking_probe(&trivial, &null), ProbeResult::NoDetection);
    }

    #[test]
    fn pre_emission_observables_do_not_depend_on_the_branch() {
        let s = build_maudlin();
        let success = run_trial(&s, 42, trial_index_with_draw(42, true)).unwrap();
        let failure = run_trial(&s, 42, trial_index_with_draw(42, false)).unwrap();
        assert_eq!(
            pre_emission_observables(&s, &success),
            pre_emission_observables(&s, &failure)
        );
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let mut not_normalized = build_maudlin();
        not_normalized.modes[0].1 = AmplitudeExpr::root_fraction(1, 3);
        assert!(not_normalized.validate().is_err());

        let mut duplicate_ids = build_maudlin();
        duplicate_ids.absorbers[1].id = AbsorberId::new("A");
        assert!(duplicate_ids.validate().is_err());

        let mut shared_position = build_maudlin();
        shared_position.absorbers[1].position = 1.0;
        assert!(shared_position.validate().is_err());

        let mut branch_unconfirmed = build_maudlin();
        branch_unconfirmed.branch_mode = mode("L");
        assert!(branch_unconfirmed.validate().is_err());

        let mut relocation_to_branch = build_maudlin();
        relocation_to_branch.absorbers[1]
            .relocation
            .as_mut()
            .unwrap()
            .new_mode = mode("R");
        assert!(relocation_to_branch.validate().is_err());

        let mut late_trigger = build_maudlin();
        late_trigger.absorbers[1].relocation.as_mut().unwrap().trigger =
            RelocationTrigger::OnNullAt(5.0);
        assert!(late_trigger.validate().is_err());

        let mut bad_timeline = build_maudlin();
        bad_timeline.timeline.t1 = -1.0;
        assert!(bad_timeline.validate().is_err());
    }

    #[test]
    fn root_fraction_amplitudes() {
        assert_eq!(
            AmplitudeExpr::root_fraction(1, 2).amplitude(),
            Amplitude::from_re(INV_SQRT_2)
        );
        assert_eq!(
            AmplitudeExpr::root_fraction(-1, 2).amplitude(),
            Amplitude::from_re(-INV_SQRT_2)
        );
        assert_eq!(
            AmplitudeExpr::root_fraction(3, 25).amplitude(),
            Amplitude::from_re(0.6)
        );
        assert_eq!(
            AmplitudeExpr::root_fraction(1, 2).exact_weight(),
            Some(Ratio::new(1, 2))
        );
        assert_eq!(AmplitudeExpr::complex(0.6, 0.0).exact_weight(), None);
    }
}
