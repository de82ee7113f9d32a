//! Many-spaces probabilities, the big-space partition, conditional
//! big-space probabilities, the coin-toss loop, and consistency reports.
//!
//! Two probability notions live side by side. A many-spaces probability is
//! intrinsic to one (state, setting) reference class and reads only the
//! emitter state. A big-space probability lives on a single partition
//! covering all settings and outcomes, so ordinary conditionals are
//! defined; when the apparatus depends on the outcome (a causal loop), the
//! per-class frequencies diverge from the many-spaces values while the
//! big-space conditionals pin them down.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::scenario::{FrequencyTable, Outcome, Scenario, Setting};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("unknown outcome {0}")]
    UnknownOutcome(String),
    #[error("setting {0} has zero measure in the partition")]
    ZeroMeasureSetting(Setting),
    #[error("frequency table does not match the scenario: {0}")]
    MismatchedScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// A probability measure: exactly rational when the amplitudes it came from
/// were declared in `num/sqrt(root)` form, an f64 otherwise. Arithmetic
/// stays exact as long as both operands are exact (falling back to f64 on
/// the astronomically unlikely i64 overflow).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Measure {
    Exact(Ratio<i64>),
    Approx(f64),
}

impl Measure {
    pub fn zero() -> Measure {
        Measure::Exact(Ratio::zero())
    }

    pub fn one() -> Measure {
        Measure::Exact(Ratio::one())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Measure::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            Measure::Approx(x) => *x,
        }
    }

    pub fn as_exact(&self) -> Option<Ratio<i64>> {
        match self {
            Measure::Exact(r) => Some(*r),
            Measure::Approx(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Measure::Exact(r) => r.is_zero(),
            Measure::Approx(x) => *x == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Measure::Exact(r) => r.is_one(),
            Measure::Approx(x) => *x == 1.0,
        }
    }
}

impl std::ops::Add for Measure {
    type Output = Measure;
    fn add(self, other: Measure) -> Measure {
        match (self, other) {
            (Measure::Exact(a), Measure::Exact(b)) => {
                let num = i128::from(*a.numer()) * i128::from(*b.denom())
                    + i128::from(*b.numer()) * i128::from(*a.denom());
                let den = i128::from(*a.denom()) * i128::from(*b.denom());
                exact_or_approx(num, den)
            }
            (a, b) => Measure::Approx(a.to_f64() + b.to_f64()),
        }
    }
}

impl std::ops::Sub for Measure {
    type Output = Measure;
    fn sub(self, other: Measure) -> Measure {
        match (self, other) {
            (Measure::Exact(a), Measure::Exact(b)) => {
                let num = i128::from(*a.numer()) * i128::from(*b.denom())
                    - i128::from(*b.numer()) * i128::from(*a.denom());
                let den = i128::from(*a.denom()) * i128::from(*b.denom());
                exact_or_approx(num, den)
            }
            (a, b) => Measure::Approx(a.to_f64() - b.to_f64()),
        }
    }
}

/// Division by a zero measure is a panic; callers gate on `is_zero`.
impl std::ops::Div for Measure {
    type Output = Measure;
    fn div(self, other: Measure) -> Measure {
        assert!(!other.is_zero(), "division by a zero measure");
        match (self, other) {
            (Measure::Exact(a), Measure::Exact(b)) => {
                let num = i128::from(*a.numer()) * i128::from(*b.denom());
                let den = i128::from(*a.denom()) * i128::from(*b.numer());
                exact_or_approx(num, den)
            }
            (a, b) => Measure::Approx(a.to_f64() / b.to_f64()),
        }
    }
}

fn exact_or_approx(num: i128, den: i128) -> Measure {
    debug_assert!(den != 0);
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
    let (num, den) = (num / g, den / g);
    match (i64::try_from(num), i64::try_from(den)) {
        (Ok(n), Ok(d)) => Measure::Exact(Ratio::new_raw(n, d)),
        _ => Measure::Approx(num as f64 / den as f64),
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Exact(r) => write!(f, "{r}"),
            Measure::Approx(x) => write!(f, "{x}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Many-spaces probabilities
// ---------------------------------------------------------------------------

/// One conditional-with-probabilistic-consequent: within the reference
/// class (state, setting), the outcome has this probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ManySpacesAssignment {
    pub reference_class: (String, Setting),
    pub outcome: Outcome,
    pub probability: f64,
}

/// Label of the emitter state used in reference classes.
const STATE_LABEL: &str = "psi";

/// The intrinsic per-mode weight |ψ_mode|² read from the emitter state
/// alone, ignoring any loop constraint. The setting only addresses the
/// reference class; it does not change the value.
pub fn many_spaces_probability(
    scenario: &Scenario,
    setting: Setting,
    outcome: &Outcome,
) -> Result<f64, AnalysisError> {
    Ok(many_spaces_assignment(scenario, setting, outcome)?.probability)
}

pub fn many_spaces_assignment(
    scenario: &Scenario,
    setting: Setting,
    outcome: &Outcome,
) -> Result<ManySpacesAssignment, AnalysisError> {
    let Outcome::Detected(mode) = outcome else {
        return Err(AnalysisError::UnknownOutcome(outcome.to_string()));
    };
    let expr = scenario
        .expr_of(mode)
        .ok_or_else(|| AnalysisError::UnknownOutcome(outcome.to_string()))?;
    Ok(ManySpacesAssignment {
        reference_class: (STATE_LABEL.to_string(), setting),
        outcome: outcome.clone(),
        probability: expr.weight(),
    })
}

/// The complete outcome set of one reference class; probabilities sum to 1
/// for a normalized emitter state.
pub fn many_spaces_assignments(
    scenario: &Scenario,
    setting: Setting,
) -> Vec<ManySpacesAssignment> {
    scenario
        .modes
        .iter()
        .map(|(mode, expr)| ManySpacesAssignment {
            reference_class: (STATE_LABEL.to_string(), setting),
            outcome: Outcome::Detected(mode.clone()),
            probability: expr.weight(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Big-space partition
// ---------------------------------------------------------------------------

/// One region of the big probability space: a measure together with the
/// setting and outcome that hold on it.
#[derive(Clone, Debug, PartialEq)]
pub struct BigSpaceRegion {
    pub label: String,
    pub measure: Measure,
    pub setting: Setting,
    pub outcome: Outcome,
}

/// Partition the big space at the branch point: the branch transaction
/// either succeeds (measure = its weight, initial setting) or fails
/// (complement measure; the relocated outcome with the augmented setting,
/// or a null outcome when nothing relocates).
pub fn big_space_partition(scenario: &Scenario) -> Result<Vec<BigSpaceRegion>, AnalysisError> {
    scenario
        .validate()
        .map_err(|e| AnalysisError::InvalidScenario(e.to_string()))?;
    let branch = &scenario.branch_mode;
    let expr = scenario.expr_of(branch).expect("validated branch mode");
    let weight = match expr.exact_weight() {
        Some(r) => Measure::Exact(r),
        None => Measure::Approx(expr.amplitude().norm_sqr()),
    };

    let branch_region = BigSpaceRegion {
        label: format!("{branch}_d"),
        measure: weight,
        setting: Setting::PsiCPrime,
        outcome: Outcome::Detected(branch.clone()),
    };
    if weight.is_one() {
        return Ok(vec![branch_region]);
    }

    let (setting, outcome) = match scenario.relocated_mode() {
        Some(mode) => (Setting::PsiC, Outcome::Detected(mode.clone())),
        None => (Setting::PsiCPrime, Outcome::Null),
    };
    Ok(vec![
        branch_region,
        BigSpaceRegion {
            label: format!("not({branch}_d)"),
            measure: Measure::one() - weight,
            setting,
            outcome,
        },
    ])
}

/// Ordinary conditional probability on the partition:
/// Σ measure(outcome ∧ setting) / Σ measure(setting).
pub fn big_space_conditional(
    partition: &[BigSpaceRegion],
    outcome: &Outcome,
    setting: Setting,
) -> Result<Measure, AnalysisError> {
    let denominator = partition
        .iter()
        .filter(|r| r.setting == setting)
        .fold(Measure::zero(), |acc, r| acc + r.measure);
    if denominator.is_zero() {
        return Err(AnalysisError::ZeroMeasureSetting(setting));
    }
    let numerator = partition
        .iter()
        .filter(|r| r.setting == setting && &r.outcome == outcome)
        .fold(Measure::zero(), |acc, r| acc + r.measure);
    Ok(numerator / denominator)
}

// ---------------------------------------------------------------------------
// The coin-toss loop
// ---------------------------------------------------------------------------

/// Many-spaces probability of heads for a balanced toss, outside any loop.
pub const COIN_LOOP_MANY_SPACES_HEADS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoinLoopRecord {
    pub toss_occurred: bool,
    pub heads: bool,
}

/// One trial of the coin-toss loop: the toss indeterministically causes
/// heads, the perception of heads deterministically (and backward in time)
/// causes the toss. The constraint is always satisfiable and admits only
/// heads-histories, so the trial is declarative — no draw is consumed.
pub fn coin_loop_trial(_seed: u64, _trial_index: u64) -> CoinLoopRecord {
    CoinLoopRecord {
        toss_occurred: true,
        heads: true,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoinLoopCounts {
    pub total: u64,
    pub tosses: u64,
    pub heads_given_toss: u64,
}

pub fn coin_loop_batch(seed: u64, n: u64) -> CoinLoopCounts {
    let mut counts = CoinLoopCounts::default();
    for i in 0..n {
        let record = coin_loop_trial(seed, i);
        counts.total += 1;
        if record.toss_occurred {
            counts.tosses += 1;
            if record.heads {
                counts.heads_given_toss += 1;
            }
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Consistency reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// The frequency agrees with the probability the big-space construction
    /// assigns it (for a loop, via the conditional; outside one, directly).
    ConsistentViaConditional,
    /// The frequency deviates from the many-spaces value, as loops make it
    /// do; not an inconsistency.
    DivergenceExpectedInLoop,
    /// No loop is present and the frequency still deviates beyond the
    /// statistical bound.
    Inconsistent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::ConsistentViaConditional => f.write_str("consistent_via_conditional"),
            Verdict::DivergenceExpectedInLoop => f.write_str("divergence_expected_in_loop"),
            Verdict::Inconsistent => f.write_str("inconsistent"),
        }
    }
}

/// Four-sigma binomial bound on an observed frequency at sample size `n`.
pub fn binomial_four_sigma(p: f64, n: u64) -> f64 {
    4.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Classify an observed frequency against a probability: agreement within
/// the bound is consistency; disagreement is expected inside a loop and
/// inconsistent outside one.
pub fn frequency_verdict(probability: f64, observed: f64, loop_flag: bool, bound: f64) -> Verdict {
    let matches = (probability - observed).abs() <= bound;
    match (loop_flag, matches) {
        (_, true) => Verdict::ConsistentViaConditional,
        (true, false) => Verdict::DivergenceExpectedInLoop,
        (false, false) => Verdict::Inconsistent,
    }
}

/// Verdict for the comparison between a many-spaces probability and the
/// conditional value within the outcome's own setting class. In a loop the
/// reference class is biased by the outcome, so a divergence here is
/// expected rather than inconsistent.
pub fn conditional_class_verdict(
    many_spaces: f64,
    conditional: f64,
    loop_flag: bool,
) -> Verdict {
    frequency_verdict(many_spaces, conditional, loop_flag, 1e-12)
}

/// The juxtaposition the whole analysis exists for: intrinsic probability,
/// observed long-run frequency, and the big-space conditional, per outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub outcome: String,
    pub many_spaces_value: f64,
    pub observed_frequency: Ratio<u64>,
    pub big_space_conditional: Measure,
    pub loop_flag: bool,
    pub verdict: Verdict,
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// One report per partition outcome, comparing the intrinsic value with the
/// batch's unconditional frequency and the conditional under the outcome's
/// own setting.
pub fn consistency_report(
    scenario: &Scenario,
    batch: &FrequencyTable,
) -> Result<Vec<ConsistencyReport>, AnalysisError> {
    if batch.total() == 0 {
        return Err(AnalysisError::MismatchedScenario(
            "empty frequency table".to_string(),
        ));
    }
    let partition = big_space_partition(scenario)?;
    for (outcome, _) in batch.outcomes() {
        if !partition.iter().any(|r| &r.outcome == outcome) {
            return Err(AnalysisError::MismatchedScenario(format!(
                "batch outcome {outcome} is not producible by this scenario"
            )));
        }
    }

    let loop_flag = scenario.has_relocation();
    let mut reports = Vec::with_capacity(partition.len());
    for region in &partition {
        let many_spaces_value = match &region.outcome {
            Outcome::Detected(_) => {
                many_spaces_probability(scenario, region.setting, &region.outcome)?
            }
            // A null outcome has no per-mode weight; its intrinsic value is
            // the configuration's null probability, which for a validated
            // scenario equals the branch-failure measure.
            Outcome::Null => region.measure.to_f64(),
        };
        let observed_frequency = batch.frequency(&region.outcome);
        let big_space_conditional =
            big_space_conditional(&partition, &region.outcome, region.setting)?;
        let bound = binomial_four_sigma(region.measure.to_f64(), batch.total());
        let verdict = frequency_verdict(
            many_spaces_value,
            ratio_to_f64(observed_frequency),
            loop_flag,
            bound,
        );
        reports.push(ConsistencyReport {
            outcome: region.outcome.to_string(),
            many_spaces_value,
            observed_frequency,
            big_space_conditional,
            loop_flag,
            verdict,
        });
    }
    Ok(reports)
}
