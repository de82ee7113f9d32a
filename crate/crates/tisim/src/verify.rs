//! The acceptance suite behind `tisim verify`.
//!
//! Each criterion runs at a pinned tolerance and reports one pass/fail
//! result. `--quick` reduces the batch size from 100,000 to 10,000 trials
//! and widens the frequency bound accordingly (4·√(p(1−p)/N) at p = 1/2
//! gives 0.0063 for the full size and 0.02 for the quick one).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2 as INV_SQRT_2;
use std::time::Instant;

use crate::analysis::{
    big_space_conditional, big_space_partition, coin_loop_trial, consistency_report,
    many_spaces_probability, COIN_LOOP_MANY_SPACES_HEADS,
};
use crate::report::render_csv;
use crate::rng::TrialStream;
use crate::scenario::{
    bilking_probe, build_maudlin, build_trivial, final_confirmations, run_batch, Outcome,
    ProbeResult, Scenario, Setting, TrialRecord,
};
use crate::wave::{
    emit_offer, residual_field, respond_confirmation, AbsorberId, Amplitude, ModeLabel, Support,
    WaveSet, CANCEL_TOL,
};

/// Trials per batch and per-seed frequency bound for the full suite.
pub const FULL_TRIALS: u64 = 100_000;
pub const FULL_FREQ_BOUND: f64 = 0.0063;

/// Reduced size and widened bound for `--quick`.
pub const QUICK_TRIALS: u64 = 10_000;
pub const QUICK_FREQ_BOUND: f64 = 0.02;

/// Distinct seeds the frequency criteria must hold on.
pub const SEED_COUNT: u64 = 20;

/// Trials for the coin-toss loop law.
pub const COIN_TRIALS: u64 = 1_000_000;

/// Random emitter states for the cancellation sweep.
pub const CANCELLATION_STATES: usize = 1_000;

/// Wall-clock target for the 20-seed frequency run.
pub const FREQ_RUNTIME_TARGET_SECS: f64 = 5.0;

#[derive(Clone, Copy, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    pub quick: bool,
}

impl VerifyConfig {
    fn trials(&self) -> u64 {
        if self.quick {
            QUICK_TRIALS
        } else {
            FULL_TRIALS
        }
    }

    fn freq_bound(&self) -> f64 {
        if self.quick {
            QUICK_FREQ_BOUND
        } else {
            FULL_FREQ_BOUND
        }
    }

    fn seeds(&self) -> Vec<u64> {
        (0..SEED_COUNT).map(|k| self.seed.wrapping_add(k)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run every acceptance criterion and collect the results.
pub fn run_acceptance(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let trials = cfg.trials();
    let bound = cfg.freq_bound();
    let maudlin = build_maudlin();
    let trivial = build_trivial();

    // Shared batches for the frequency and count criteria.
    let start = Instant::now();
    let tables: Vec<_> = cfg
        .seeds()
        .iter()
        .map(|&seed| (seed, run_batch(&maudlin, seed, trials).expect("valid scenario")))
        .collect();
    let batch_elapsed = start.elapsed().as_secs_f64();

    // Shared per-trial record scans.
    let maudlin_records = scan_records(&maudlin, cfg.seed, trials);
    let trivial_records = scan_records(&trivial, cfg.seed, trials);

    vec![
        maudlin_frequencies(&tables, trials, bound, batch_elapsed),
        certainty_conditional(&tables),
        conditional_identity(&maudlin),
        remnant_shapes(&maudlin_records),
        confirmation_wholeness(&maudlin, &maudlin_records),
        trivial_null_frequency(&trivial, cfg.seed, trials, bound),
        coin_loop_law(),
        cancellation_sweep(cfg.seed),
        bilking_inaccessibility(&maudlin, &maudlin_records, &trivial, &trivial_records),
        report_determinism(&maudlin, trials),
    ]
}

fn scan_records(scenario: &Scenario, seed: u64, n: u64) -> Vec<TrialRecord> {
    scenario.validate().expect("valid scenario");
    let context = crate::scenario::TrialContext::new(scenario);
    (0..n).map(|i| context.run(seed, i)).collect()
}

fn result(index: usize, name: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        index,
        name,
        passed,
        detail,
    }
}

fn maudlin_frequencies(
    tables: &[(u64, crate::scenario::FrequencyTable)],
    trials: u64,
    bound: f64,
    elapsed: f64,
) -> CriterionResult {
    let r_d = Outcome::Detected(ModeLabel::new("R"));
    let l_d = Outcome::Detected(ModeLabel::new("L"));
    let mut max_dev: f64 = 0.0;
    for (_, table) in tables {
        for outcome in [&r_d, &l_d] {
            let f = table.count(outcome) as f64 / table.total() as f64;
            max_dev = max_dev.max((f - 0.5).abs());
        }
    }
    let within_bound = max_dev <= bound;
    let within_time = elapsed < FREQ_RUNTIME_TARGET_SECS;
    result(
        1,
        "maudlin unconditional frequencies",
        within_bound && within_time,
        format!(
            "max |f - 0.5| = {max_dev:.5} over {} seeds at N={trials} (bound {bound}); {elapsed:.2}s (target < {FREQ_RUNTIME_TARGET_SECS}s)",
            tables.len()
        ),
    )
}

fn certainty_conditional(tables: &[(u64, crate::scenario::FrequencyTable)]) -> CriterionResult {
    let l_d = Outcome::Detected(ModeLabel::new("L"));
    let mut passed = true;
    let mut psi_c_total = 0u64;
    for (_, table) in tables {
        let joint = table.joint_count(&l_d, Setting::PsiC);
        let class = table.setting_count(Setting::PsiC);
        psi_c_total += class;
        if joint != class {
            passed = false;
        }
    }
    result(
        2,
        "maudlin certainty conditional",
        passed,
        format!("count(L_d ∧ psi_C) = count(psi_C) exactly across {psi_c_total} psi_C trials"),
    )
}

fn conditional_identity(maudlin: &Scenario) -> CriterionResult {
    let partition = big_space_partition(maudlin).expect("valid scenario");
    let conditional = big_space_conditional(
        &partition,
        &Outcome::Detected(ModeLabel::new("L")),
        Setting::PsiC,
    )
    .expect("psi_C has measure");
    let passed = conditional.as_exact().is_some_and(|r| r == num_rational::Ratio::new(1, 1));
    result(
        3,
        "big-space conditional identity",
        passed,
        format!("P(L_d | psi_C) = {conditional} in exact rational arithmetic"),
    )
}

fn remnant_shapes(records: &[TrialRecord]) -> CriterionResult {
    let l = ModeLabel::new("L");
    let mut passed = true;
    let mut max_dev: f64 = 0.0;
    for record in records {
        if record.branch_succeeded {
            match record.remnant.get(&l) {
                Some(amp) if record.remnant.len() == 1 => {
                    let dev = (amp.re() + INV_SQRT_2).abs().max(amp.im().abs());
                    max_dev = max_dev.max(dev);
                    if dev > CANCEL_TOL {
                        passed = false;
                    }
                }
                _ => passed = false,
            }
        } else if !record.remnant.is_empty() {
            passed = false;
        }
    }
    result(
        4,
        "remnant advanced wave",
        passed,
        format!(
            "{} records: R-branch remnant = -1/sqrt(2) on L (max dev {max_dev:.2e}), L-branch remnant empty",
            records.len()
        ),
    )
}

fn confirmation_wholeness(maudlin: &Scenario, records: &[TrialRecord]) -> CriterionResult {
    let l = ModeLabel::new("L");
    let many_spaces = many_spaces_probability(
        maudlin,
        Setting::PsiC,
        &Outcome::Detected(l.clone()),
    )
    .expect("L is in the basis");
    let sqrt_many_spaces = many_spaces.sqrt();
    let mut passed = true;
    let mut checked = 0u64;
    let mut max_dev: f64 = 0.0;
    for record in records.iter().filter(|r| r.setting == Setting::PsiC) {
        let confirmations =
            final_confirmations(maudlin, record).expect("valid scenario and record");
        let cw = confirmations
            .answering_confirmations()
            .find(|c| c.mode == l);
        match cw {
            Some(component) => {
                let magnitude = component.amplitude.norm();
                let dev = (magnitude - INV_SQRT_2)
                    .abs()
                    .max((magnitude - sqrt_many_spaces).abs());
                max_dev = max_dev.max(dev);
                if dev > CANCEL_TOL {
                    passed = false;
                }
            }
            None => passed = false,
        }
        checked += 1;
    }
    result(
        5,
        "confirmation amplitude wholeness",
        passed && checked > 0,
        format!(
            "relocated CW amplitude = 1/sqrt(2) = sqrt(P_psi(L)) in all {checked} psi_C trials (max dev {max_dev:.2e})"
        ),
    )
}

fn trivial_null_frequency(
    trivial: &Scenario,
    seed: u64,
    trials: u64,
    bound: f64,
) -> CriterionResult {
    let table = run_batch(trivial, seed, trials).expect("valid scenario");
    let f_null = table.count(&Outcome::Null) as f64 / table.total() as f64;
    let dev = (f_null - 0.5).abs();
    result(
        6,
        "trivial-variant null outcome",
        dev <= bound,
        format!("f(null) = {f_null:.5} at N={trials} (|dev| = {dev:.5}, bound {bound})"),
    )
}

fn coin_loop_law() -> CriterionResult {
    let mut violations = 0u64;
    for i in 0..COIN_TRIALS {
        let record = coin_loop_trial(0, i);
        if record.toss_occurred && !record.heads {
            violations += 1;
        }
    }
    let many_spaces_ok = COIN_LOOP_MANY_SPACES_HEADS == 0.5;
    result(
        7,
        "coin-toss loop",
        violations == 0 && many_spaces_ok,
        format!(
            "{violations} toss-without-heads records over {COIN_TRIALS} trials; many-spaces P(heads) = {COIN_LOOP_MANY_SPACES_HEADS}"
        ),
    )
}

/// A random normalized emitter state with a full absorber set, driven by a
/// counter-based stream so the sweep is reproducible.
fn random_complete_configuration(seed: u64, index: u64) -> (WaveSet, WaveSet) {
    let mut stream = TrialStream::new(seed, index);
    let size = (index % 6 + 1) as usize;
    let mut raw: Vec<(ModeLabel, f64, f64)> = (0..size)
        .map(|k| {
            let re = 2.0 * stream.next_unit() - 1.0;
            let im = 2.0 * stream.next_unit() - 1.0;
            (ModeLabel::new(format!("m{k}")), re, im)
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, re, im)| re * re + im * im).sum();
    if total < 1e-6 {
        raw[0].1 = 1.0;
    }
    let total: f64 = raw.iter().map(|(_, re, im)| re * re + im * im).sum();
    let scale = total.sqrt();
    let state: BTreeMap<ModeLabel, Amplitude> = raw
        .into_iter()
        .map(|(m, re, im)| (m, Amplitude::new(re / scale, im / scale)))
        .collect();
    let offer = emit_offer(&state).expect("normalized by construction");
    let mut confirmations = WaveSet::new();
    for (k, mode) in state.keys().enumerate() {
        let component = offer
            .retarded_connecting_offer(mode)
            .expect("every mode has an offer component");
        confirmations.extend(
            respond_confirmation(component, &AbsorberId::new(format!("D{k}")))
                .expect("retarded offer"),
        );
    }
    (offer, confirmations)
}

fn cancellation_sweep(seed: u64) -> CriterionResult {
    let mut max_residual: f64 = 0.0;
    for index in 0..CANCELLATION_STATES as u64 {
        let (offer, confirmations) = random_complete_configuration(seed, index);
        let field = residual_field(&offer.union(&confirmations));
        for ((support, _), amp) in &field {
            if *support != Support::ConnectingWorldline {
                max_residual = max_residual.max(amp.norm());
            }
        }
    }
    result(
        8,
        "advanced-wave cancellation",
        max_residual <= CANCEL_TOL,
        format!(
            "max residual outside connecting worldlines = {max_residual:.2e} over {CANCELLATION_STATES} random states (bases 1-6, tol {CANCEL_TOL:.0e})"
        ),
    )
}

fn bilking_inaccessibility(
    maudlin: &Scenario,
    maudlin_records: &[TrialRecord],
    trivial: &Scenario,
    trivial_records: &[TrialRecord],
) -> CriterionResult {
    let mut probes = 0u64;
    let mut passed = true;
    for (scenario, records) in [(maudlin, maudlin_records), (trivial, trivial_records)] {
        for record in records {
            if bilking_probe(scenario, record) != ProbeResult::NoDetection {
                passed = false;
            }
            probes += 1;
        }
    }

    // Field-by-field: the pre-emission observables of an R-branch trial and
    // an L-branch trial are identical.
    let success = maudlin_records.iter().find(|r| r.branch_succeeded);
    let failure = maudlin_records.iter().find(|r| !r.branch_succeeded);
    let mut fields_equal = 0usize;
    match (success, failure) {
        (Some(s), Some(f)) => {
            let view_s = crate::scenario::pre_emission_observables(maudlin, s);
            let view_f = crate::scenario::pre_emission_observables(maudlin, f);
            let checks = [
                view_s.emitter_state == view_f.emitter_state,
                view_s.absorber_layout == view_f.absorber_layout,
                view_s.blocked == view_f.blocked,
                view_s.confirmed_modes == view_f.confirmed_modes,
                view_s.timeline == view_f.timeline,
                view_s.branch_mode == view_f.branch_mode,
            ];
            fields_equal = checks.iter().filter(|&&ok| ok).count();
            if checks.iter().any(|&ok| !ok) {
                passed = false;
            }
        }
        _ => passed = false,
    }
    result(
        9,
        "bilking inaccessibility",
        passed,
        format!(
            "{probes} probes all NoDetection; {fields_equal}/6 pre-emission fields identical across branches"
        ),
    )
}

fn csv_report(scenario: &Scenario, seed: u64, trials: u64) -> String {
    let batch = run_batch(scenario, seed, trials).expect("valid scenario");
    let reports = consistency_report(scenario, &batch).expect("matching batch");
    render_csv(&reports)
}

fn report_determinism(maudlin: &Scenario, trials: u64) -> CriterionResult {
    let seed = 42;
    let first = csv_report(maudlin, seed, trials);
    let second = csv_report(maudlin, seed, trials);
    result(
        10,
        "report determinism",
        first == second,
        format!(
            "two renders of (maudlin, seed={seed}, trials={trials}) produced {} identical bytes",
            first.len()
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let results = run_acceptance(&VerifyConfig {
            seed: 42,
            quick: true,
        });
        assert_eq!(results.len(), 10);
        for r in &results {
            assert!(r.passed, "criterion {} ({}) failed: {}", r.index, r.name, r.detail);
        }
    }

    #[test]
    fn frequency_bounds_are_the_pinned_four_sigma_values() {
        // 4·√(0.25/N), rounded the way the bounds are stated.
        assert!((crate::analysis::binomial_four_sigma(0.5, FULL_TRIALS) - 0.0063246).abs() < 1e-6);
        assert!(FULL_FREQ_BOUND <= crate::analysis::binomial_four_sigma(0.5, FULL_TRIALS));
        assert!((crate::analysis::binomial_four_sigma(0.5, QUICK_TRIALS) - 0.02).abs() < 1e-12);
        assert_eq!(QUICK_FREQ_BOUND, 0.02);
    }
}
