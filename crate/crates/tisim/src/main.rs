//! Command-line front end: run seeded trial batches of the built-in or
//! file-defined scenarios, emit consistency reports as CSV or JSON, and run
//! the acceptance suite (`tisim verify`).
//!
//! Exit codes: 0 on success, 2 on configuration or parse errors (with a
//! diagnostic naming the offending flag or file line), 1 on internal
//! invariant violations (with a reproduction seed) or failed acceptance
//! criteria.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Ratio;

use tisim::analysis::{
    binomial_four_sigma, coin_loop_batch, conditional_class_verdict, consistency_report,
    frequency_verdict, ratio_to_f64, ConsistencyReport, Measure, COIN_LOOP_MANY_SPACES_HEADS,
};
use tisim::format::parse_scenario;
use tisim::report::{render_csv, render_json};
use tisim::scenario::{build_maudlin, build_trivial, run_batch, FrequencyTable, Scenario};
use tisim::verify::{run_acceptance, VerifyConfig};

#[derive(Parser)]
#[command(
    name = "tisim",
    version,
    about = "Seeded trial batches and consistency reports for experiments whose apparatus depends on measurement outcomes"
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Scenario name (maudlin, trivial, coin-loop) or path to a scenario file.
    #[arg(long, value_name = "NAME|PATH")]
    scenario: Option<String>,

    /// Number of trials to run.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,

    /// Base seed for the per-trial random streams.
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,

    /// Write the report to this file instead of standard output.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run the acceptance suite; one pass/fail line per criterion.
    Verify {
        /// Base seed for the suite's batches.
        #[arg(long, value_name = "U64", default_value_t = 42)]
        seed: u64,

        /// Reduced batches (N=10000) with widened frequency bounds (±0.02).
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

enum CliError {
    /// Bad flags, files, or scenario definitions. Exit 2.
    Config(String),
    /// A postcondition the simulator guarantees did not hold. Exit 1.
    Internal(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Verify { seed, quick }) => run_verify(seed, quick),
        None => match run_report(&cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(CliError::Config(message)) => {
                eprintln!("error: {message}");
                ExitCode::from(2)
            }
            Err(CliError::Internal(message)) => {
                eprintln!("error: internal invariant violation: {message}");
                ExitCode::from(1)
            }
        },
    }
}

fn run_verify(seed: u64, quick: bool) -> ExitCode {
    let results = run_acceptance(&VerifyConfig { seed, quick });
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:>2}. {} — {}", r.index, r.name, r.detail);
        if !r.passed {
            failed.push(r.index);
        }
    }
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        eprintln!("error: {} of {} criteria failed: {failed:?}", failed.len(), results.len());
        ExitCode::from(1)
    }
}

fn run_report(cli: &Cli) -> Result<(), CliError> {
    let Some(scenario_arg) = cli.scenario.as_deref() else {
        return Err(CliError::Config("--scenario is required".to_string()));
    };
    let Some(trials) = cli.trials else {
        return Err(CliError::Config("--trials is required".to_string()));
    };

    let reports = match scenario_arg {
        "coin-loop" => coin_loop_reports(cli.seed, trials),
        name => {
            let scenario = resolve_scenario(name)?;
            scenario_reports(name, &scenario, cli.seed, trials)?
        }
    };

    let rendered = match cli.format {
        ReportFormat::Csv => render_csv(&reports),
        ReportFormat::Json => render_json(&reports),
    };
    match &cli.output {
        Some(path) => fs::write(path, rendered).map_err(|e| {
            CliError::Config(format!("--output {}: {e}", path.display()))
        })?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn resolve_scenario(name: &str) -> Result<Scenario, CliError> {
    let scenario = match name {
        "maudlin" => build_maudlin(),
        "trivial" => build_trivial(),
        path => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("--scenario {path}: {e}"))
            })?;
            parse_scenario(&text)
                .map_err(|e| CliError::Config(format!("--scenario {path}: {e}")))?
        }
    };
    scenario
        .validate()
        .map_err(|e| CliError::Config(format!("--scenario {name}: {e}")))?;
    Ok(scenario)
}

fn scenario_reports(
    name: &str,
    scenario: &Scenario,
    seed: u64,
    trials: u64,
) -> Result<Vec<ConsistencyReport>, CliError> {
    let reproduce = format!("reproduce with --scenario {name} --seed {seed} --trials {trials}");
    let table = run_batch(scenario, seed, trials)
        .map_err(|e| CliError::Config(format!("--scenario {name}: {e}")))?;
    if !table.is_consistent() || table.total() != trials {
        return Err(CliError::Internal(format!("frequency counts do not sum to the trial count; {reproduce}")));
    }
    let reports = consistency_report(scenario, &table)
        .map_err(|e| CliError::Internal(format!("{e}; {reproduce}")))?;
    print_summary(name, seed, &table, &reports);
    Ok(reports)
}

/// Human-readable batch summary on stderr; the report itself is the only
/// thing written to stdout or the output file.
fn print_summary(name: &str, seed: u64, table: &FrequencyTable, reports: &[ConsistencyReport]) {
    eprintln!("# scenario {name}: {} trials, seed {seed}", table.total());
    for (outcome, count) in table.outcomes() {
        eprintln!("#   count({outcome}) = {count}");
    }
    for ((outcome, setting), ratio) in table.conditionals() {
        eprintln!("#   f({outcome} | {setting}) = {ratio}");
    }
    for report in reports {
        if report.loop_flag {
            let verdict = conditional_class_verdict(
                report.many_spaces_value,
                report.big_space_conditional.to_f64(),
                report.loop_flag,
            );
            eprintln!(
                "#   many-spaces P({}) = {} vs conditional {} in its own setting class: {verdict}",
                report.outcome, report.many_spaces_value, report.big_space_conditional
            );
        }
    }
}

fn coin_loop_reports(seed: u64, trials: u64) -> Vec<ConsistencyReport> {
    let counts = coin_loop_batch(seed, trials);
    let observed_frequency = Ratio::new(counts.heads_given_toss, counts.total);
    let conditional = Measure::Exact(Ratio::new(
        counts.heads_given_toss as i64,
        counts.tosses as i64,
    ));
    let verdict = frequency_verdict(
        COIN_LOOP_MANY_SPACES_HEADS,
        ratio_to_f64(observed_frequency),
        true,
        binomial_four_sigma(COIN_LOOP_MANY_SPACES_HEADS, counts.total),
    );
    eprintln!("# scenario coin-loop: {} trials, seed {seed}", counts.total);
    eprintln!("#   count(toss) = {}", counts.tosses);
    eprintln!("#   f(heads | toss) = {conditional}");
    vec![ConsistencyReport {
        outcome: "heads".to_string(),
        many_spaces_value: COIN_LOOP_MANY_SPACES_HEADS,
        observed_frequency,
        big_space_conditional: conditional,
        loop_flag: true,
        verdict,
    }]
}
