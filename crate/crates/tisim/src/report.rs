//! Consistency-report serialization.
//!
//! Column order and field names are fixed: outcome, many_spaces, frequency,
//! conditional, loop_flag, verdict. Frequencies and conditionals are
//! rendered as exact fractions (reduced; just the integer when whole);
//! many-spaces values use shortest-roundtrip f64 printing. The same
//! (scenario, seed, trials) input therefore always renders to the same
//! bytes.

use serde::Serialize;

use crate::analysis::ConsistencyReport;

#[derive(Serialize)]
struct Row<'a> {
    outcome: &'a str,
    many_spaces: f64,
    frequency: String,
    conditional: String,
    loop_flag: bool,
    verdict: String,
}

impl<'a> Row<'a> {
    fn of(report: &'a ConsistencyReport) -> Row<'a> {
        Row {
            outcome: &report.outcome,
            many_spaces: report.many_spaces_value,
            frequency: report.observed_frequency.to_string(),
            conditional: report.big_space_conditional.to_string(),
            loop_flag: report.loop_flag,
            verdict: report.verdict.to_string(),
        }
    }
}

pub fn render_csv(reports: &[ConsistencyReport]) -> String {
    let mut out = String::from("outcome,many_spaces,frequency,conditional,loop_flag,verdict\n");
    for report in reports {
        let row = Row::of(report);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.outcome, row.many_spaces, row.frequency, row.conditional, row.loop_flag, row.verdict
        ));
    }
    out
}

pub fn render_json(reports: &[ConsistencyReport]) -> String {
    let rows: Vec<Row> = reports.iter().map(Row::of).collect();
    let mut out = serde_json::to_string_pretty(&rows).expect("report rows serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{Measure, Verdict};
    use num_rational::Ratio;

    fn sample() -> Vec<ConsistencyReport> {
        vec![ConsistencyReport {
            outcome: "L_d".to_string(),
            many_spaces_value: 0.5,
            observed_frequency: Ratio::new(1, 2),
            big_space_conditional: Measure::one(),
            loop_flag: true,
            verdict: Verdict::ConsistentViaConditional,
        }]
    }

    #[test]
    fn csv_has_the_fixed_header_and_row_shape() {
        let csv = render_csv(&sample());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("outcome,many_spaces,frequency,conditional,loop_flag,verdict")
        );
        assert_eq!(
            lines.next(),
            Some("L_d,0.5,1/2,1,true,consistent_via_conditional")
        );
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn json_mirrors_the_csv_fields() {
        let json = render_json(&sample());
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let row = &value[0];
        assert_eq!(row["outcome"], "L_d");
        assert_eq!(row["many_spaces"], 0.5);
        assert_eq!(row["frequency"], "1/2");
        assert_eq!(row["conditional"], "1");
        assert_eq!(row["loop_flag"], true);
        assert_eq!(row["verdict"], "consistent_via_conditional");
    }

    #[test]
    fn rendering_is_reproducible() {
        assert_eq!(render_csv(&sample()), render_csv(&sample()));
        assert_eq!(render_json(&sample()), render_json(&sample()));
    }
}
