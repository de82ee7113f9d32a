//! Flat key-value text format for scenario files.
//!
//! ```text
//! # '#' starts a comment; blank lines are ignored.
//! [emitter]
//! L = 1/sqrt(2)        # exact amplitude num/sqrt(root)
//! R = 0.6+0.8i         # complex amplitude re+imi (or a bare real)
//!
//! [absorber.A]
//! position = 1         # sign encodes the side relative to the emitter
//! mode = R
//! relocation.trigger_time = 1      # optional; all three relocation keys
//! relocation.new_position = -2     # must appear together
//! relocation.new_mode = L
//!
//! [timeline]
//! t0 = 0
//! t1 = 1
//! t2 = 2
//!
//! [branch]
//! mode = R
//! ```
//!
//! Emitter entries declare the basis in file order. Sections may appear in
//! any order; serialization emits them in the order shown above. Exact
//! `num/sqrt(root)` amplitudes survive a round trip exactly; decimal
//! amplitudes round-trip bit-identically via shortest-representation
//! printing.

use std::fmt;

use thiserror::Error;

use crate::scenario::{
    Absorber, AmplitudeExpr, Relocation, RelocationTrigger, Scenario, Timeline,
};
use crate::wave::{AbsorberId, ModeLabel};

/// A parse failure, naming the line and field it occurred on.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}: field '{field}': {message}")]
pub struct FormatError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

fn err(line: usize, field: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError {
        line,
        field: field.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Default)]
struct AbsorberDraft {
    header_line: usize,
    position: Option<f64>,
    mode: Option<ModeLabel>,
    trigger_time: Option<f64>,
    new_position: Option<f64>,
    new_mode: Option<ModeLabel>,
}

enum Section {
    None,
    Emitter,
    Absorber(String, AbsorberDraft),
    Timeline,
    Branch,
}

/// Parse a scenario from its text form. Purely syntactic; callers should
/// run `Scenario::validate` afterwards.
pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    let mut modes: Vec<(ModeLabel, AmplitudeExpr)> = Vec::new();
    let mut absorbers: Vec<Absorber> = Vec::new();
    let mut t0: Option<f64> = None;
    let mut t1: Option<f64> = None;
    let mut t2: Option<f64> = None;
    let mut branch_mode: Option<ModeLabel> = None;
    let mut saw_emitter = false;
    let mut saw_timeline = false;
    let mut saw_branch = false;

    let mut section = Section::None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        if let Some(header) = trimmed.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section", "unterminated section header"))?
                .trim();
            finish_section(section, &mut absorbers)?;
            section = match header {
                "emitter" => {
                    if saw_emitter {
                        return Err(err(line, "emitter", "duplicate [emitter] section"));
                    }
                    saw_emitter = true;
                    Section::Emitter
                }
                "timeline" => {
                    if saw_timeline {
                        return Err(err(line, "timeline", "duplicate [timeline] section"));
                    }
                    saw_timeline = true;
                    Section::Timeline
                }
                "branch" => {
                    if saw_branch {
                        return Err(err(line, "branch", "duplicate [branch] section"));
                    }
                    saw_branch = true;
                    Section::Branch
                }
                other => match other.strip_prefix("absorber.") {
                    Some(id) if !id.is_empty() => {
                        if absorbers.iter().any(|a| a.id.name() == id) {
                            return Err(err(
                                line,
                                format!("absorber.{id}"),
                                "duplicate absorber section",
                            ));
                        }
                        Section::Absorber(
                            id.to_string(),
                            AbsorberDraft {
                                header_line: line,
                                ..AbsorberDraft::default()
                            },
                        )
                    }
                    _ => {
                        return Err(err(
                            line,
                            other,
                            "unknown section (expected emitter, absorber.<id>, timeline, branch)",
                        ))
                    }
                },
            };
            continue;
        }

        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| err(line, trimmed, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(err(line, "", "empty key"));
        }
        if value.is_empty() {
            return Err(err(line, key, "empty value"));
        }

        match &mut section {
            Section::None => {
                return Err(err(line, key, "key outside of any section"));
            }
            Section::Emitter => {
                let mode = ModeLabel::new(key);
                if modes.iter().any(|(m, _)| m == &mode) {
                    return Err(err(line, key, "duplicate emitter mode"));
                }
                let expr =
                    parse_amplitude(value).map_err(|message| err(line, key, message))?;
                modes.push((mode, expr));
            }
            Section::Absorber(_, draft) => match key {
                "position" => {
                    draft.position = Some(parse_number(value, line, key)?);
                }
                "mode" => {
                    draft.mode = Some(ModeLabel::new(value));
                }
                "relocation.trigger_time" => {
                    draft.trigger_time = Some(parse_number(value, line, key)?);
                }
                "relocation.new_position" => {
                    draft.new_position = Some(parse_number(value, line, key)?);
                }
                "relocation.new_mode" => {
                    draft.new_mode = Some(ModeLabel::new(value));
                }
                other => {
                    return Err(err(line, other, "unknown absorber key"));
                }
            },
            Section::Timeline => {
                let slot = match key {
                    "t0" => &mut t0,
                    "t1" => &mut t1,
                    "t2" => &mut t2,
                    other => return Err(err(line, other, "unknown timeline key")),
                };
                if slot.is_some() {
                    return Err(err(line, key, "duplicate timeline key"));
                }
                *slot = Some(parse_number(value, line, key)?);
            }
            Section::Branch => match key {
                "mode" => {
                    if branch_mode.is_some() {
                        return Err(err(line, key, "duplicate branch mode"));
                    }
                    branch_mode = Some(ModeLabel::new(value));
                }
                other => return Err(err(line, other, "unknown branch key")),
            },
        }
    }
    finish_section(section, &mut absorbers)?;

    if modes.is_empty() {
        return Err(err(last_line, "emitter", "missing [emitter] section with at least one mode"));
    }
    let timeline = Timeline {
        t0: t0.ok_or_else(|| err(last_line, "t0", "missing timeline key"))?,
        t1: t1.ok_or_else(|| err(last_line, "t1", "missing timeline key"))?,
        t2: t2.ok_or_else(|| err(last_line, "t2", "missing timeline key"))?,
    };
    let branch_mode =
        branch_mode.ok_or_else(|| err(last_line, "branch.mode", "missing [branch] section"))?;

    Ok(Scenario {
        modes,
        absorbers,
        timeline,
        branch_mode,
    })
}

fn finish_section(
    section: Section,
    absorbers: &mut Vec<Absorber>,
) -> Result<(), FormatError> {
    let Section::Absorber(id, draft) = section else {
        return Ok(());
    };
    let line = draft.header_line;
    let field = format!("absorber.{id}");
    let position = draft
        .position
        .ok_or_else(|| err(line, format!("{field}.position"), "missing key"))?;
    let mode = draft
        .mode
        .ok_or_else(|| err(line, format!("{field}.mode"), "missing key"))?;
    let relocation_keys =
        [draft.trigger_time.is_some(), draft.new_position.is_some(), draft.new_mode.is_some()];
    let relocation = match relocation_keys.iter().filter(|&&p| p).count() {
        0 => None,
        3 => Some(Relocation {
            trigger: RelocationTrigger::OnNullAt(draft.trigger_time.unwrap()),
            new_position: draft.new_position.unwrap(),
            new_mode: draft.new_mode.unwrap(),
        }),
        _ => {
            return Err(err(
                line,
                format!("{field}.relocation"),
                "relocation requires trigger_time, new_position and new_mode together",
            ))
        }
    };
    absorbers.push(Absorber {
        id: AbsorberId::new(id),
        position,
        mode,
        relocation,
    });
    Ok(())
}

fn parse_number(value: &str, line: usize, field: &str) -> Result<f64, FormatError> {
    let x: f64 = value
        .parse()
        .map_err(|_| err(line, field, format!("expected a number, got '{value}'")))?;
    if !x.is_finite() {
        return Err(err(line, field, "number must be finite"));
    }
    Ok(x)
}

/// Parse one amplitude value: `num/sqrt(root)`, `re+imi`, or a bare real.
fn parse_amplitude(value: &str) -> Result<AmplitudeExpr, String> {
    if let Some((num_part, rest)) = value.split_once("/sqrt(") {
        let root_part = rest
            .strip_suffix(')')
            .ok_or("unterminated sqrt in amplitude")?;
        let num: i64 = num_part
            .parse()
            .map_err(|_| format!("expected an integer numerator, got '{num_part}'"))?;
        let root: i64 = root_part
            .parse()
            .map_err(|_| format!("expected an integer radicand, got '{root_part}'"))?;
        if root < 1 {
            return Err("radicand must be ≥ 1".to_string());
        }
        if num.checked_mul(num).is_none() {
            return Err("numerator too large for exact arithmetic".to_string());
        }
        return Ok(AmplitudeExpr::root_fraction(num, root));
    }

    if let Some(body) = value.strip_suffix('i') {
        let split = body
            .char_indices()
            .rev()
            .find(|&(i, c)| {
                i > 0 && (c == '+' || c == '-') && {
                    let prev = body.as_bytes()[i - 1];
                    prev != b'e' && prev != b'E'
                }
            })
            .map(|(i, _)| i)
            .ok_or("complex amplitude must look like re+imi")?;
        let re: f64 = body[..split]
            .parse()
            .map_err(|_| format!("bad real part '{}'", &body[..split]))?;
        let im: f64 = body[split..]
            .parse()
            .map_err(|_| format!("bad imaginary part '{}'", &body[split..]))?;
        if !re.is_finite() || !im.is_finite() {
            return Err("amplitude must be finite".to_string());
        }
        return Ok(AmplitudeExpr::complex(re, im));
    }

    let re: f64 = value
        .parse()
        .map_err(|_| format!("expected an amplitude, got '{value}'"))?;
    if !re.is_finite() {
        return Err("amplitude must be finite".to_string());
    }
    Ok(AmplitudeExpr::complex(re, 0.0))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

struct AmplitudeText<'a>(&'a AmplitudeExpr);

impl fmt::Display for AmplitudeText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            AmplitudeExpr::RootFraction { num, root } => write!(f, "{num}/sqrt({root})"),
            AmplitudeExpr::Complex(amp) => write!(f, "{amp}"),
        }
    }
}

/// Render a scenario in its canonical text form.
pub fn scenario_to_text(scenario: &Scenario) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    out.push_str("[emitter]\n");
    for (mode, expr) in &scenario.modes {
        writeln!(out, "{mode} = {}", AmplitudeText(expr)).expect("write to string");
    }
    for absorber in &scenario.absorbers {
        writeln!(out, "\n[absorber.{}]", absorber.id).expect("write to string");
        writeln!(out, "position = {}", absorber.position).expect("write to string");
        writeln!(out, "mode = {}", absorber.mode).expect("write to string");
        if let Some(relocation) = &absorber.relocation {
            let RelocationTrigger::OnNullAt(t) = relocation.trigger;
            writeln!(out, "relocation.trigger_time = {t}").expect("write to string");
            writeln!(out, "relocation.new_position = {}", relocation.new_position)
                .expect("write to string");
            writeln!(out, "relocation.new_mode = {}", relocation.new_mode)
                .expect("write to string");
        }
    }
    let t = &scenario.timeline;
    out.push_str("\n[timeline]\n");
    writeln!(out, "t0 = {}", t.t0).expect("write to string");
    writeln!(out, "t1 = {}", t.t1).expect("write to string");
    writeln!(out, "t2 = {}", t.t2).expect("write to string");
    out.push_str("\n[branch]\n");
    writeln!(out, "mode = {}", scenario.branch_mode).expect("write to string");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_maudlin;

    #[test]
    fn maudlin_round_trips() {
        let scenario = build_maudlin();
        let text = scenario_to_text(&scenario);
        let parsed = parse_scenario(&text).unwrap();
        assert_eq!(parsed, scenario);
        parsed.validate().unwrap();
    }

    #[test]
    fn parses_handwritten_maudlin() {
        let text = "\
# two-detector arrangement
[emitter]
L = 1/sqrt(2)
R = 1/sqrt(2)

[absorber.A]
position = 1
mode = R

[absorber.B]
position = 2
mode = R
relocation.trigger_time = 1
relocation.new_position = -2
relocation.new_mode = L

[timeline]
t0 = 0
t1 = 1
t2 = 2

[branch]
mode = R
";
        assert_eq!(parse_scenario(text).unwrap(), build_maudlin());
    }

    #[test]
    fn parses_complex_amplitudes() {
        let text = "\
[emitter]
L = 0.6+0.0i
R = 0.0-0.8i
[absorber.A]
position = 1
mode = R
[timeline]
t0 = 0
t1 = 1
t2 = 2
[branch]
mode = R
";
        let scenario = parse_scenario(text).unwrap();
        assert_eq!(scenario.modes[0].1, AmplitudeExpr::complex(0.6, 0.0));
        assert_eq!(scenario.modes[1].1, AmplitudeExpr::complex(0.0, -0.8));
    }

    #[test]
    fn parses_bare_real_amplitude() {
        let text = "\
[emitter]
R = 1
[absorber.A]
position = 1
mode = R
[timeline]
t0 = 0
t1 = 1
t2 = 2
[branch]
mode = R
";
        let scenario = parse_scenario(text).unwrap();
        assert_eq!(scenario.modes[0].1, AmplitudeExpr::complex(1.0, 0.0));
        scenario.validate().unwrap();
    }

    #[test]
    fn error_names_line_and_field() {
        let text = "\
[emitter]
L = 1/sqrt(2)
R = 1/sqrt(2)
[absorber.A]
position = north
mode = R
";
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.line, 5);
        assert_eq!(e.field, "position");
        assert!(e.to_string().contains("line 5"), "{e}");
    }

    #[test]
    fn error_on_partial_relocation() {
        let text = "\
[emitter]
R = 1
[absorber.A]
position = 1
mode = R
relocation.trigger_time = 1
[timeline]
t0 = 0
t1 = 1
t2 = 2
[branch]
mode = R
";
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.field, "absorber.A.relocation");
        assert_eq!(e.line, 3);
    }

    #[test]
    fn error_on_missing_sections() {
        let e = parse_scenario("[emitter]\nR = 1\n").unwrap_err();
        assert_eq!(e.field, "t0");

        let e = parse_scenario("").unwrap_err();
        assert_eq!(e.field, "emitter");
    }

    #[test]
    fn error_on_unknown_key() {
        let text = "\
[emitter]
R = 1
[absorber.A]
position = 1
mode = R
speed = 3
";
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.field, "speed");
        assert_eq!(e.line, 6);
    }

    #[test]
    fn error_on_duplicate_mode() {
        let text = "[emitter]\nR = 1\nR = 0\n";
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.field, "R");
        assert_eq!(e.line, 3);
    }

    #[test]
    fn rejects_non_finite_amplitudes() {
        let e = parse_scenario("[emitter]\nR = inf\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn exponent_notation_in_complex_parts() {
        let expr = parse_amplitude("1e-1+2e-1i").unwrap();
        assert_eq!(expr, AmplitudeExpr::complex(0.1, 0.2));
    }
}
