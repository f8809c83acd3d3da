//! Per-state score tables and their CSV, JSON and markdown renderings.
//!
//! Rows hold exact ratios. Percentages with one decimal appear only when a
//! table is written out.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use num::{BigInt, Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError, Ratio, Scorer};
use crate::model::{ConstraintState, EvaluationRecord};

/// Placeholder for a state with no instances.
pub const EMPTY_CELL: &str = "—";

pub const SCORE_COLUMNS: [&str; 8] = [
    "t",
    "n_instances",
    "pass_at_1",
    "constraint_following",
    "convergent",
    "divergent",
    "neogauge",
    "cumulative_neogauge",
];

pub const HUMAN_COLUMNS: [&str; 4] = ["t", "n_instances", "human_convergent", "human_divergent"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub t: usize,
    pub n_instances: usize,
    #[serde(with = "opt_ratio")]
    pub pass_at_1: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub constraint_following: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub convergent: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub divergent: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub neogauge: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub cumulative_neogauge: Option<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanBaselineRow {
    pub t: usize,
    pub n_instances: usize,
    #[serde(with = "opt_ratio")]
    pub convergent: Option<Ratio>,
    #[serde(with = "opt_ratio")]
    pub divergent: Option<Ratio>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human: Vec<HumanBaselineRow>,
}

fn present(value: Result<Ratio, MetricsError>) -> Result<Option<Ratio>, MetricsError> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::EmptyState { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores `records` for every state in `states`. An empty record list gives
/// an empty table.
pub fn score_records(records: &[EvaluationRecord], scorer: &Scorer<'_>, states: RangeInclusive<usize>) -> Result<Vec<ScoreRow>, MetricsError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for t in states {
        rows.push(ScoreRow {
            t,
            n_instances: metrics::at_state(records, t).count(),
            pass_at_1: present(metrics::pass_at_1(records, t))?,
            constraint_following: present(metrics::constraint_following(records, t))?,
            convergent: present(metrics::convergent_at(records, t))?,
            divergent: present(scorer.divergent_at(records, t))?,
            neogauge: present(scorer.neogauge_at(records, t))?,
            cumulative_neogauge: Some(scorer.cumulative_neogauge(records, t)?),
        });
    }
    Ok(rows)
}

/// Human baselines per state. Divergence does not depend on the state and
/// repeats on every row; it is empty when some problem has fewer than two
/// human solutions.
pub fn human_baseline(scorer: &Scorer<'_>, instances: &[ConstraintState], states: RangeInclusive<usize>) -> Result<Vec<HumanBaselineRow>, MetricsError> {
    let divergent = match metrics::human_divergent(scorer.profiles()) {
        Ok(v) => Some(v),
        Err(MetricsError::MDeficient { .. } | MetricsError::NoProfiles) => None,
        Err(e) => return Err(e),
    };
    states
        .map(|t| {
            Ok(HumanBaselineRow {
                t,
                n_instances: instances.iter().filter(|s| s.constraints.len() == t).count(),
                convergent: present(metrics::human_convergent(scorer.profiles(), instances, t))?,
                divergent: divergent.clone(),
            })
        })
        .collect()
}

/// `x` as a percentage with one decimal, rounding half away from zero.
pub fn percent(x: &Ratio) -> String {
    let tenths = (x * Ratio::from_integer(BigInt::from(1000))).round().to_integer();
    let sign = if tenths.is_negative() { "-" } else { "" };
    let (whole, frac) = tenths.abs().div_rem(&BigInt::from(10));
    format!("{sign}{whole}.{frac}")
}

/// Reads a one-decimal percentage back into an exact ratio.
pub fn parse_percent(cell: &str) -> Option<Ratio> {
    let (whole, frac) = cell.split_once('.').unwrap_or((cell, ""));
    if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let scale = BigInt::from(10u32).pow(frac.len() as u32);
    let digits: BigInt = format!("{whole}{frac}").parse().ok()?;
    Some(Ratio::new(digits, scale * BigInt::from(100)))
}

fn cell(value: &Option<Ratio>) -> String {
    value.as_ref().map_or_else(|| EMPTY_CELL.to_string(), percent)
}

impl ScoreRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.n_instances.to_string(),
            cell(&self.pass_at_1),
            cell(&self.constraint_following),
            cell(&self.convergent),
            cell(&self.divergent),
            cell(&self.neogauge),
            cell(&self.cumulative_neogauge),
        ]
    }
}

impl HumanBaselineRow {
    fn cells(&self) -> Vec<String> {
        vec![self.t.to_string(), self.n_instances.to_string(), cell(&self.convergent), cell(&self.divergent)]
    }
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String, ReportError> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("cells are utf-8"))
}

fn markdown(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

impl ScoreReport {
    pub fn to_csv(&self) -> Result<String, ReportError> {
        csv_string(&SCORE_COLUMNS, self.rows.iter().map(ScoreRow::cells))
    }

    pub fn human_csv(&self) -> Result<String, ReportError> {
        csv_string(&HUMAN_COLUMNS, self.human.iter().map(HumanBaselineRow::cells))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = markdown(&SCORE_COLUMNS, self.rows.iter().map(ScoreRow::cells));
        if !self.human.is_empty() {
            out.push('\n');
            out.push_str(&markdown(&HUMAN_COLUMNS, self.human.iter().map(HumanBaselineRow::cells)));
        }
        out
    }

    /// Exact values as `"num/den"` strings.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports always serialise");
        text.push('\n');
        text
    }

    /// Parses a score CSV of percentages into exact rows.
    pub fn from_csv(text: &str) -> Result<ScoreReport, ReportError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != SCORE_COLUMNS {
            return Err(ReportError::Parse {
                row: 0,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |message: String| ReportError::Parse { row: i + 1, message };
            let int = |k: usize| record[k].parse::<usize>().map_err(|e| bad(format!("{}: {e}", SCORE_COLUMNS[k])));
            let pct = |k: usize| -> Result<Option<Ratio>, ReportError> {
                match &record[k] {
                    EMPTY_CELL => Ok(None),
                    text => parse_percent(text)
                        .map(Some)
                        .ok_or_else(|| bad(format!("{}: not a percentage: {text:?}", SCORE_COLUMNS[k]))),
                }
            };
            rows.push(ScoreRow {
                t: int(0)?,
                n_instances: int(1)?,
                pass_at_1: pct(2)?,
                constraint_following: pct(3)?,
                convergent: pct(4)?,
                divergent: pct(5)?,
                neogauge: pct(6)?,
                cumulative_neogauge: pct(7)?,
            });
        }
        Ok(ScoreReport { rows, human: Vec::new() })
    }
}

/// A broken report invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub t: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t={}: {}", self.t, self.message)
    }
}

/// Where the rows came from. Published tables at one-decimal precision can
/// break identities that exact scores always satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SelfProduced,
    External,
}

/// Checks bounds, NeoGauge dominance, full constraint following at `t = 0`,
/// and (for self-produced data) convergent ≤ pass@1.
pub fn validate_report(rows: &[ScoreRow], provenance: Provenance) -> Vec<Violation> {
    let mut out = Vec::new();
    let zero = Ratio::zero();
    let one = Ratio::one();
    for row in rows {
        let mut flag = |message: String| out.push(Violation { t: row.t, message });
        let named = [
            ("pass_at_1", &row.pass_at_1),
            ("constraint_following", &row.constraint_following),
            ("convergent", &row.convergent),
            ("divergent", &row.divergent),
            ("neogauge", &row.neogauge),
        ];
        for (name, value) in named {
            if let Some(v) = value {
                if v < &zero || v > &one {
                    flag(format!("{name} = {v} outside [0, 1]"));
                }
            }
        }
        if let Some(c) = &row.cumulative_neogauge {
            let cap = Ratio::from_integer(BigInt::from(row.t + 1));
            if c < &zero || c > &cap {
                flag(format!("cumulative_neogauge = {c} outside [0, {cap}]"));
            }
        }
        if let (Some(g), Some(c)) = (&row.neogauge, &row.convergent) {
            if g > c {
                flag(format!("neogauge {g} exceeds convergent {c}"));
            }
        }
        if let (Some(g), Some(d)) = (&row.neogauge, &row.divergent) {
            if g > d {
                flag(format!("neogauge {g} exceeds divergent {d}"));
            }
        }
        if row.t == 0 {
            if let Some(cf) = &row.constraint_following {
                if cf != &one {
                    flag(format!("constraint_following at t=0 is {cf}, expected 1"));
                }
            }
        }
        if provenance == Provenance::SelfProduced {
            if let (Some(c), Some(p)) = (&row.convergent, &row.pass_at_1) {
                if c > p {
                    flag(format!("convergent {c} exceeds pass_at_1 {p}"));
                }
            }
        }
    }
    out
}

/// Approximate value, for logs only.
pub fn to_f64(x: &Ratio) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

mod opt_ratio {
    use super::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Ratio>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_str(&format!("{}/{}", v.numer(), v.denom())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ratio>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let (n, den) = text.split_once('/').unwrap_or((&text, "1"));
        let n = n.parse().map_err(serde::de::Error::custom)?;
        let den: num::BigInt = den.parse().map_err(serde::de::Error::custom)?;
        if num::Zero::is_zero(&den) {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Some(Ratio::new(n, den)))
    }
}
