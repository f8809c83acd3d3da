//! Scores a handful of hand-made records and prints the report table.
//!
//! `cargo run --example score_records`

use neogauge::metrics::{index_profiles, HumanTechniqueProfile, Scorer};
use neogauge::model::{ConstraintState, EvaluationRecord, Solution, Technique as T, TechniqueSet};
use neogauge::report::{human_baseline, score_records, validate_report, Provenance, ScoreReport};

fn set(items: &[T]) -> TechniqueSet {
    items.iter().collect()
}

fn record(problem: &str, denied: &[T], detected: &[T], correct: bool) -> EvaluationRecord {
    let state = ConstraintState::new(problem, denied.to_vec()).expect("no duplicates");
    EvaluationRecord::new(state, Solution::extracted(String::new(), String::new(), "example"), set(detected), correct)
}

fn main() {
    let profiles = index_profiles([
        HumanTechniqueProfile::new("A", vec![set(&[T::FOR_LOOP]), set(&[T::WHILE_LOOP, T::IF_STATEMENT])]),
        HumanTechniqueProfile::new("B", vec![set(&[T::SORTING]), set(&[T::HEAP])]),
    ]);
    let records = vec![
        record("A", &[], &[T::FOR_LOOP], true),
        record("B", &[], &[T::SORTING, T::TUPLE], true),
        record("A", &[T::FOR_LOOP], &[T::RECURSION, T::IF_STATEMENT], true),
        record("B", &[T::SORTING], &[T::SORTING], true),
        record("A", &[T::FOR_LOOP, T::RECURSION], &[T::WHILE_LOOP], false),
    ];
    let states: Vec<ConstraintState> = records.iter().map(|r| r.constraint_state.clone()).collect();
    let scorer = Scorer::new(&profiles);
    let report = ScoreReport {
        rows: score_records(&records, &scorer, 0..=2).expect("profiles cover every problem"),
        human: human_baseline(&scorer, &states, 0..=2).expect("profiles cover every problem"),
    };
    print!("{}", report.to_markdown());
    let violations = validate_report(&report.rows, Provenance::SelfProduced);
    println!("\n{} invariant violations", violations.len());
}
