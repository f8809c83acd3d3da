use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use neogauge::cli::{run, CliError, EXIT_DATA, EXIT_INVARIANT, EXIT_MODEL, EXIT_OK, EXIT_USAGE};
use neogauge::dataset::{load_records, write_dataset, write_human_solutions, human_solutions_of};
use neogauge::model::{ConstraintState, SolutionError};
use neogauge::toy::ToyBenchmark;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}

fn neogauge(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["neogauge"];
    full.extend_from_slice(args);
    let code = run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(out: &Path, extra: &[&str]) -> String {
    let derived = out.join("dataset");
    let mut printed = String::new();
    for (cmd, data) in [("augment", toy_dir()), ("evaluate", derived.clone()), ("score", derived.clone())] {
        let mut args = vec![cmd, "--dataset", s(&data), "--out", s(out), "--seed", "7", "--k", "1"];
        args.extend_from_slice(extra);
        let (code, text) = neogauge(&args);
        assert_eq!(code, EXIT_OK, "{cmd} failed:\n{text}");
        printed.push_str(&text);
    }
    printed
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn toy_pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let printed_a = pipeline(a.path(), &[]);
    let printed_b = pipeline(b.path(), &["--workers", "1"]);
    assert_eq!(printed_a, printed_b);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name} differs");
    }
    for name in ["score.csv", "score.json", "score.md", "human_baseline.csv", "records.jsonl", "human_profiles.jsonl", "failures.json"] {
        assert!(sa.contains_key(name), "missing {name}");
    }
    let csv = String::from_utf8(sa["score.csv"].clone()).unwrap();
    assert!(csv.starts_with("t,n_instances,pass_at_1,constraint_following,convergent,divergent,neogauge,cumulative_neogauge\n"));
    assert!(csv.lines().nth(1).unwrap().starts_with("0,5,"));
}

#[test]
fn validate_accepts_toy_and_augmented_data() {
    let (code, text) = neogauge(&["validate", "--dataset", s(&toy_dir())]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.contains("5 problems, 5 instances"));
}

fn one_problem_dataset(dir: &Path) {
    let mut data = ToyBenchmark::load().take(1).dataset();
    data.states = vec![ConstraintState::new("T1", vec![]).unwrap()];
    write_dataset(&dir.join("problems.jsonl"), &data).unwrap();
    write_human_solutions(&dir.join("human_solutions.jsonl"), &human_solutions_of(&data.problems)).unwrap();
}

fn script(dir: &Path, replies: &[&str]) -> PathBuf {
    let path = dir.join("script.json");
    std::fs::write(&path, serde_json::to_string(replies).unwrap()).unwrap();
    path
}

#[test]
fn scripted_correct_answer_is_recorded_as_correct() {
    let dir = tempfile::tempdir().unwrap();
    one_problem_dataset(dir.path());
    let answer = "```python\ndef solve():\n    input()\n    print(sum(map(int, input().split())))\n```";
    let script = script(dir.path(), &[answer]);
    let (code, text) = neogauge(&["evaluate", "--dataset", s(dir.path()), "--out", s(dir.path()), "--provider", "script", "--script", s(&script), "--k", "1"]);
    assert_eq!(code, EXIT_OK, "{text}");
    let records = load_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].correct && records[0].constraint_free);
}

#[test]
fn scripted_prose_becomes_a_failed_record() {
    let dir = tempfile::tempdir().unwrap();
    one_problem_dataset(dir.path());
    let script = script(dir.path(), &["I need more details about the input format before writing code."]);
    let (code, text) = neogauge(&["evaluate", "--dataset", s(dir.path()), "--out", s(dir.path()), "--provider", "script", "--script", s(&script), "--k", "1"]);
    assert_eq!(code, EXIT_OK, "{text}");
    let records = load_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 1);
    assert!(!records[0].correct);
    assert!(records[0].detected.is_empty());
    assert_eq!(records[0].solution.error, Some(SolutionError::NoCodeFound));
}

#[test]
fn exhausted_script_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    one_problem_dataset(dir.path());
    let script = script(dir.path(), &[]);
    let (code, _) = neogauge(&["evaluate", "--dataset", s(dir.path()), "--out", s(dir.path()), "--provider", "script", "--script", s(&script), "--k", "1"]);
    assert_eq!(code, EXIT_MODEL);
    let records = load_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records[0].solution.error, Some(SolutionError::ModelError));
}

#[test]
fn sampling_groups_share_an_id() {
    let dir = tempfile::tempdir().unwrap();
    one_problem_dataset(dir.path());
    let (code, text) = neogauge(&["evaluate", "--dataset", s(dir.path()), "--out", s(dir.path()), "--k", "5"]);
    assert_eq!(code, EXIT_OK, "{text}");
    let records = load_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 5);
    let tags: Vec<_> = records.iter().map(|r| r.sample.clone().unwrap()).collect();
    assert!(tags.iter().all(|t| t.group == "T1@0"));
    assert_eq!(tags.iter().map(|t| t.index).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    let (code, text) = neogauge(&["score", "--dataset", s(dir.path()), "--out", s(dir.path())]);
    assert_eq!(code, EXIT_OK, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("score.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0,1,"), "{csv}");
}

#[test]
fn no_records_gives_a_header_only_report() {
    let dir = tempfile::tempdir().unwrap();
    one_problem_dataset(dir.path());
    std::fs::write(dir.path().join("records.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("human_profiles.jsonl"), "").unwrap();
    let (code, text) = neogauge(&["score", "--dataset", s(dir.path()), "--out", s(dir.path())]);
    assert_eq!(code, EXIT_OK, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("score.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn detect_prints_canonical_names() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.py");
    std::fs::write(&file, "import heapq\n\ndef solve():\n    for x in range(3):\n        heapq.heappush([], x)\n").unwrap();
    let (code, text) = neogauge(&["detect", s(&file)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(text, "for loop\nheap\n");
    std::fs::write(&file, "def solve(:\n").unwrap();
    assert_eq!(neogauge(&["detect", s(&file)]).0, EXIT_DATA);
}

#[test]
fn exit_codes() {
    assert_eq!(neogauge(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(neogauge(&["augment"]).0, EXIT_USAGE);
    assert_eq!(neogauge(&["augment", "--dataset", "/nonexistent/dir"]).0, EXIT_DATA);
    assert_eq!(neogauge(&["validate", "--dataset", s(&toy_dir()), "--k", "0"]).0, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("problems.jsonl"), "{not json}\n").unwrap();
    assert_eq!(neogauge(&["validate", "--dataset", s(dir.path())]).0, EXIT_DATA);
    assert_eq!(neogauge(&["--help"]).0, EXIT_OK);
    assert_eq!(CliError::Invariant(String::new()).exit_code(), EXIT_INVARIANT);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "k = 0\n").unwrap();
    let (code, _) = neogauge(&["validate", "--dataset", s(&toy_dir()), "--k", "3", "--config", s(&config)]);
    assert_eq!(code, EXIT_USAGE);
}
