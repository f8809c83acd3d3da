//! JSONL persistence for problems, constraint states, human solutions,
//! evaluation records, technique profiles and augmentation traces.
//!
//! Every line (or trace document) carries `schema_version`. Constraints are
//! stored as their prompt spellings and canonicalised on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denial::AugmentationTrace;
use crate::metrics::HumanTechniqueProfile;
use crate::model::{canonicalize, ConstraintState, EvaluationRecord, Problem, Technique, TestExample};

pub const SCHEMA_VERSION: u32 = 1;

pub const PROBLEMS_FILE: &str = "problems.jsonl";
pub const HUMAN_SOLUTIONS_FILE: &str = "human_solutions.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: unknown technique {name:?}")]
    Taxonomy { line: usize, name: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(line: usize, message: impl Into<String>) -> Self {
        DatasetError::Format {
            line,
            message: message.into(),
        }
    }

    /// Prefixes line-numbered diagnostics with the file they came from.
    pub fn in_file(self, path: &Path) -> String {
        match self {
            DatasetError::Io { .. } => self.to_string(),
            other => format!("{}: {other}", path.display()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateLine {
    t: usize,
    constraints: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemLine {
    schema_version: u32,
    id: String,
    statement: String,
    difficulty: u32,
    tests: Vec<TestExample>,
    #[serde(default)]
    states: Vec<StateLine>,
}

/// One accepted human solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanSolution {
    pub problem_id: String,
    pub index: usize,
    pub source: String,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

/// Problems plus every constraint state declared for them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub problems: Vec<Problem>,
    pub states: Vec<ConstraintState>,
}

impl Dataset {
    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    /// Number of instances at each state `0..=max_t`.
    pub fn state_counts(&self, max_t: usize) -> Vec<usize> {
        (0..=max_t).map(|t| filter_state(&self.states, t).len()).collect()
    }
}

fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
    File::open(path).map(BufReader::new).map_err(|e| DatasetError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| DatasetError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| DatasetError::io(path, e))
}

/// Yields `(line_number, text)` for every non-blank line.
fn lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, String), DatasetError>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| line.map(|l| (i + 1, l)).map_err(|e| DatasetError::format(i + 1, e.to_string())))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn check_version(line: usize, version: u32) -> Result<(), DatasetError> {
    if version != SCHEMA_VERSION {
        return Err(DatasetError::format(line, format!("unsupported schema_version {version}")));
    }
    Ok(())
}

fn parse_line<T: DeserializeOwned>(line: usize, text: &str) -> Result<T, DatasetError> {
    let versioned: Versioned<T> = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let name = message
            .strip_prefix("unknown technique \"")
            .and_then(|rest| rest.split_once('"'))
            .map(|(name, _)| name.to_string());
        match name {
            Some(name) => DatasetError::Taxonomy { line, name },
            None => DatasetError::format(line, message),
        }
    })?;
    check_version(line, versioned.schema_version)?;
    Ok(versioned.body)
}

fn write_line<T: Serialize>(out: &mut impl Write, body: &T) -> io::Result<()> {
    let line = serde_json::to_string(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    writeln!(out, "{line}")
}

/// Parses a problems file. Human solutions are attached separately.
pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset, DatasetError> {
    let mut dataset = Dataset::default();
    let mut seen = BTreeSet::new();
    for entry in lines(reader) {
        let (line, text) = entry?;
        let raw: ProblemLine = serde_json::from_str(&text).map_err(|e| DatasetError::format(line, e.to_string()))?;
        check_version(line, raw.schema_version)?;
        if !seen.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: raw.id });
        }
        if raw.tests.is_empty() {
            return Err(DatasetError::format(line, format!("problem {} has no tests", raw.id)));
        }
        let mut state_ts = BTreeSet::new();
        for state in raw.states {
            let constraints = state
                .constraints
                .iter()
                .map(|name| {
                    canonicalize(name).ok_or_else(|| DatasetError::Taxonomy {
                        line,
                        name: name.clone(),
                    })
                })
                .collect::<Result<Vec<Technique>, _>>()?;
            if constraints.len() != state.t {
                return Err(DatasetError::format(
                    line,
                    format!("state t={} lists {} constraints", state.t, constraints.len()),
                ));
            }
            if !state_ts.insert(state.t) {
                return Err(DatasetError::format(line, format!("state t={} declared twice", state.t)));
            }
            let parsed = ConstraintState::new(raw.id.clone(), constraints).map_err(|e| DatasetError::format(line, e.to_string()))?;
            dataset.states.push(parsed);
        }
        dataset.problems.push(Problem {
            id: raw.id,
            statement: raw.statement,
            tests: raw.tests,
            human_solutions: Vec::new(),
            difficulty: raw.difficulty,
        });
    }
    Ok(dataset)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    parse_dataset(open(path)?)
}

/// Loads `problems.jsonl` and, when present, `human_solutions.jsonl` from a
/// dataset directory.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset, DatasetError> {
    let mut dataset = load_dataset(&dir.join(PROBLEMS_FILE))?;
    let humans = dir.join(HUMAN_SOLUTIONS_FILE);
    if humans.exists() {
        attach_human_solutions(&mut dataset.problems, load_human_solutions(&humans)?)?;
    }
    Ok(dataset)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    let mut out = create(path)?;
    let mut by_problem: BTreeMap<&str, Vec<&ConstraintState>> = BTreeMap::new();
    for state in &dataset.states {
        by_problem.entry(state.problem_id.as_str()).or_default().push(state);
    }
    for problem in &dataset.problems {
        let mut states = by_problem.remove(problem.id.as_str()).unwrap_or_default();
        states.sort_by_key(|s| s.t);
        let line = ProblemLine {
            schema_version: SCHEMA_VERSION,
            id: problem.id.clone(),
            statement: problem.statement.clone(),
            difficulty: problem.difficulty,
            tests: problem.tests.clone(),
            states: states
                .into_iter()
                .map(|s| StateLine {
                    t: s.t,
                    constraints: s.constraints.iter().map(|c| c.prompt_name().to_string()).collect(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&line).map_err(|e| DatasetError::io(path, e.into()))?;
        writeln!(out, "{text}").map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

/// Instances with exactly `t` constraints.
pub fn filter_state(states: &[ConstraintState], t: usize) -> Vec<&ConstraintState> {
    states.iter().filter(|s| s.constraints.len() == t).collect()
}

fn load_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    lines(open(path)?).map(|entry| entry.and_then(|(line, text)| parse_line(line, &text))).collect()
}

fn write_lines<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), DatasetError> {
    let mut out = create(path)?;
    for item in items {
        write_line(&mut out, item).map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn load_human_solutions(path: &Path) -> Result<Vec<HumanSolution>, DatasetError> {
    let solutions: Vec<HumanSolution> = load_lines(path)?;
    let mut seen = BTreeSet::new();
    for (i, s) in solutions.iter().enumerate() {
        if !seen.insert((s.problem_id.as_str(), s.index)) {
            return Err(DatasetError::DuplicateId {
                line: i + 1,
                id: format!("{}#{}", s.problem_id, s.index),
            });
        }
    }
    Ok(solutions)
}

pub fn write_human_solutions(path: &Path, solutions: &[HumanSolution]) -> Result<(), DatasetError> {
    write_lines(path, solutions)
}

/// Attaches solutions to their problems in `index` order.
pub fn attach_human_solutions(problems: &mut [Problem], mut solutions: Vec<HumanSolution>) -> Result<(), DatasetError> {
    solutions.sort_by(|a, b| (&a.problem_id, a.index).cmp(&(&b.problem_id, b.index)));
    let positions: BTreeMap<String, usize> = problems.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
    for (i, solution) in solutions.into_iter().enumerate() {
        let Some(&at) = positions.get(&solution.problem_id) else {
            return Err(DatasetError::format(i + 1, format!("human solution for unknown problem {}", solution.problem_id)));
        };
        problems[at].human_solutions.push(solution.source);
    }
    Ok(())
}

/// Flattens problems' human solutions back into file rows.
pub fn human_solutions_of(problems: &[Problem]) -> Vec<HumanSolution> {
    problems
        .iter()
        .flat_map(|p| {
            p.human_solutions.iter().enumerate().map(|(index, source)| HumanSolution {
                problem_id: p.id.clone(),
                index,
                source: source.clone(),
            })
        })
        .collect()
}

pub fn load_records(path: &Path) -> Result<Vec<EvaluationRecord>, DatasetError> {
    let records: Vec<EvaluationRecord> = load_lines(path)?;
    for (i, r) in records.iter().enumerate() {
        if !r.is_consistent() {
            return Err(DatasetError::format(i + 1, "constraint_free disagrees with detected techniques"));
        }
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[EvaluationRecord]) -> Result<(), DatasetError> {
    write_lines(path, records)
}

pub fn load_profiles(path: &Path) -> Result<Vec<HumanTechniqueProfile>, DatasetError> {
    let profiles: Vec<HumanTechniqueProfile> = load_lines(path)?;
    let mut seen = BTreeSet::new();
    for (i, p) in profiles.iter().enumerate() {
        if !seen.insert(p.problem_id.as_str()) {
            return Err(DatasetError::DuplicateId {
                line: i + 1,
                id: p.problem_id.clone(),
            });
        }
    }
    Ok(profiles)
}

pub fn write_profiles(path: &Path, profiles: &[HumanTechniqueProfile]) -> Result<(), DatasetError> {
    write_lines(path, profiles)
}

/// Pretty-printed JSON, one document per problem.
pub fn trace_to_string(trace: &AugmentationTrace) -> String {
    let mut text = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body: trace,
    })
    .expect("traces always serialise");
    text.push('\n');
    text
}

pub fn trace_from_str(text: &str) -> Result<AugmentationTrace, DatasetError> {
    let trace: AugmentationTrace = parse_line(0, text).map_err(|e| match e {
        DatasetError::Format { message, .. } => DatasetError::format(0, message),
        other => other,
    })?;
    trace.validate().map_err(|e| DatasetError::format(0, e.to_string()))?;
    Ok(trace)
}

pub fn save_trace(path: &Path, trace: &AugmentationTrace) -> Result<(), DatasetError> {
    let mut out = create(path)?;
    out.write_all(trace_to_string(trace).as_bytes()).map_err(|e| DatasetError::io(path, e))?;
    out.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<AugmentationTrace, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    trace_from_str(&text)
}
