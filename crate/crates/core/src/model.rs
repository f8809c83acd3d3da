//! Domain types shared across the pipeline.
//!
//! Nothing in here performs I/O or talks to a model. Every type is an
//! immutable value that can be sent between threads freely.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// `(canonical name, string used in the detection prompt)` in prompt order,
/// with the duplicated "graph traversal" entry collapsed.
const TAXONOMY: [(&str, &str); 34] = [
    ("if statement", "if statement"),
    ("for loop", "for loop"),
    ("while loop", "while loop"),
    ("break statement", "break statement"),
    ("continue statement", "continue statement"),
    ("pass statement", "pass statement"),
    ("match statement", "match statement"),
    ("recursion", "recursion"),
    ("stack", "stack"),
    ("queue", "queue"),
    ("tuple", "tuple"),
    ("set", "set"),
    ("dictionary", "dictionary"),
    ("linked list", "linked list"),
    ("tree", "tree"),
    ("graph", "graph"),
    ("graph traversal", "graph traversal"),
    ("two pointers", "two pointers"),
    ("sliding window", "sliding window"),
    ("matrix operation", "matrix operation"),
    ("hashmap", "hashmap"),
    ("depth first search", "depth first search"),
    ("breadth first search", "width first search"),
    ("backtracking", "back tracking"),
    ("divide and conquer", "dived & conquer"),
    ("kadanes algorithm", "Kadanes algorithm"),
    ("binary search", "binary search"),
    ("heap", "heap"),
    ("dynamic programming", "dynamic programming"),
    ("greedy algorithm", "greedy algorithm"),
    ("misc", "misc"),
    ("minimax", "minimax"),
    ("topological sort", "topological sort"),
    ("sorting", "sorting"),
];

/// One atomic programming technique from the closed taxonomy.
///
/// Ordering follows the taxonomy order, which is also the candidate order
/// used when sampling constraints.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Technique(u8);

impl Technique {
    pub const COUNT: usize = TAXONOMY.len();

    pub const IF_STATEMENT: Technique = Technique(0);
    pub const FOR_LOOP: Technique = Technique(1);
    pub const WHILE_LOOP: Technique = Technique(2);
    pub const BREAK_STATEMENT: Technique = Technique(3);
    pub const CONTINUE_STATEMENT: Technique = Technique(4);
    pub const PASS_STATEMENT: Technique = Technique(5);
    pub const MATCH_STATEMENT: Technique = Technique(6);
    pub const RECURSION: Technique = Technique(7);
    pub const STACK: Technique = Technique(8);
    pub const QUEUE: Technique = Technique(9);
    pub const TUPLE: Technique = Technique(10);
    pub const SET: Technique = Technique(11);
    pub const DICTIONARY: Technique = Technique(12);
    pub const HASHMAP: Technique = Technique(20);
    pub const BINARY_SEARCH: Technique = Technique(26);
    pub const HEAP: Technique = Technique(27);
    pub const MISC: Technique = Technique(30);
    pub const SORTING: Technique = Technique(33);

    /// All taxonomy members in canonical order.
    pub fn all() -> impl ExactSizeIterator<Item = Technique> {
        (0..TAXONOMY.len() as u8).map(Technique)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(index: usize) -> Option<Technique> {
        (index < TAXONOMY.len()).then_some(Technique(index as u8))
    }

    pub fn canonical_name(self) -> &'static str {
        TAXONOMY[self.index()].0
    }

    /// The spelling used in the detection prompt and the interchange dataset.
    pub fn prompt_name(self) -> &'static str {
        TAXONOMY[self.index()].1
    }
}

impl fmt::Debug for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Technique({})", self.canonical_name())
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl Serialize for Technique {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for Technique {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        canonicalize(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown technique {raw:?}")))
    }
}

/// Lowercases, drops apostrophes, spells out `&`, and folds every other
/// non-alphanumeric run into a single space.
pub fn normalize_technique_name(raw: &str) -> String {
    let mut folded = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '\'' | '\u{2019}' | '`' => {}
            '&' => folded.push_str(" and "),
            c if c.is_alphanumeric() => folded.extend(c.to_lowercase()),
            _ => folded.push(' '),
        }
    }
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maps free text onto a taxonomy member, matching either the canonical
/// name or the prompt spelling after normalization.
pub fn canonicalize(raw: &str) -> Option<Technique> {
    let needle = normalize_technique_name(raw);
    if needle.is_empty() {
        return None;
    }
    Technique::all().find(|t| {
        normalize_technique_name(t.canonical_name()) == needle
            || normalize_technique_name(t.prompt_name()) == needle
    })
}

/// A subset of the taxonomy, stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TechniqueSet(u64);

impl TechniqueSet {
    pub const fn empty() -> Self {
        TechniqueSet(0)
    }

    pub fn insert(&mut self, technique: Technique) -> bool {
        let bit = 1u64 << technique.index();
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    pub fn remove(&mut self, technique: Technique) -> bool {
        let bit = 1u64 << technique.index();
        let present = self.0 & bit != 0;
        self.0 &= !bit;
        present
    }

    pub fn contains(&self, technique: Technique) -> bool {
        self.0 & (1u64 << technique.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn union(&self, other: &TechniqueSet) -> TechniqueSet {
        TechniqueSet(self.0 | other.0)
    }

    pub fn intersection(&self, other: &TechniqueSet) -> TechniqueSet {
        TechniqueSet(self.0 & other.0)
    }

    pub fn difference(&self, other: &TechniqueSet) -> TechniqueSet {
        TechniqueSet(self.0 & !other.0)
    }

    pub fn is_disjoint(&self, other: &TechniqueSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset(&self, other: &TechniqueSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in canonical taxonomy order.
    pub fn iter(&self) -> impl Iterator<Item = Technique> + '_ {
        Technique::all().filter(move |t| self.contains(*t))
    }

    pub fn to_vec(&self) -> Vec<Technique> {
        self.iter().collect()
    }
}

impl FromIterator<Technique> for TechniqueSet {
    fn from_iter<I: IntoIterator<Item = Technique>>(iter: I) -> Self {
        let mut set = TechniqueSet::empty();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

impl<'a> FromIterator<&'a Technique> for TechniqueSet {
    fn from_iter<I: IntoIterator<Item = &'a Technique>>(iter: I) -> Self {
        iter.into_iter().copied().collect()
    }
}

impl Extend<Technique> for TechniqueSet {
    fn extend<I: IntoIterator<Item = Technique>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t);
        }
    }
}

impl fmt::Debug for TechniqueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set()
            .entries(self.iter().map(|t| t.canonical_name()))
            .finish()
    }
}

impl Serialize for TechniqueSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for TechniqueSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let members = Vec::<Technique>::deserialize(deserializer)?;
        let set: TechniqueSet = members.iter().collect();
        if set.len() != members.len() {
            return Err(serde::de::Error::custom("duplicate technique in set"));
        }
        Ok(set)
    }
}

/// One stdin/stdout example attached to a problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestExample {
    pub input: String,
    pub expected_output: String,
}

impl TestExample {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        TestExample {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }
}

/// A programming challenge. The first line of `statement` is its title.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub tests: Vec<TestExample>,
    pub human_solutions: Vec<String>,
    pub difficulty: u32,
}

impl Problem {
    pub fn title(&self) -> &str {
        self.statement.lines().next().unwrap_or("")
    }

    /// Everything after the title line.
    pub fn body(&self) -> &str {
        match self.statement.find('\n') {
            Some(pos) => &self.statement[pos + 1..],
            None => "",
        }
    }
}

/// A problem joined with the ordered list of denied techniques at state `t`.
/// Constraint order is discovery order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintState {
    pub problem_id: String,
    pub t: usize,
    pub constraints: Vec<Technique>,
}

impl ConstraintState {
    /// Builds a state whose index equals its constraint count.
    pub fn new(problem_id: impl Into<String>, constraints: Vec<Technique>) -> Result<Self, DuplicateConstraint> {
        if let Some(dup) = first_duplicate(&constraints) {
            return Err(DuplicateConstraint(dup));
        }
        Ok(ConstraintState {
            problem_id: problem_id.into(),
            t: constraints.len(),
            constraints,
        })
    }

    pub fn constraint_set(&self) -> TechniqueSet {
        self.constraints.iter().collect()
    }

    /// Whether the instance carries exactly `t` distinct constraints.
    pub fn is_state_valid(&self) -> bool {
        self.constraints.len() == self.t && first_duplicate(&self.constraints).is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("constraint {0} listed twice")]
pub struct DuplicateConstraint(pub Technique);

pub(crate) fn first_duplicate(list: &[Technique]) -> Option<Technique> {
    let mut seen = TechniqueSet::empty();
    list.iter().copied().find(|t| !seen.insert(*t))
}

/// Why a model response did not yield usable source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionError {
    NoCodeFound,
    ModelError,
}

/// A model response and the program extracted from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub raw_response: String,
    pub source: Option<String>,
    pub producer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<SolutionError>,
}

impl Solution {
    pub fn extracted(raw_response: String, source: String, producer: impl Into<String>) -> Self {
        Solution {
            raw_response,
            source: Some(source),
            producer: producer.into(),
            error: None,
        }
    }

    pub fn failed(raw_response: String, producer: impl Into<String>, error: SolutionError) -> Self {
        Solution {
            raw_response,
            source: None,
            producer: producer.into(),
            error: Some(error),
        }
    }
}

/// Membership of a record in a best-of-k sampling group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTag {
    pub group: String,
    pub index: usize,
}

/// One judged and analysed model solution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub constraint_state: ConstraintState,
    pub solution: Solution,
    pub detected: TechniqueSet,
    pub correct: bool,
    pub constraint_free: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleTag>,
}

impl EvaluationRecord {
    /// Derives `constraint_free` from the detected set so the two can never
    /// disagree.
    pub fn new(constraint_state: ConstraintState, solution: Solution, detected: TechniqueSet, correct: bool) -> Self {
        let constraint_free = detected.is_disjoint(&constraint_state.constraint_set());
        EvaluationRecord {
            constraint_state,
            solution,
            detected,
            correct,
            constraint_free,
            sample: None,
        }
    }

    pub fn with_sample(mut self, group: impl Into<String>, index: usize) -> Self {
        self.sample = Some(SampleTag {
            group: group.into(),
            index,
        });
        self
    }

    pub fn problem_id(&self) -> &str {
        &self.constraint_state.problem_id
    }

    /// Number of constraints attached to the instance.
    pub fn state(&self) -> usize {
        self.constraint_state.constraints.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.constraint_free == self.detected.is_disjoint(&self.constraint_state.constraint_set())
    }
}
