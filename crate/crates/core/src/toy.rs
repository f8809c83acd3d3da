//! A bundled five-problem benchmark and a deterministic simulated model.
//!
//! The simulated model answers solving prompts with the first stored
//! variant that avoids every denied technique, and answers detection
//! prompts by running the static detector. It never looks at anything but
//! the conversation, so parallel runs see identical replies.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::client::{FnBackend, Message};
use crate::dataset::Dataset;
use crate::detect::detect_static;
use crate::model::{canonicalize, Problem, TechniqueSet, TestExample};
use crate::prompts::{CONSTRAINT_HEADER, DETECTION_PROMPT};

const TOY_TOML: &str = include_str!("../data/toy/toy.toml");

/// Reply used when every variant is ruled out.
pub const GIVE_UP_REPLY: &str = "I need more details about which techniques are still allowed before I can write this solution.";

#[derive(Deserialize)]
struct ToyFile {
    problem: Vec<ToyEntry>,
}

#[derive(Deserialize)]
struct ToyEntry {
    id: String,
    difficulty: u32,
    statement: String,
    tests: Vec<TestExample>,
    humans: Vec<String>,
    variants: Vec<String>,
}

fn tidy(source: &str) -> String {
    let mut s = source.trim_start_matches('\n').to_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub problem: Problem,
    /// Alternative solutions in the order the simulated model tries them.
    pub variants: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ToyBenchmark {
    pub problems: Vec<ToyProblem>,
}

impl ToyBenchmark {
    pub fn load() -> ToyBenchmark {
        let file: ToyFile = toml::from_str(TOY_TOML).expect("bundled toy benchmark parses");
        let problems = file
            .problem
            .into_iter()
            .map(|e| ToyProblem {
                problem: Problem {
                    id: e.id,
                    statement: e.statement,
                    tests: e.tests,
                    human_solutions: e.humans.iter().map(|s| tidy(s)).collect(),
                    difficulty: e.difficulty,
                },
                variants: e.variants.iter().map(|s| tidy(s)).collect(),
            })
            .collect();
        ToyBenchmark { problems }
    }

    /// The first `n` problems.
    pub fn take(mut self, n: usize) -> ToyBenchmark {
        self.problems.truncate(n);
        self
    }

    pub fn problems(&self) -> Vec<Problem> {
        self.problems.iter().map(|p| p.problem.clone()).collect()
    }

    /// Problems with human solutions attached and no constraint states.
    pub fn dataset(&self) -> Dataset {
        Dataset {
            problems: self.problems(),
            states: Vec::new(),
        }
    }

    /// Simulated model serving both solving and detection conversations.
    pub fn backend(&self) -> FnBackend {
        let mut by_title: BTreeMap<String, Vec<(String, TechniqueSet)>> = BTreeMap::new();
        for p in &self.problems {
            let variants = p
                .variants
                .iter()
                .map(|src| (src.clone(), detect_static(src).expect("toy variants parse")))
                .collect();
            by_title.insert(p.problem.title().to_string(), variants);
        }
        let by_title = Arc::new(by_title);
        FnBackend::new(move |history: &[Message]| {
            let last = history.last().map_or("", |m| m.content.as_str());
            if history.first().is_some_and(|m| m.content == DETECTION_PROMPT) {
                return Ok(detection_reply(last));
            }
            let title = last.lines().next().unwrap_or("");
            let denied = denied_in_prompt(last);
            let pick = by_title
                .get(title)
                .and_then(|variants| variants.iter().find(|(_, used)| used.is_disjoint(&denied)));
            Ok(match pick {
                Some((source, _)) => format!("```python\n{source}```"),
                None => GIVE_UP_REPLY.to_string(),
            })
        })
    }
}

/// Techniques listed under the constraint header of a rendered prompt.
pub fn denied_in_prompt(prompt: &str) -> TechniqueSet {
    let mut lines = prompt.lines().skip_while(|l| *l != CONSTRAINT_HEADER);
    lines.next();
    lines
        .map_while(|l| l.strip_prefix("- "))
        .filter_map(canonicalize)
        .collect()
}

/// Bullet list of statically detected techniques, as a reviewer model
/// would write it.
pub fn detection_reply(source: &str) -> String {
    match detect_static(source) {
        Ok(found) if !found.is_empty() => found.iter().map(|t| format!("- {}\n", t.prompt_name())).collect(),
        _ => "No listed technique applies.\n".to_string(),
    }
}
