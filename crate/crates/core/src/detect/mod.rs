//! Technique detection.
//!
//! Two backends produce a [`TechniqueSet`] from Python source:
//!
//! - [`StaticDetector`] evaluates a declarative rule corpus against parse-tree
//!   facts. It is deterministic and covers the syntactic part of the taxonomy.
//!   Semantic techniques (dynamic programming, greedy, two pointers, ...) are
//!   never claimed by it.
//! - [`ModelDetector`] asks a chat model with the reviewer prompt, in a fresh
//!   session per call.

pub mod facts;
mod llm;

use serde::Deserialize;
use thiserror::Error;

use crate::client::ModelError;
use crate::model::{canonicalize, Technique, TechniqueSet};

pub use facts::SyntaxFacts;
pub use llm::{detect_with_model, parse_detection_response, ModelDetection, ModelDetector, DETECTION_PROMPT};

/// The rule corpus shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../data/detection_rules.toml");

const SUPPORTED_RULES_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("model detection failed: {0}")]
    Model(#[from] ModelError),
    /// The model answered but none of its lines named a taxonomy technique.
    #[error("detector returned no taxonomy techniques ({dropped} unrecognised lines)")]
    EmptyDetection { dropped: usize },
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("invalid rule file: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unsupported rule file version {0}")]
    Version(u32),
    #[error("rule {index}: unknown technique {name:?}")]
    UnknownTechnique { index: usize, name: String },
    #[error("rule {index}: unknown node kind {kind:?}")]
    UnknownNode { index: usize, kind: String },
    #[error("rule {index}: unknown call-graph predicate {predicate:?}")]
    UnknownPredicate { index: usize, predicate: String },
}

/// Anything that maps source to techniques.
pub trait TechniqueDetector: Send + Sync {
    fn detect(&self, source: &str) -> Result<TechniqueSet, DetectError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Pattern {
    Node { node: String },
    Call { call: String },
    Method { method: String, arity: Option<usize> },
    All { all: Vec<Pattern> },
    CallGraph { call_graph: String },
}

impl Pattern {
    fn validate(&self, index: usize) -> Result<(), RuleError> {
        match self {
            Pattern::Node { node } if !facts::NODE_KINDS.contains(&node.as_str()) => {
                Err(RuleError::UnknownNode { index, kind: node.clone() })
            }
            Pattern::CallGraph { call_graph } if call_graph != "cycle" => Err(RuleError::UnknownPredicate {
                index,
                predicate: call_graph.clone(),
            }),
            Pattern::All { all } => all.iter().try_for_each(|p| p.validate(index)),
            _ => Ok(()),
        }
    }

    fn matches(&self, facts: &SyntaxFacts) -> bool {
        match self {
            Pattern::Node { node } => facts.nodes.contains(node.as_str()),
            Pattern::Call { call } => facts
                .calls
                .iter()
                .filter_map(|c| c.qualified.as_deref())
                .any(|name| call_matches(call, name)),
            Pattern::Method { method, arity } => facts.calls.iter().any(|c| {
                c.qualified.is_none() && c.method.as_deref() == Some(method) && arity.is_none_or(|a| a == c.arity)
            }),
            Pattern::All { all } => all.iter().all(|p| p.matches(facts)),
            Pattern::CallGraph { .. } => facts.has_recursive_cycle(),
        }
    }
}

fn call_matches(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix(".*") {
        Some(module) => name.strip_prefix(module).is_some_and(|rest| rest.starts_with('.')),
        None => pattern == name,
    }
}

/// A technique and the patterns that signal it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRule {
    pub technique: Technique,
    pub any: Vec<Pattern>,
}

impl DetectionRule {
    pub fn fires(&self, facts: &SyntaxFacts) -> bool {
        self.any.iter().any(|p| p.matches(facts))
    }
}

#[derive(Deserialize)]
struct RuleFile {
    version: u32,
    #[serde(default)]
    rule: Vec<RawRule>,
}

#[derive(Deserialize)]
struct RawRule {
    technique: String,
    any: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCorpus {
    pub version: u32,
    pub rules: Vec<DetectionRule>,
}

impl RuleCorpus {
    pub fn parse(text: &str) -> Result<RuleCorpus, RuleError> {
        let file: RuleFile = toml::from_str(text)?;
        if file.version != SUPPORTED_RULES_VERSION {
            return Err(RuleError::Version(file.version));
        }
        let rules = file
            .rule
            .into_iter()
            .enumerate()
            .map(|(index, raw)| {
                let technique = canonicalize(&raw.technique).ok_or_else(|| RuleError::UnknownTechnique {
                    index,
                    name: raw.technique.clone(),
                })?;
                raw.any.iter().try_for_each(|p| p.validate(index))?;
                Ok(DetectionRule { technique, any: raw.any })
            })
            .collect::<Result<_, RuleError>>()?;
        Ok(RuleCorpus {
            version: file.version,
            rules,
        })
    }

    /// Techniques some rule can produce.
    pub fn coverage(&self) -> TechniqueSet {
        self.rules.iter().map(|r| r.technique).collect()
    }
}

impl Default for RuleCorpus {
    fn default() -> Self {
        RuleCorpus::parse(DEFAULT_RULES).expect("bundled rule corpus is valid")
    }
}

/// Deterministic rule-based detector.
#[derive(Debug, Clone, Default)]
pub struct StaticDetector {
    corpus: RuleCorpus,
    misc_when_empty: bool,
}

impl StaticDetector {
    pub fn new(corpus: RuleCorpus) -> Self {
        StaticDetector {
            corpus,
            misc_when_empty: false,
        }
    }

    /// Report `misc` instead of an empty set when no rule fires.
    pub fn misc_when_empty(mut self, enabled: bool) -> Self {
        self.misc_when_empty = enabled;
        self
    }

    pub fn corpus(&self) -> &RuleCorpus {
        &self.corpus
    }

    pub fn detect_facts(&self, facts: &SyntaxFacts) -> TechniqueSet {
        let mut found: TechniqueSet = self
            .corpus
            .rules
            .iter()
            .filter(|r| r.fires(facts))
            .map(|r| r.technique)
            .collect();
        if found.is_empty() && self.misc_when_empty {
            found.insert(Technique::MISC);
        }
        found
    }

    pub fn detect_source(&self, source: &str) -> Result<TechniqueSet, ParseError> {
        let facts = SyntaxFacts::from_source(source)?;
        Ok(self.detect_facts(&facts))
    }
}

impl TechniqueDetector for StaticDetector {
    fn detect(&self, source: &str) -> Result<TechniqueSet, DetectError> {
        Ok(self.detect_source(source)?)
    }
}

/// Runs the bundled rule corpus with default settings.
pub fn detect_static(source: &str) -> Result<TechniqueSet, ParseError> {
    thread_local! {
        static DETECTOR: StaticDetector = StaticDetector::default();
    }
    DETECTOR.with(|d| d.detect_source(source))
}
