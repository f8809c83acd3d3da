use crate::client::ChatClient;
use crate::model::{canonicalize, TechniqueSet};

use super::{DetectError, TechniqueDetector};

pub use crate::prompts::DETECTION_PROMPT;

/// Bullet lines of a reviewer response, bullet stripped, in order.
/// Surrounding prose is ignored.
pub fn parse_detection_response(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter_map(|line| line.strip_prefix('-'))
        .map(|rest| rest.trim().to_string())
        .filter(|rest| !rest.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDetection {
    pub techniques: TechniqueSet,
    /// Bullet lines that did not name a taxonomy technique.
    pub dropped: Vec<String>,
}

/// Canonicalizes a reviewer response. Unknown lines are kept aside, not
/// treated as errors.
pub fn interpret_detection_response(text: &str) -> ModelDetection {
    let mut techniques = TechniqueSet::empty();
    let mut dropped = Vec::new();
    for line in parse_detection_response(text) {
        match canonicalize(&line) {
            Some(t) => {
                techniques.insert(t);
            }
            None => dropped.push(line),
        }
    }
    ModelDetection { techniques, dropped }
}

/// Asks the model for the techniques in `source`, in a session of its own.
pub fn detect_with_model(source: &str, client: &ChatClient) -> Result<ModelDetection, DetectError> {
    let reply = client.one_shot(DETECTION_PROMPT, source)?;
    let detection = interpret_detection_response(&reply);
    if !detection.dropped.is_empty() {
        tracing::info!(
            target: "neogauge::detect",
            dropped = detection.dropped.len(),
            lines = ?detection.dropped,
            "dropped non-taxonomy detector lines"
        );
    }
    if detection.techniques.is_empty() {
        return Err(DetectError::EmptyDetection {
            dropped: detection.dropped.len(),
        });
    }
    Ok(detection)
}

/// [`TechniqueDetector`] backed by a chat model.
pub struct ModelDetector<'c> {
    client: &'c ChatClient,
}

impl<'c> ModelDetector<'c> {
    pub fn new(client: &'c ChatClient) -> Self {
        ModelDetector { client }
    }
}

impl TechniqueDetector for ModelDetector<'_> {
    fn detect(&self, source: &str) -> Result<TechniqueSet, DetectError> {
        detect_with_model(source, self.client).map(|d| d.techniques)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Technique;

    #[test]
    fn parses_bullets() {
        assert_eq!(parse_detection_response("- a\n- b"), vec!["a", "b"]);
        assert_eq!(parse_detection_response("Sure!\n- for loop\nDone."), vec!["for loop"]);
        assert!(parse_detection_response("").is_empty());
        assert_eq!(parse_detection_response("  -   while loop  \n-\n"), vec!["while loop"]);
    }

    #[test]
    fn unknown_lines_are_dropped() {
        let d = interpret_detection_response("- for loop\n- if statement");
        assert_eq!(d.techniques, [Technique::FOR_LOOP, Technique::IF_STATEMENT].iter().collect());
        let d = interpret_detection_response("- recursion\n- clever math");
        assert_eq!(d.techniques, [Technique::RECURSION].iter().collect());
        assert_eq!(d.dropped, vec!["clever math"]);
    }
}
