//! Iterative constraint denial: solve, detect, forbid one technique, re-pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatClient, DecodingParams, ModelError};
use crate::detect::{detect_with_model, DetectError};
use crate::model::{ConstraintState, Problem, Solution, SolutionError, Technique, TechniqueSet};
use crate::prompts::{CONSTRAINT_HEADER, SOLVING_PROMPT};
use crate::sandbox::extract_code;

/// Poses `problem` with the given techniques forbidden. Newest constraint
/// is listed first.
pub fn render_problem(problem: &Problem, constraints: &[Technique]) -> String {
    let mut out = String::from(problem.title());
    out.push('\n');
    if !constraints.is_empty() {
        out.push_str(CONSTRAINT_HEADER);
        out.push('\n');
        for technique in constraints.iter().rev() {
            out.push_str("- ");
            out.push_str(technique.prompt_name());
            out.push('\n');
        }
    }
    out.push_str(problem.body());
    out
}

/// Draws uniformly from `detected \ existing`, enumerated in taxonomy order.
/// Consumes no randomness when nothing is left to deny.
pub fn sample_constraint(detected: &TechniqueSet, existing: &[Technique], rng: &mut impl Rng) -> Option<Technique> {
    let used: TechniqueSet = existing.iter().collect();
    let pool = detected.difference(&used).to_vec();
    if pool.is_empty() {
        return None;
    }
    let pick = rng.gen_range(0..pool.len() as u32) as usize;
    Some(pool[pick])
}

/// Mixes a run seed with a problem id into a per-problem seed that is
/// stable across platforms and releases (64-bit FNV-1a).
pub fn problem_seed(run_seed: u64, problem_id: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in run_seed.to_le_bytes().iter().chain(problem_id.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Why an iteration added no constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationNote {
    /// Every detected technique was already denied.
    Exhausted,
    /// The detector named no taxonomy technique.
    EmptyDetection,
    /// The response held no usable program.
    NoCodeFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIteration {
    pub t: usize,
    pub prompt_text: String,
    pub solution: Solution,
    pub detected: TechniqueSet,
    pub sampled_constraint: Option<Technique>,
    pub constraint_list_after: Vec<Technique>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<IterationNote>,
    pub params: DecodingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationTrace {
    pub problem_id: String,
    pub rng_seed: u64,
    pub max_t: usize,
    pub iterations: Vec<TraceIteration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("iteration {index} has t={t}, expected {expected}")]
    Numbering { index: usize, t: usize, expected: usize },
    #[error("iteration t={t}: constraint list does not extend the previous one")]
    NotPrefix { t: usize },
    #[error("iteration t={t}: constraint list grew by more than the sampled technique")]
    Growth { t: usize },
    #[error("iteration t={t}: sampled technique was already denied")]
    Resampled { t: usize },
    #[error("trace has {iterations} iterations but max_t={max_t}")]
    TooLong { iterations: usize, max_t: usize },
}

impl AugmentationTrace {
    /// Constraint list in force before iteration `t` (1-based); `C_0` is empty.
    pub fn constraints_before(&self, t: usize) -> &[Technique] {
        match t.checked_sub(2).and_then(|i| self.iterations.get(i)) {
            Some(prev) => &prev.constraint_list_after,
            None => &[],
        }
    }

    /// Every state `C_0..C_n` reached, including ones that fail the
    /// `|C_t| = t` filter.
    pub fn all_states(&self) -> Vec<ConstraintState> {
        std::iter::once(Vec::new())
            .chain(self.iterations.iter().map(|it| it.constraint_list_after.clone()))
            .enumerate()
            .map(|(t, constraints)| ConstraintState {
                problem_id: self.problem_id.clone(),
                t,
                constraints,
            })
            .collect()
    }

    /// States that carry exactly `t` constraints. These are always a prefix
    /// `0..=k` of the iteration indices.
    pub fn valid_states(&self) -> Vec<ConstraintState> {
        self.all_states().into_iter().take_while(ConstraintState::is_state_valid).collect()
    }

    /// Checks numbering, prefix monotonicity, and that each list grows by at
    /// most the freshly sampled technique.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.iterations.len() > self.max_t {
            return Err(TraceError::TooLong {
                iterations: self.iterations.len(),
                max_t: self.max_t,
            });
        }
        let mut before: &[Technique] = &[];
        for (index, it) in self.iterations.iter().enumerate() {
            if it.t != index + 1 {
                return Err(TraceError::Numbering {
                    index,
                    t: it.t,
                    expected: index + 1,
                });
            }
            let after = &it.constraint_list_after;
            if !after.starts_with(before) {
                return Err(TraceError::NotPrefix { t: it.t });
            }
            match (it.sampled_constraint, &after[before.len()..]) {
                (None, []) => {}
                (Some(c), [added]) if *added == c => {
                    if before.contains(&c) {
                        return Err(TraceError::Resampled { t: it.t });
                    }
                }
                _ => return Err(TraceError::Growth { t: it.t }),
            }
            before = after;
        }
        Ok(())
    }
}

/// A model failure part-way through; `trace` holds the completed iterations.
#[derive(Debug, Clone, Error)]
#[error("augmentation of {} stopped at iteration {}: {source}", .trace.problem_id, .trace.iterations.len() + 1)]
pub struct AugmentError {
    pub trace: AugmentationTrace,
    pub source: ModelError,
}

/// Runs up to `max_t` denial iterations on one problem.
///
/// Solving happens in one persistent session; each detection uses a fresh
/// one. `seed` feeds the constraint sampler directly, see [`problem_seed`].
pub fn augment_problem(problem: &Problem, client: &ChatClient, max_t: usize, seed: u64) -> Result<AugmentationTrace, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = AugmentationTrace {
        problem_id: problem.id.clone(),
        rng_seed: seed,
        max_t,
        iterations: Vec::with_capacity(max_t),
    };
    let producer = client.params().model.clone();
    let mut session = client.open_session(SOLVING_PROMPT);
    let mut constraints: Vec<Technique> = Vec::new();

    for t in 1..=max_t {
        let prompt_text = render_problem(problem, &constraints);
        let raw = match session.send(&prompt_text) {
            Ok(raw) => raw,
            Err(source) => return Err(AugmentError { trace, source }),
        };
        let mut iteration = TraceIteration {
            t,
            prompt_text,
            solution: Solution::failed(String::new(), producer.clone(), SolutionError::NoCodeFound),
            detected: TechniqueSet::empty(),
            sampled_constraint: None,
            constraint_list_after: constraints.clone(),
            note: None,
            params: client.params().clone(),
        };
        let source = match extract_code(&raw) {
            Ok(source) => source,
            Err(_) => {
                iteration.solution.raw_response = raw;
                iteration.note = Some(IterationNote::NoCodeFound);
                trace.iterations.push(iteration);
                continue;
            }
        };
        iteration.solution = Solution::extracted(raw, source.clone(), producer.clone());
        match detect_with_model(&source, client) {
            Ok(found) => iteration.detected = found.techniques,
            Err(DetectError::Model(source)) => return Err(AugmentError { trace, source }),
            Err(DetectError::EmptyDetection { .. } | DetectError::Parse(_)) => {
                iteration.note = Some(IterationNote::EmptyDetection);
            }
        }
        if iteration.note.is_none() {
            match sample_constraint(&iteration.detected, &constraints, &mut rng) {
                Some(denied) => {
                    constraints.push(denied);
                    iteration.sampled_constraint = Some(denied);
                    iteration.constraint_list_after = constraints.clone();
                }
                None => iteration.note = Some(IterationNote::Exhausted),
            }
        }
        tracing::debug!(target: "neogauge::denial", problem = %problem.id, t, denied = ?iteration.sampled_constraint, note = ?iteration.note);
        trace.iterations.push(iteration);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{FnBackend, Message, Role};
    use crate::prompts::DETECTION_PROMPT;

    fn problem() -> Problem {
        Problem {
            id: "1A".into(),
            statement: "Doubling\nRead n and print 2n.".into(),
            tests: vec![],
            human_solutions: vec![],
            difficulty: 800,
        }
    }

    #[test]
    fn render_lists_newest_constraint_first() {
        let p = problem();
        assert_eq!(render_problem(&p, &[]), p.statement);
        assert_eq!(
            render_problem(&p, &[Technique::FOR_LOOP]),
            "Doubling\nProgramming constraints: DO NOT use the following techniques\n- for loop\nRead n and print 2n."
        );
        assert_eq!(
            render_problem(&p, &[Technique::FOR_LOOP, Technique::IF_STATEMENT]),
            "Doubling\nProgramming constraints: DO NOT use the following techniques\n- if statement\n- for loop\nRead n and print 2n."
        );
    }

    #[test]
    fn sampling_singletons_and_exhaustion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one: TechniqueSet = [Technique::FOR_LOOP].into_iter().collect();
        assert_eq!(sample_constraint(&one, &[], &mut rng), Some(Technique::FOR_LOOP));
        assert_eq!(sample_constraint(&one, &[Technique::FOR_LOOP], &mut rng), None);
    }

    #[test]
    fn sampling_is_uniform_over_remaining() {
        let detected: TechniqueSet = [Technique::FOR_LOOP, Technique::IF_STATEMENT, Technique::SET].into_iter().collect();
        let existing = [Technique::FOR_LOOP];
        let mut counts = [0u32; 2];
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let first = sample_constraint(&detected, &existing, &mut rng).unwrap();
            let mut again = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample_constraint(&detected, &existing, &mut again), Some(first));
            match first {
                Technique::IF_STATEMENT => counts[0] += 1,
                Technique::SET => counts[1] += 1,
                other => panic!("sampled {other:?}"),
            }
        }
        let expected = 5_000.0;
        let chi2: f64 = counts.iter().map(|&c| (f64::from(c) - expected).powi(2) / expected).sum();
        // Critical value for one degree of freedom at p = 0.01.
        assert!(chi2 < 6.635, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn seeds_depend_on_problem_and_run() {
        assert_eq!(problem_seed(7, "1A"), problem_seed(7, "1A"));
        assert_ne!(problem_seed(7, "1A"), problem_seed(7, "1B"));
        assert_ne!(problem_seed(7, "1A"), problem_seed(8, "1A"));
    }

    fn for_if_client() -> ChatClient {
        ChatClient::new(FnBackend::new(|history: &[Message]| {
            if history[0].content == DETECTION_PROMPT {
                Ok("- for loop\n- if statement\n- something odd".to_string())
            } else {
                assert_eq!(history[0].role, Role::System);
                Ok("```python\ndef solve():\n    for i in range(3):\n        if i:\n            print(i)\n```".to_string())
            }
        }))
    }

    #[test]
    fn exhaustion_keeps_constraints_and_continues() {
        let trace = augment_problem(&problem(), &for_if_client(), 3, 11).unwrap();
        let lens: Vec<usize> = trace.iterations.iter().map(|it| it.constraint_list_after.len()).collect();
        assert_eq!(lens, [1, 2, 2]);
        assert_eq!(trace.iterations[2].note, Some(IterationNote::Exhausted));
        assert_eq!(trace.iterations[2].sampled_constraint, None);
        trace.validate().unwrap();
        assert_eq!(trace.valid_states().len(), 3);
        assert_eq!(trace.all_states().len(), 4);
    }

    #[test]
    fn solving_session_accumulates_history() {
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        let client = ChatClient::new(FnBackend::new(move |history: &[Message]| {
            if history[0].content == DETECTION_PROMPT {
                assert_eq!(history.len(), 2, "detection must use a fresh session");
                return Ok("- for loop".to_string());
            }
            log.lock().unwrap().push(history.len());
            Ok("def solve():\n    for _ in range(1):\n        print(1)\n".to_string())
        }));
        augment_problem(&problem(), &client, 3, 1).unwrap();
        assert_eq!(*seen.lock().unwrap(), [2, 4, 6]);
    }

    #[test]
    fn prose_reply_is_a_failed_iteration() {
        let client = ChatClient::new(FnBackend::new(|_: &[Message]| {
            Ok("I need more details about the input.".to_string())
        }));
        let trace = augment_problem(&problem(), &client, 2, 0).unwrap();
        assert!(trace.iterations.iter().all(|it| it.note == Some(IterationNote::NoCodeFound)));
        assert!(trace.iterations.iter().all(|it| it.constraint_list_after.is_empty()));
        assert_eq!(trace.valid_states().len(), 1);
    }

    #[test]
    fn model_failure_keeps_partial_trace() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let client = ChatClient::new(FnBackend::new(move |history: &[Message]| {
            if history[0].content == DETECTION_PROMPT {
                return Ok("- for loop\n- while loop".to_string());
            }
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 1 {
                return Err(ModelError::Transport("reset".into()));
            }
            Ok("def solve():\n    print(1)\n".to_string())
        }));
        let err = augment_problem(&problem(), &client, 5, 0).unwrap_err();
        assert_eq!(err.trace.iterations.len(), 1);
        assert_eq!(err.source, ModelError::Transport("reset".into()));
    }

    #[test]
    fn validate_rejects_broken_traces() {
        let mut trace = augment_problem(&problem(), &for_if_client(), 2, 3).unwrap();
        trace.iterations[1].constraint_list_after.reverse();
        assert!(matches!(trace.validate(), Err(TraceError::NotPrefix { t: 2 })));
    }
}
