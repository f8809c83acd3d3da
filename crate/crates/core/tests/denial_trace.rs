use std::sync::{Arc, Mutex};

use neogauge::client::{ChatClient, FnBackend, Message};
use neogauge::dataset::trace_to_string;
use neogauge::denial::{augment_problem, problem_seed, render_problem, AugmentationTrace, IterationNote};
use neogauge::detect::DETECTION_PROMPT;
use neogauge::model::{Problem, Technique};
use neogauge::toy::{detection_reply, ToyBenchmark};

fn toy_traces(seed: u64) -> Vec<AugmentationTrace> {
    let toy = ToyBenchmark::load().take(3);
    let client = ChatClient::new(toy.backend());
    toy.problems
        .iter()
        .map(|p| augment_problem(&p.problem, &client, 5, problem_seed(seed, &p.problem.id)).unwrap())
        .collect()
}

#[test]
fn toy_traces_grow_by_prefix() {
    for trace in toy_traces(7) {
        trace.validate().unwrap();
        assert_eq!(trace.iterations.len(), 5);
        for it in &trace.iterations {
            let before = trace.constraints_before(it.t);
            match it.sampled_constraint {
                Some(tau) => {
                    assert!(!before.contains(&tau), "{} t={} resampled {tau}", trace.problem_id, it.t);
                    assert!(it.detected.contains(tau));
                    assert_eq!(&it.constraint_list_after[..before.len()], before);
                    assert_eq!(it.constraint_list_after.last(), Some(&tau));
                }
                None => {
                    assert!(it.note.is_some());
                    assert_eq!(it.constraint_list_after, before);
                }
            }
        }
    }
}

#[test]
fn prompts_show_the_current_list_newest_first() {
    let toy = ToyBenchmark::load();
    for trace in toy_traces(7) {
        let problem = &toy.problems.iter().find(|p| p.problem.id == trace.problem_id).unwrap().problem;
        for it in &trace.iterations {
            assert_eq!(it.prompt_text, render_problem(problem, trace.constraints_before(it.t)));
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let first: Vec<String> = toy_traces(7).iter().map(trace_to_string).collect();
    let second: Vec<String> = toy_traces(7).iter().map(trace_to_string).collect();
    assert_eq!(first, second);
}

#[test]
fn valid_states_stop_at_the_first_stall() {
    for trace in toy_traces(7) {
        let valid = trace.valid_states();
        assert_eq!(valid[0].t, 0);
        for (k, state) in valid.iter().enumerate() {
            assert_eq!(state.t, k);
            assert!(state.is_state_valid());
        }
        let grown = trace.iterations.iter().take_while(|it| it.sampled_constraint.is_some()).count();
        assert_eq!(valid.len(), grown + 1);
    }
}

fn doubling() -> Problem {
    Problem {
        id: "D1".into(),
        statement: "Doubling\nRead n and print 2n.".into(),
        tests: vec![],
        human_solutions: vec![],
        difficulty: 800,
    }
}

#[test]
fn repeated_solution_exhausts_and_moves_on() {
    let source = "def solve():\n    for _ in range(1):\n        print(2 * int(input()))\n";
    let detection_lengths = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&detection_lengths);
    let client = ChatClient::new(FnBackend::new(move |history: &[Message]| {
        let last = history.last().map_or("", |m| m.content.as_str());
        if history.first().is_some_and(|m| m.content == DETECTION_PROMPT) {
            seen.lock().unwrap().push(history.len());
            return Ok(detection_reply(last));
        }
        Ok(format!("```python\n{source}```"))
    }));
    let trace = augment_problem(&doubling(), &client, 4, 1).unwrap();
    trace.validate().unwrap();
    let notes: Vec<_> = trace.iterations.iter().map(|it| it.note).collect();
    assert_eq!(notes, [None, Some(IterationNote::Exhausted), Some(IterationNote::Exhausted), Some(IterationNote::Exhausted)]);
    assert_eq!(trace.iterations[0].constraint_list_after, [Technique::FOR_LOOP]);
    assert!(trace.iterations.iter().all(|it| it.constraint_list_after == [Technique::FOR_LOOP]));
    // Every detection call starts from an empty conversation.
    let lengths = detection_lengths.lock().unwrap();
    assert_eq!(lengths.len(), 4);
    assert!(lengths.iter().all(|&n| n == lengths[0]));
}

#[test]
fn different_run_seeds_give_different_problem_seeds() {
    assert_ne!(problem_seed(7, "T1"), problem_seed(8, "T1"));
    assert_ne!(problem_seed(7, "T1"), problem_seed(7, "T2"));
    assert_eq!(problem_seed(7, "T1"), problem_seed(7, "T1"));
}
