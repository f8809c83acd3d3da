//! Judges a few programs against one toy problem and prints per-test
//! outcomes.
//!
//! `cargo run --example judge_solution`

use std::time::Duration;

use neogauge::sandbox::{extract_code, Judge, ResourceLimits};
use neogauge::toy::ToyBenchmark;

fn main() {
    let toy = ToyBenchmark::load();
    let problem = &toy.problems[0].problem;
    println!("{}", problem.title());
    let judge = Judge::new(ResourceLimits {
        wall_time_per_test: Duration::from_secs(2),
        ..ResourceLimits::default()
    })
    .expect("limits are positive")
    .fail_fast(false);

    let responses = [
        ("correct", "```python\ndef solve():\n    input()\n    print(sum(map(int, input().split())))\n```"),
        ("off by one", "```python\ndef solve():\n    input()\n    print(sum(map(int, input().split())) + 1)\n```"),
        ("never ends", "```python\ndef solve():\n    while True:\n        pass\n```"),
        ("prose", "Could you tell me whether the numbers fit in 64 bits?"),
    ];
    for (label, response) in responses {
        let Ok(source) = extract_code(response) else {
            println!("{label}: no code found");
            continue;
        };
        let verdict = judge.judge(&source, &problem.tests).expect("python3 is available");
        let statuses: Vec<String> = verdict.outcomes.iter().map(|o| format!("{:?}", o.status)).collect();
        println!("{label}: correct={} [{}]", verdict.correct, statuses.join(", "));
    }
}
