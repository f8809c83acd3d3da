//! Runs the denial loop on the bundled toy problems with the simulated model
//! and prints how the constraint list grows.
//!
//! `cargo run --example denial_prompting -- [max_t] [seed]`

use neogauge::client::ChatClient;
use neogauge::denial::{augment_problem, problem_seed};
use neogauge::toy::ToyBenchmark;

fn main() {
    let mut args = std::env::args().skip(1);
    let max_t: usize = args.next().map_or(5, |a| a.parse().expect("max_t is a number"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed is a number"));
    let toy = ToyBenchmark::load();
    let client = ChatClient::new(toy.backend());
    for p in &toy.problems {
        let trace = augment_problem(&p.problem, &client, max_t, problem_seed(seed, &p.problem.id)).expect("toy model never fails");
        println!("{} ({})", p.problem.id, p.problem.title());
        for it in &trace.iterations {
            let detected: Vec<_> = it.detected.iter().map(|t| t.canonical_name()).collect();
            let denied: Vec<_> = it.constraint_list_after.iter().map(|t| t.canonical_name()).collect();
            let note = it.note.map(|n| format!(" [{n:?}]")).unwrap_or_default();
            println!("  t={} detected={detected:?} denied={denied:?}{note}", it.t);
        }
    }
}
