//! Writes the toy dataset to a scratch directory, loads it back and prints
//! a summary.
//!
//! `cargo run --example dataset_roundtrip`

use neogauge::cli::write_toy_dataset;
use neogauge::dataset::{filter_state, load_dataset_dir};

fn main() {
    let dir = tempfile::tempdir().expect("scratch directory");
    write_toy_dataset(dir.path()).expect("toy dataset writes");
    let data = load_dataset_dir(dir.path()).expect("toy dataset loads");
    for p in &data.problems {
        println!("{:<3} {:<24} {} tests, {} human solutions", p.id, p.title(), p.tests.len(), p.human_solutions.len());
    }
    println!("instances at t=0: {}", filter_state(&data.states, 0).len());
}
