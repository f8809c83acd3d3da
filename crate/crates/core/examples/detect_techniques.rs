//! Prints the techniques the static detector finds in Python files.
//!
//! `cargo run --example detect_techniques -- solution.py [more.py ...]`
//! Without arguments it analyses a built-in sample.

use neogauge::detect::detect_static;

const SAMPLE: &str = r#"import heapq
from collections import Counter

def solve():
    counts = Counter(input().split())
    heap = [(-c, w) for w, c in counts.items()]
    heapq.heapify(heap)
    while heap:
        c, w = heapq.heappop(heap)
        if -c > 1:
            print(w)
"#;

fn main() {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    let inputs: Vec<(String, String)> = if paths.is_empty() {
        vec![("<sample>".into(), SAMPLE.into())]
    } else {
        paths
            .into_iter()
            .map(|p| {
                let text = std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{p}: {e}"));
                (p, text)
            })
            .collect()
    };
    for (name, source) in inputs {
        match detect_static(&source) {
            Ok(found) => {
                let names: Vec<_> = found.iter().map(|t| t.canonical_name()).collect();
                println!("{name}: {}", names.join(", "));
            }
            Err(e) => println!("{name}: {e}"),
        }
    }
}
