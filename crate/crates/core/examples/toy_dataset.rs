//! Writes the bundled toy benchmark as a dataset directory.
//!
//! ```text
//! cargo run --example toy_dataset -- out/toy
//! ```

use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/toy".into()));
    neogauge::cli::write_toy_dataset(&dir).expect("write toy dataset");
    println!("wrote {}", dir.display());
}
