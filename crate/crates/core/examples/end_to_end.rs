//! Runs augment, evaluate and score on the toy benchmark through the CLI
//! entry point, with the simulated model.
//!
//! `cargo run --example end_to_end -- [output_dir]`

use std::path::PathBuf;

use neogauge::cli::run;

fn main() {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/toy-run"), PathBuf::from);
    let toy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy");
    let derived = out.join("dataset");
    let steps = [("augment", &toy), ("evaluate", &derived), ("score", &derived)];
    for (cmd, data) in steps {
        let args = ["neogauge", cmd, "--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "--k", "1"];
        let code = run(args, &mut std::io::stdout());
        if code != 0 {
            eprintln!("{cmd} exited with {code}");
            std::process::exit(code);
        }
    }
    println!("\nartefacts written to {}", out.display());
}
