//! Runs a sweep through the same entry point as the command line, writes
//! its manifest and metrics, then renders the metrics to SVG.
//!
//! The output directory is the first argument, or a temp directory.

use std::path::PathBuf;

use graddiag::cli::{render_svg, run_with};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("graddiag-sweep"));
    let argv = [
        "graddiag",
        "parity",
        "--dims",
        "4,12",
        "--iters",
        "1500",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    let code = run_with(argv, None);
    println!("exit code {code}");

    let files: Vec<PathBuf> = ["d4", "d12"]
        .iter()
        .map(|d| out.join("parity").join(d).join("metrics.csv"))
        .collect();
    let svg = render_svg(&files, "parity accuracy").expect("metrics exist");
    let target = out.join("parity.svg");
    std::fs::write(&target, svg).expect("writable output directory");
    println!("wrote {}", target.display());
}
