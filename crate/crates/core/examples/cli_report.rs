//! Driving the command-line front end from code: one verification report.

use clap::Parser;
use convex_transport::cli::{exit_status, run, RunConfig};

fn main() {
    let dir = std::env::temp_dir().join("convex-transport-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let mu = dir.join("mu.json");
    std::fs::write(&mu, r#"{"schema": 1, "dimension": 1, "points": [[0], [1]]}"#).expect("write measure");

    let args = format!("convex-transport verify dual-t- --mu {} --lambda 2 --c 0.5 --random 50", mu.display());
    let config = RunConfig::parse_from(args.split_whitespace());
    let result = run(&config);
    if let Ok(out) = &result {
        print!("{}", out.report);
    }
    println!("exit status {}", exit_status(&result));
}
