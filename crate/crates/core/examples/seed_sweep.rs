//! Runs the example pipeline for a range of root seeds and prints the
//! outcome table of each.
//!
//! `cargo run --release --example seed_sweep -- <first> <count>`

use lpvdd::experiment::{reproduce, ExampleConfig};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let first = args.first().copied().unwrap_or(0);
    let count = args.get(1).copied().unwrap_or(10);
    let mut hits = 0;
    for seed in first..first + count {
        let cfg = ExampleConfig { seed, ..ExampleConfig::default() };
        let started = std::time::Instant::now();
        match reproduce(&cfg) {
            Ok(r) => {
                let cells: Vec<String> = r
                    .manifest
                    .entries
                    .iter()
                    .map(|e| format!("{}@{}={:?}", e.method.name(), e.delta, e.status))
                    .collect();
                hits += r.manifest.matches_expected as usize;
                println!(
                    "seed {seed:>4} {} {} ({:.1}s)",
                    if r.manifest.matches_expected { "MATCH" } else { "     " },
                    cells.join(" "),
                    started.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("seed {seed:>4} error: {e}"),
        }
    }
    println!("{hits}/{count} seeds reproduce the expected table");
}
