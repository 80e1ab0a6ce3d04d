//! Replicated comparison of the estimators on the built-in designs.
//!
//! ```text
//! cargo run --release -p strata-gmle --example simulation_tables -- [reps] [preset ...]
//! ```
//!
//! With no presets listed, every built-in design is run.

use std::time::Instant;

use strata_gmle::sim::PRESETS;
use strata_gmle::{preset, run_replications, EmConfig, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let mut names: Vec<String> = args.collect();
    if names.is_empty() {
        names = PRESETS.iter().map(|s| s.to_string()).collect();
    }

    println!(
        "{:<6} {:>16} {:>16} {:>16} {:>16} {:>10}",
        "design", "naive", "collapse", "gmle", "psi*", "|psi*-g|"
    );
    for name in &names {
        let design = preset(name).ok_or_else(|| format!("unknown preset {name}"))?;
        let start = Instant::now();
        let s = run_replications(
            &design,
            reps,
            &EmConfig::default(),
            &GridSpec::default(),
            2024,
        )?;
        let cell = |n: &str| {
            let e = s.get(n).unwrap();
            format!(
                "{:.3} ({:.3})",
                e.mean.unwrap_or(f64::NAN),
                e.sd.unwrap_or(f64::NAN)
            )
        };
        println!(
            "{:<6} {:>16} {:>16} {:>16} {:>16} {:>10.5}   [{:.1}s]",
            name,
            cell("naive"),
            cell("extreme_collapse"),
            cell("gmle"),
            cell("psi_star"),
            s.mean_psi_gmle_gap(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
