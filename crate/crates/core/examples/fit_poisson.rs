//! Fit the GMLE to one simulated Poisson dataset and compare the estimators.
//!
//! ```text
//! cargo run --release -p strata-gmle --example fit_poisson -- [preset] [seed]
//! ```

use strata_gmle::{draw_dataset, estimate, preset, EmConfig, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "t1r3".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let design = preset(&name).ok_or("unknown preset")?;
    let obs = draw_dataset(&design, seed);

    let fit = estimate(
        &obs,
        design.scenario,
        &GridSpec::default(),
        &EmConfig::default(),
    )?;
    println!(
        "{name}: {} strata, {} empty, true p = {}",
        obs.len(),
        fit.report.m_zero,
        design.true_p()
    );
    for (label, value) in fit.report.rows() {
        println!(
            "  {label:<17} {}",
            value.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!(
        "  log-likelihood   {:.3} -> {:.3} after {} EM steps",
        fit.em.log_lik_trace[0],
        fit.em.final_log_likelihood(),
        fit.em.iterations
    );
    println!("  agreement gap    {:.2e}", fit.agreement()?);

    let mut atoms: Vec<_> = fit
        .grid
        .points()
        .iter()
        .zip(fit.em.weights.as_slice())
        .filter(|(_, w)| **w > 0.01)
        .collect();
    atoms.sort_by(|a, b| b.1.total_cmp(a.1));
    println!("  heaviest support points (lambda, p, weight):");
    for (t, w) in atoms.iter().take(6) {
        println!("    {:.3} {:.3} {:.3}", t.theta1(), t.theta2(), w);
    }
    Ok(())
}
