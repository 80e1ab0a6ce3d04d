//! Subsample a survey-like dataset and watch the estimators as strata empty out.
//!
//! The design has 156 strata with Poisson sample sizes; strata with higher
//! rates have lower proportions, so dropping units biases the naive estimator.

use strata_gmle::{
    draw_dataset, estimate, thin_dataset, EmConfig, GridSpec, Law, Scenario, StrataDesign,
    StrataGroup,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = StrataDesign::new(
        Scenario::PoissonSampleSize,
        vec![
            StrataGroup {
                count: 78,
                theta1: Law::Uniform(4.0, 12.0),
                theta2: Law::Uniform(0.1, 0.3),
            },
            StrataGroup {
                count: 78,
                theta1: Law::Uniform(1.0, 4.0),
                theta2: Law::Uniform(0.3, 0.6),
            },
        ],
    )?;
    let full = draw_dataset(&design, 11);
    println!("true p {:.3}", design.true_p());
    println!(
        "{:>6} {:>6} {:>8} {:>8} {:>8}",
        "gamma", "empty", "naive", "gmle", "psi*"
    );
    for gamma in [1.0, 0.5, 0.25, 0.1, 0.05] {
        let obs = thin_dataset(&full, gamma, 4)?;
        let fit = estimate(
            &obs,
            design.scenario,
            &GridSpec::with_dims(25, 25),
            &EmConfig::default(),
        )?;
        let r = &fit.report;
        println!(
            "{gamma:>6} {:>6} {:>8.3} {:>8.3} {:>8.3}",
            r.m_zero,
            r.naive.unwrap_or(f64::NAN),
            r.gmle_plugin,
            r.psi_star
        );
    }
    Ok(())
}
