//! Likelihood-ratio bounds for the population average at several levels.

use strata_gmle::{
    ci_bounds, default_grid, draw_dataset, preset, CiConfig, ConstraintMode, Error, GridSpec,
    OutcomeTable,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = preset("t2r2").ok_or("missing preset")?;
    let obs = draw_dataset(&design, 5);
    let grid = default_grid(design.scenario, &obs, &GridSpec::with_dims(20, 20))?;
    let table = OutcomeTable::from_observations(&obs);
    println!(
        "{} strata, {} distinct outcomes, true p = {}",
        obs.len(),
        table.len(),
        design.true_p()
    );

    for alpha in [0.2, 0.1, 0.05, 0.01] {
        let ci = ci_bounds(&table, &grid, &CiConfig::with_alpha(alpha))?;
        println!(
            "chi2   alpha {alpha:<5} [{:.4}, {:.4}]  gmle {:.4}  threshold {:.2}",
            ci.lower, ci.upper, ci.gmle_plugin, ci.threshold
        );
    }
    for alpha_exp in [0.1, 0.6, 1.0] {
        let cfg = CiConfig {
            mode: ConstraintMode::LogPower { alpha_exp },
            ..CiConfig::default()
        };
        match ci_bounds(&table, &grid, &cfg) {
            Ok(ci) => println!(
                "log(n)^{:<4}          [{:.4}, {:.4}]  threshold {:.2}",
                1.0 + alpha_exp,
                ci.lower,
                ci.upper,
                ci.threshold
            ),
            Err(Error::InfeasibleConstraint {
                deviance,
                threshold,
            }) => {
                println!("log(n)^{:<4}          infeasible: deviance at GMLE {deviance:.2} > {threshold:.2}", 1.0 + alpha_exp)
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
