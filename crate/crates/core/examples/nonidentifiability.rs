//! With at most one sampled unit per stratum, different mixing distributions
//! can fit the data equally well yet imply different population averages.

use strata_gmle::{
    build_likelihood_matrix, fit_on_grid, gmle_plugin, log_likelihood, EmConfig, MixingWeights,
    Observation, Scenario, SupportGrid, ThetaPoint,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Outcomes: one success, one failure, or nothing sampled, in proportions 1/4, 1/4, 1/2.
    let mut obs = vec![Observation { x: 1, k: 1 }; 25];
    obs.extend(vec![Observation { x: 0, k: 1 }; 25]);
    obs.extend(vec![Observation::EMPTY; 50]);

    let points = [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 0.5)]
        .into_iter()
        .map(|(pi, p)| ThetaPoint::binomial(pi, p))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = SupportGrid::from_points(Scenario::BinomialSampleSize { kappa: 1 }, points)?;
    let l = build_likelihood_matrix(&obs, &grid)?;

    let candidates = [
        ("point mass at (0.5, 0.5)", MixingWeights::point_mass(4, 3)),
        (
            "three-point mixture",
            MixingWeights::new(vec![0.5, 0.25, 0.25, 0.0])?,
        ),
    ];
    for (label, w) in &candidates {
        println!(
            "{label:<26} loglik {:.6}  E[p] {:.3}",
            log_likelihood(&l, w)?,
            gmle_plugin(&grid, w)
        );
    }

    let fit = fit_on_grid(&obs, grid, &EmConfig::default())?;
    println!(
        "{:<26} loglik {:.6}  E[p] {:.3}  weights {:.3?}",
        "EM from uniform",
        fit.em.final_log_likelihood(),
        fit.report.gmle_plugin,
        fit.em.weights.as_slice()
    );
    Ok(())
}
