//! Point estimators of `p = E_G[theta2]`: the naive average over observed
//! strata, the fully collapsed ratio, the GMLE plug-in, and the hybrid that
//! fills empty strata with the fitted posterior mean given `K = 0`.

use serde::{Deserialize, Serialize};

use crate::em::{fit_gmle, EmConfig, EmResult};
use crate::error::{Error, Result};
use crate::model::{
    build_outcome_likelihood, default_grid, ln_component_density, GridSpec, LikelihoodMatrix,
    MixingWeights, Observation, OutcomeTable, SupportGrid, ThetaPoint,
};

/// Mean of `x/k` over strata with `k > 0`.
pub fn naive_estimator(obs: &[Observation]) -> Result<f64> {
    let (sum, m) = obs
        .iter()
        .filter_map(Observation::proportion)
        .fold((0.0, 0usize), |(s, m), p| (s + p, m + 1));
    if m == 0 {
        return Err(Error::AllStrataEmpty);
    }
    Ok(sum / m as f64)
}

/// Pooled ratio `sum x / sum k`.
pub fn extreme_collapse(obs: &[Observation]) -> Result<f64> {
    let (x, k) = obs
        .iter()
        .fold((0u64, 0u64), |(x, k), o| (x + o.x, k + o.k));
    if k == 0 {
        return Err(Error::AllStrataEmpty);
    }
    Ok(x as f64 / k as f64)
}

/// `E_w[eta(theta)]` for an arbitrary functional of the support point.
pub fn plugin_expectation<F>(grid: &SupportGrid, w: &MixingWeights, eta: F) -> f64
where
    F: Fn(&ThetaPoint) -> f64,
{
    grid.points()
        .iter()
        .zip(w.as_slice())
        .map(|(t, wj)| wj * eta(t))
        .sum()
}

/// The GMLE plug-in `E_w[theta2]`.
pub fn gmle_plugin(grid: &SupportGrid, w: &MixingWeights) -> f64 {
    plugin_expectation(grid, w, ThetaPoint::theta2)
}

/// `E_w[eta(theta) | y]` given the likelihood row of `y` (any positive scaling).
pub fn posterior_expectation<F>(
    grid: &SupportGrid,
    w: &MixingWeights,
    l_row: &[f64],
    eta: F,
) -> Result<f64>
where
    F: Fn(&ThetaPoint) -> f64,
{
    let (mut num, mut den) = (0.0, 0.0);
    for ((t, wj), lj) in grid.points().iter().zip(w.as_slice()).zip(l_row) {
        let a = wj * lj;
        num += a * eta(t);
        den += a;
    }
    if !(den > 0.0) {
        return Err(Error::NumericalUnderflow { row: 0 });
    }
    Ok(num / den)
}

/// Posterior mean of `theta2` for one stratum.
///
/// `y` is carried for interface symmetry; the likelihood row fully determines the result.
pub fn posterior_mean(
    _y: Observation,
    grid: &SupportGrid,
    w: &MixingWeights,
    l_row: &[f64],
) -> Result<f64> {
    posterior_expectation(grid, w, l_row, ThetaPoint::theta2)
}

/// Likelihood row of the empty observation `(0, 0)`: `exp(-(xi1 + xi2))` on
/// Poisson grids and `(1 - pi)^kappa` on Binomial grids.
pub fn empty_stratum_row(grid: &SupportGrid) -> Result<Vec<f64>> {
    let scenario = grid.scenario();
    let logs: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| ln_component_density(Observation::EMPTY, t, scenario))
        .collect::<Result<_>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericalUnderflow { row: 0 });
    }
    Ok(logs.into_iter().map(|l| (l - max).exp()).collect())
}

/// Posterior mean of `theta2` for a stratum with no observations.
pub fn empty_stratum_posterior(grid: &SupportGrid, w: &MixingWeights) -> Result<f64> {
    posterior_mean(Observation::EMPTY, grid, w, &empty_stratum_row(grid)?)
}

/// `(1/n) [ sum_{k>0} x/k + sum_{k=0} E_w(theta2 | K = 0) ]`.
pub fn psi_star_estimator(
    obs: &[Observation],
    grid: &SupportGrid,
    w: &MixingWeights,
) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyData);
    }
    let m_zero = obs.iter().filter(|o| o.is_empty()).count();
    let observed: f64 = obs.iter().filter_map(Observation::proportion).sum();
    let fill = if m_zero > 0 {
        empty_stratum_posterior(grid, w)?
    } else {
        0.0
    };
    Ok((observed + m_zero as f64 * fill) / obs.len() as f64)
}

/// Posterior means of `theta2` for every row of `l`.
pub fn row_posterior_means(
    grid: &SupportGrid,
    w: &MixingWeights,
    l: &LikelihoodMatrix,
) -> Result<Vec<f64>> {
    (0..l.rows())
        .map(|i| {
            posterior_expectation(grid, w, l.row(i), ThetaPoint::theta2)
                .map_err(|_| Error::NumericalUnderflow { row: i })
        })
        .collect()
}

/// `|E_w[theta2] - mean_i E_w(theta2 | y_i)|`, weighting rows by multiplicity.
///
/// Vanishes (to rounding) at EM fixed points; off them it is only a diagnostic.
pub fn agreement_check(grid: &SupportGrid, w: &MixingWeights, l: &LikelihoodMatrix) -> Result<f64> {
    let post = row_posterior_means(grid, w, l)?;
    let mean = post
        .iter()
        .zip(l.multiplicity())
        .map(|(p, m)| p * m)
        .sum::<f64>()
        / l.total_weight();
    Ok((gmle_plugin(grid, w) - mean).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub naive: Option<f64>,
    pub extreme_collapse: Option<f64>,
    pub gmle_plugin: f64,
    pub psi_star: f64,
    /// One entry per stratum, in input order.
    pub posterior_means: Vec<f64>,
    /// Number of strata with `k = 0`.
    pub m_zero: usize,
}

impl EstimateReport {
    /// `(name, value)` pairs in a fixed order.
    pub fn rows(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("naive", self.naive),
            ("extreme_collapse", self.extreme_collapse),
            ("gmle", Some(self.gmle_plugin)),
            ("psi_star", Some(self.psi_star)),
        ]
    }
}

/// Everything produced by one fit of the estimation pipeline.
#[derive(Debug, Clone)]
pub struct Fit {
    pub grid: SupportGrid,
    pub outcomes: OutcomeTable,
    /// Row of `outcomes` for each input stratum.
    pub outcome_of: Vec<usize>,
    pub likelihood: LikelihoodMatrix,
    pub em: EmResult,
    pub report: EstimateReport,
}

impl Fit {
    pub fn agreement(&self) -> Result<f64> {
        agreement_check(&self.grid, &self.em.weights, &self.likelihood)
    }
}

/// Fit on a prepared grid.
pub fn fit_on_grid(obs: &[Observation], grid: SupportGrid, em: &EmConfig) -> Result<Fit> {
    if obs.is_empty() {
        return Err(Error::EmptyData);
    }
    let (outcomes, outcome_of) = OutcomeTable::tabulate(obs);
    let likelihood = build_outcome_likelihood(&outcomes, &grid).map_err(|e| match e {
        Error::ZeroLikelihoodRow { i } => {
            let stratum = outcome_of.iter().position(|&r| r == i).unwrap_or(i);
            Error::ZeroLikelihoodRow { i: stratum }
        }
        other => other,
    })?;
    let em = fit_gmle(&likelihood, em)?;
    let w = &em.weights;
    let per_outcome = row_posterior_means(&grid, w, &likelihood)?;
    let report = EstimateReport {
        naive: naive_estimator(obs).ok(),
        extreme_collapse: extreme_collapse(obs).ok(),
        gmle_plugin: gmle_plugin(&grid, w),
        psi_star: psi_star_estimator(obs, &grid, w)?,
        posterior_means: outcome_of.iter().map(|&r| per_outcome[r]).collect(),
        m_zero: obs.iter().filter(|o| o.is_empty()).count(),
    };
    Ok(Fit {
        grid,
        outcomes,
        outcome_of,
        likelihood,
        em,
        report,
    })
}

/// Full pipeline: grid from `spec`, EM from `em`, then every estimator.
pub fn estimate(
    obs: &[Observation],
    scenario: crate::model::Scenario,
    spec: &GridSpec,
    em: &EmConfig,
) -> Result<Fit> {
    scenario.validate(obs)?;
    let grid = default_grid(scenario, obs, spec)?;
    fit_on_grid(obs, grid, em)
}
