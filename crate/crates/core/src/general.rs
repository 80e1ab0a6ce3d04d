//! Weighted, non-binary outcomes by threshold integration.
//!
//! For `Z = a * X >= 0`, `E Z = integral_0^inf P(Z > c) dc`. At each threshold
//! `c` the indicators `Z > c` form a binary problem that the GMLE pipeline
//! solves; the resulting survival estimates are integrated over `c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::estimators::estimate;
use crate::model::{GridSpec, Observation, Scenario};

/// Observed values of one stratum with its population weight. No values means `K = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralStratum {
    pub a: f64,
    pub values: Vec<f64>,
}

impl GeneralStratum {
    pub fn new(a: f64, values: Vec<f64>) -> Self {
        Self { a, values }
    }

    pub fn empty(a: f64) -> Self {
        Self {
            a,
            values: Vec::new(),
        }
    }

    fn scaled(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |v| self.a * v)
    }
}

fn validate(strata: &[GeneralStratum]) -> Result<()> {
    for (i, s) in strata.iter().enumerate() {
        if !(s.a >= 0.0) || !s.a.is_finite() {
            return Err(Error::NegativeValue {
                stratum: i,
                value: s.a,
            });
        }
        if let Some(&v) = s.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeValue {
                stratum: i,
                value: v,
            });
        }
    }
    if strata.iter().all(|s| s.values.is_empty()) {
        return Err(Error::AllStrataEmpty);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    /// `0 = c_0 < c_1 < ... < c_T`.
    pub thresholds: Vec<f64>,
    /// Upper end of the last integration cell: the largest observed `Z`.
    pub z_max: f64,
    pub max_thresholds: usize,
}

/// `{0}` plus every distinct observed `Z` below the maximum, thinned to
/// empirical quantiles when there are more than `max_thresholds`.
pub fn build_threshold_plan(
    strata: &[GeneralStratum],
    max_thresholds: usize,
) -> Result<ThresholdPlan> {
    validate(strata)?;
    if max_thresholds == 0 {
        return Err(Error::Config("max_thresholds must be at least 1".into()));
    }
    let mut z: Vec<f64> = strata.iter().flat_map(GeneralStratum::scaled).collect();
    z.sort_by(f64::total_cmp);
    let z_max = *z.last().expect("validated nonempty");
    let mut interior: Vec<f64> = z
        .iter()
        .copied()
        .filter(|&v| v > 0.0 && v < z_max)
        .collect();
    interior.dedup();

    let thresholds = if interior.len() + 1 <= max_thresholds {
        std::iter::once(0.0).chain(interior).collect()
    } else {
        // Quantiles of the pooled Z sample at levels i / max_thresholds.
        let mut t = vec![0.0];
        let n = z.len();
        for i in 1..max_thresholds {
            let pos = ((i as f64 / max_thresholds as f64) * n as f64).ceil() as usize;
            let q = z[pos.clamp(1, n) - 1];
            if q > *t.last().unwrap() && q < z_max {
                t.push(q);
            }
        }
        t
    };
    Ok(ThresholdPlan {
        thresholds,
        z_max,
        max_thresholds,
    })
}

/// `(#{j : a * values[j] > c}, |values|)` per stratum.
pub fn binary_reduce(strata: &[GeneralStratum], c: f64) -> Vec<Observation> {
    strata
        .iter()
        .map(|s| Observation {
            x: s.scaled().filter(|&z| z > c).count() as u64,
            k: s.values.len() as u64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralEstimate {
    pub estimate: f64,
    pub thresholds: Vec<f64>,
    /// GMLE survival estimate at each threshold, before monotone cleanup.
    pub raw_survival: Vec<f64>,
    /// Running minimum of `raw_survival`.
    pub survival: Vec<f64>,
    /// Number of thresholds where the raw estimate increased.
    pub monotonicity_violations: usize,
}

/// Integrate per-threshold GMLE survival estimates: `sum_t phat(c_t) (c_{t+1} - c_t)`
/// with `c_{T+1} = z_max`.
pub fn general_estimate(
    strata: &[GeneralStratum],
    scenario: Scenario,
    grid: &GridSpec,
    em: &EmConfig,
    plan: &ThresholdPlan,
) -> Result<GeneralEstimate> {
    validate(strata)?;
    let t = &plan.thresholds;
    if t.is_empty() || t[0] != 0.0 || t.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(
            "thresholds must start at 0 and increase strictly".into(),
        ));
    }
    let raw_survival: Vec<f64> = t
        .par_iter()
        .map(|&c| {
            let obs = binary_reduce(strata, c);
            estimate(&obs, scenario, grid, em)
                .map(|fit| fit.report.gmle_plugin)
                .map_err(|e| Error::AtThreshold {
                    threshold: c,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut survival = Vec::with_capacity(raw_survival.len());
    let mut violations = 0;
    let mut run = f64::INFINITY;
    for (i, &p) in raw_survival.iter().enumerate() {
        if i > 0 && p > raw_survival[i - 1] {
            violations += 1;
        }
        run = run.min(p);
        survival.push(run);
    }
    let estimate = survival
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let next = t.get(i + 1).copied().unwrap_or(plan.z_max);
            p * (next - t[i])
        })
        .sum();
    Ok(GeneralEstimate {
        estimate,
        thresholds: t.clone(),
        raw_survival,
        survival,
        monotonicity_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_rule() {
        let strata = vec![
            GeneralStratum::new(1.0, vec![1.0, 2.0]),
            GeneralStratum::new(1.0, vec![2.0, 5.0]),
            GeneralStratum::empty(1.0),
        ];
        let plan = build_threshold_plan(&strata, 100).unwrap();
        assert_eq!(plan.thresholds, vec![0.0, 1.0, 2.0]);
        assert_eq!(plan.z_max, 5.0);

        let single = vec![
            GeneralStratum::new(2.0, vec![1.5, 1.5]),
            GeneralStratum::new(1.0, vec![3.0]),
        ];
        let plan = build_threshold_plan(&single, 10).unwrap();
        assert_eq!(plan.thresholds, vec![0.0]);
        assert_eq!(plan.z_max, 3.0);
    }

    #[test]
    fn plan_thins_to_quantiles() {
        let values: Vec<f64> = (1..=10_000).map(|i| i as f64 / 100.0).collect();
        let plan = build_threshold_plan(&[GeneralStratum::new(1.0, values)], 100).unwrap();
        assert_eq!(plan.thresholds.len(), 100);
        assert_eq!(plan.thresholds[0], 0.0);
        // level i/100 of 10,000 equally spaced values is the (100 i)-th value
        assert_eq!(plan.thresholds[1], 1.0);
        assert_eq!(plan.thresholds[50], 50.0);
        assert_eq!(plan.thresholds[99], 99.0);
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(
            build_threshold_plan(&[GeneralStratum::empty(1.0)], 5),
            Err(Error::AllStrataEmpty)
        ));
        let neg = [GeneralStratum::new(1.0, vec![0.5, -0.1])];
        assert!(matches!(
            build_threshold_plan(&neg, 5),
            Err(Error::NegativeValue { stratum: 0, .. })
        ));
    }

    #[test]
    fn reduce_counts() {
        let strata = vec![
            GeneralStratum::new(1.0, vec![0.2, 0.7]),
            GeneralStratum::empty(3.0),
            GeneralStratum::new(2.0, vec![0.2, 0.3]),
        ];
        assert_eq!(
            binary_reduce(&strata, 0.5),
            vec![
                Observation { x: 1, k: 2 },
                Observation::EMPTY,
                Observation { x: 1, k: 2 }
            ]
        );
    }
}
