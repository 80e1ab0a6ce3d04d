//! Shared generators for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strata_gmle::{
    component_density, LikelihoodMatrix, MixingWeights, Observation, Scenario, SupportGrid,
    ThetaPoint,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random positive matrix with entries spanning several orders of magnitude.
pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> LikelihoodMatrix {
    let data = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| 10f64.powf(r.random_range(-6.0..0.0)))
                .collect()
        })
        .collect();
    LikelihoodMatrix::from_rows(data).unwrap()
}

/// Distinct random rows with multiplicities, total weight at least `min_total`
/// (the shape of a compressed outcome table from a dataset of that size).
pub fn random_weighted_matrix(
    r: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    min_total: usize,
) -> LikelihoodMatrix {
    let data = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| 10f64.powf(r.random_range(-6.0..0.0)))
                .collect()
        })
        .collect();
    let base = min_total.div_ceil(rows);
    let mult = (0..rows)
        .map(|_| (base + r.random_range(0..base)) as f64)
        .collect();
    LikelihoodMatrix::from_weighted_rows(data, mult).unwrap()
}

pub fn random_weights(r: &mut ChaCha8Rng, len: usize) -> MixingWeights {
    MixingWeights::from_unnormalized((0..len).map(|_| r.random_range(0.01..1.0)).collect()).unwrap()
}

/// Observations with `k <= kmax`, roughly a quarter of them empty.
pub fn random_obs(r: &mut ChaCha8Rng, n: usize, kmax: u64) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let k = if r.random_bool(0.25) {
                0
            } else {
                r.random_range(1..=kmax)
            };
            Observation {
                x: r.random_range(0..=k),
                k,
            }
        })
        .collect()
}

/// Binomial grid symmetric in `p` (so `p -> 1 - p` maps it onto itself).
pub fn symmetric_binomial_grid(kappa: u64, n1: usize, n2: usize) -> SupportGrid {
    let pis: Vec<f64> = (0..n1)
        .map(|i| 0.05 + 0.9 * i as f64 / (n1 - 1) as f64)
        .collect();
    let ps: Vec<f64> = (0..n2)
        .map(|i| 0.05 + 0.9 * i as f64 / (n2 - 1) as f64)
        .collect();
    SupportGrid::product(Scenario::BinomialSampleSize { kappa }, &pis, &ps).unwrap()
}

/// Poisson grid on `(lambda, p)` coordinates, symmetric in `p`.
pub fn symmetric_poisson_grid(lambdas: &[f64], ps: &[f64]) -> SupportGrid {
    let points = lambdas
        .iter()
        .flat_map(|&l| {
            ps.iter()
                .map(move |&p| ThetaPoint::poisson_from_rate(l, p).unwrap())
        })
        .collect();
    SupportGrid::from_points(Scenario::PoissonSampleSize, points).unwrap()
}

/// Round `n * q_y` for the mixture `(t, 1 - t)`, nudged so the sample is not an exact fit.
pub fn expected_sample(
    scenario: Scenario,
    pts: &[ThetaPoint; 2],
    t: f64,
    n: usize,
) -> Vec<Observation> {
    let kmax = match scenario {
        Scenario::BinomialSampleSize { kappa } => kappa,
        Scenario::PoissonSampleSize => 6,
    };
    let mut obs = Vec::new();
    for k in 0..=kmax {
        for x in 0..=k {
            let y = Observation { x, k };
            let q = t * component_density(y, pts[0], scenario).unwrap()
                + (1.0 - t) * component_density(y, pts[1], scenario).unwrap();
            let count = (n as f64 * q + 0.3 * (x as f64 - 0.5)).round().max(0.0) as usize;
            obs.extend(std::iter::repeat_n(y, count));
        }
    }
    obs
}
