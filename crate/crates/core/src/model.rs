//! Domain types for the two sampling scenarios, the support grid, and the
//! likelihood matrix consumed by the EM solver and the estimators.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::{ln_binomial_pmf, ln_poisson_pmf};

/// One stratum's realized sample: `x` successes among `k` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub x: u64,
    pub k: u64,
}

impl Observation {
    pub fn new(x: u64, k: u64) -> Result<Self> {
        if x > k {
            return Err(Error::Domain(format!(
                "success count {x} exceeds sample size {k}"
            )));
        }
        Ok(Self { x, k })
    }

    pub const EMPTY: Observation = Observation { x: 0, k: 0 };

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// The observed proportion `x / k`, absent for an empty stratum.
    pub fn proportion(&self) -> Option<f64> {
        (self.k > 0).then(|| self.x as f64 / self.k as f64)
    }
}

/// How the realized sample size `K` of a stratum is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// `K ~ Binomial(kappa, pi)`: planned sample of `kappa` with response probability `pi`.
    BinomialSampleSize { kappa: u64 },
    /// `K ~ Poisson(lambda)`: post-stratified sample.
    PoissonSampleSize,
}

impl Scenario {
    pub fn validate(&self, obs: &[Observation]) -> Result<()> {
        if let Scenario::BinomialSampleSize { kappa } = *self {
            if kappa == 0 {
                return Err(Error::Config("kappa must be positive".into()));
            }
            if let Some(index) = obs.iter().position(|o| o.k > kappa) {
                return Err(Error::InvalidObservation {
                    index,
                    reason: format!("sample size {} exceeds kappa = {kappa}", obs[index].k),
                });
            }
        }
        for (index, o) in obs.iter().enumerate() {
            if o.x > o.k {
                return Err(Error::InvalidObservation {
                    index,
                    reason: format!("x = {} exceeds k = {}", o.x, o.k),
                });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BinomialSampleSize { .. } => "binomial",
            Scenario::PoissonSampleSize => "poisson",
        }
    }
}

/// A support point of the mixing distribution.
///
/// Binomial grids live in `(pi, p)`; Poisson grids live in the independent-Poisson
/// coordinates `(xi1, xi2) = (p * lambda, (1 - p) * lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaPoint {
    Binomial { pi: f64, p: f64 },
    Poisson { xi1: f64, xi2: f64 },
}

impl ThetaPoint {
    pub fn binomial(pi: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidGrid(format!(
                "binomial point ({pi}, {p}) outside the unit square"
            )));
        }
        Ok(ThetaPoint::Binomial { pi, p })
    }

    pub fn poisson(xi1: f64, xi2: f64) -> Result<Self> {
        if !(xi1 >= 0.0 && xi2 >= 0.0) || !(xi1 + xi2 > 0.0) || !(xi1 + xi2).is_finite() {
            return Err(Error::InvalidGrid(format!(
                "poisson point ({xi1}, {xi2}) must be nonnegative and not the origin"
            )));
        }
        Ok(ThetaPoint::Poisson { xi1, xi2 })
    }

    /// Build a Poisson point from `(lambda, p)`.
    pub fn poisson_from_rate(lambda: f64, p: f64) -> Result<Self> {
        Self::poisson(p * lambda, (1.0 - p) * lambda)
    }

    /// `pi` for Binomial points, `lambda = xi1 + xi2` for Poisson points.
    pub fn theta1(&self) -> f64 {
        match *self {
            ThetaPoint::Binomial { pi, .. } => pi,
            ThetaPoint::Poisson { xi1, xi2 } => xi1 + xi2,
        }
    }

    /// The success probability `p`.
    pub fn theta2(&self) -> f64 {
        match *self {
            ThetaPoint::Binomial { p, .. } => p,
            ThetaPoint::Poisson { xi1, xi2 } => xi1 / (xi1 + xi2),
        }
    }

    /// Raw grid coordinates: `(pi, p)` or `(xi1, xi2)`.
    pub fn coords(&self) -> (f64, f64) {
        match *self {
            ThetaPoint::Binomial { pi, p } => (pi, p),
            ThetaPoint::Poisson { xi1, xi2 } => (xi1, xi2),
        }
    }

    fn matches(&self, scenario: &Scenario) -> bool {
        matches!(
            (self, scenario),
            (
                ThetaPoint::Binomial { .. },
                Scenario::BinomialSampleSize { .. }
            ) | (ThetaPoint::Poisson { .. }, Scenario::PoissonSampleSize)
        )
    }
}

/// Log of `f(y | theta)`.
pub fn ln_component_density(y: Observation, theta: ThetaPoint, scenario: Scenario) -> Result<f64> {
    match (scenario, theta) {
        (Scenario::BinomialSampleSize { kappa }, ThetaPoint::Binomial { pi, p }) => {
            Ok(ln_binomial_pmf(y.k, kappa, pi)? + ln_binomial_pmf(y.x, y.k, p)?)
        }
        (Scenario::PoissonSampleSize, ThetaPoint::Poisson { xi1, xi2 }) => {
            if y.x > y.k {
                return Err(Error::Domain(format!("x = {} exceeds k = {}", y.x, y.k)));
            }
            Ok(ln_poisson_pmf(y.x, xi1)? + ln_poisson_pmf(y.k - y.x, xi2)?)
        }
        _ => Err(Error::InvalidGrid(format!(
            "point {theta:?} does not belong to scenario {}",
            scenario.name()
        ))),
    }
}

/// `f(y | theta)`, the joint probability of `(X, K) = (y.x, y.k)`.
pub fn component_density(y: Observation, theta: ThetaPoint, scenario: Scenario) -> Result<f64> {
    ln_component_density(y, theta, scenario).map(f64::exp)
}

/// Finite support of the candidate mixing distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    scenario: Scenario,
    points: Vec<ThetaPoint>,
    dims: Option<(usize, usize)>,
}

impl SupportGrid {
    pub fn from_points(scenario: Scenario, points: Vec<ThetaPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if let Some(bad) = points.iter().find(|p| !p.matches(&scenario)) {
            return Err(Error::InvalidGrid(format!(
                "point {bad:?} does not belong to scenario {}",
                scenario.name()
            )));
        }
        let mut keys: Vec<(u64, u64)> = points
            .iter()
            .map(|p| (p.coords().0.to_bits(), p.coords().1.to_bits()))
            .collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGrid("grid points are not distinct".into()));
        }
        Ok(Self {
            scenario,
            points,
            dims: None,
        })
    }

    /// Cartesian product grid; the first coordinate varies slowest.
    pub fn product(scenario: Scenario, first: &[f64], second: &[f64]) -> Result<Self> {
        let mut points = Vec::with_capacity(first.len() * second.len());
        for &a in first {
            for &b in second {
                points.push(match scenario {
                    Scenario::BinomialSampleSize { .. } => ThetaPoint::binomial(a, b)?,
                    Scenario::PoissonSampleSize => ThetaPoint::poisson(a, b)?,
                });
            }
        }
        let mut grid = Self::from_points(scenario, points)?;
        grid.dims = Some((first.len(), second.len()));
        Ok(grid)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    /// `theta2` of every point, aligned with [`points`](Self::points).
    pub fn theta2(&self) -> Vec<f64> {
        self.points.iter().map(ThetaPoint::theta2).collect()
    }
}

/// Grid layout: shape, optional coordinate ranges, and the Binomial inset.
///
/// Ranges refer to `(pi, p)` for Binomial grids and `(xi1, xi2)` for Poisson grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub t1: Option<(f64, f64)>,
    pub t2: Option<(f64, f64)>,
    /// Binomial grids pull each end of a range inward by this fraction of its width.
    pub binomial_inset: f64,
    /// Smallest Poisson coordinate.
    pub poisson_floor: f64,
    /// Poisson upper bound is this multiple of the largest observed `k`.
    pub poisson_scale: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n1: 40,
            n2: 40,
            t1: None,
            t2: None,
            binomial_inset: 0.025,
            poisson_floor: 0.01,
            poisson_scale: 1.0,
        }
    }
}

impl GridSpec {
    pub fn with_dims(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            ..Self::default()
        }
    }

    pub fn with_ranges(mut self, t1: (f64, f64), t2: (f64, f64)) -> Self {
        self.t1 = Some(t1);
        self.t2 = Some(t2);
        self
    }

    /// Resolve to concrete axis values for `scenario` and `obs`.
    pub fn axes(&self, scenario: Scenario, obs: &[Observation]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid dims {}x{} must be positive",
                self.n1, self.n2
            )));
        }
        let (r1, r2) = match scenario {
            Scenario::BinomialSampleSize { .. } => {
                let inset = |(lo, hi): (f64, f64)| {
                    let d = self.binomial_inset * (hi - lo);
                    (lo + d, hi - d)
                };
                (
                    inset(self.t1.unwrap_or((0.0, 1.0))),
                    inset(self.t2.unwrap_or((0.0, 1.0))),
                )
            }
            Scenario::PoissonSampleSize => {
                let default = || -> Result<(f64, f64)> {
                    let max_k = obs.iter().map(|o| o.k).max().ok_or(Error::EmptyData)?;
                    Ok((self.poisson_floor, self.poisson_scale * max_k.max(1) as f64))
                };
                let r1 = match self.t1 {
                    Some(r) => r,
                    None => default()?,
                };
                let r2 = match self.t2 {
                    Some(r) => r,
                    None => default()?,
                };
                (r1, r2)
            }
        };
        Ok((linspace(r1, self.n1)?, linspace(r2, self.n2)?))
    }
}

/// `n` evenly spaced points on `[lo, hi]`; a single point sits at the midpoint.
fn linspace((lo, hi): (f64, f64), n: usize) -> Result<Vec<f64>> {
    let ok = lo.is_finite() && hi.is_finite() && (lo < hi || (n == 1 && lo == hi));
    if !ok {
        return Err(Error::InvalidGrid(format!(
            "range [{lo}, {hi}] is empty or not finite"
        )));
    }
    if n == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect())
}

/// Product grid laid out per `spec`; Poisson ranges default to `[0.01, max k]`.
pub fn default_grid(
    scenario: Scenario,
    obs: &[Observation],
    spec: &GridSpec,
) -> Result<SupportGrid> {
    let (a, b) = spec.axes(scenario, obs)?;
    SupportGrid::product(scenario, &a, &b)
}

/// A probability vector over the points of a [`SupportGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingWeights(Vec<f64>);

impl MixingWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeights(format!(
                "weight {bad} is negative or not finite"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(w))
    }

    /// Normalize a nonnegative vector with positive mass.
    pub fn from_unnormalized(mut w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() || w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidWeights(
                "cannot normalize: need nonnegative entries with positive finite sum".into(),
            ));
        }
        w.iter_mut().for_each(|v| *v /= sum);
        Ok(Self(w))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn point_mass(len: usize, at: usize) -> Self {
        let mut w = vec![0.0; len];
        w[at] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Internal constructor for vectors already known to lie on the simplex.
    pub(crate) fn from_simplex_unchecked(w: Vec<f64>) -> Self {
        Self(w)
    }
}

/// Distinct outcomes `y` with their multiplicities `n_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    outcomes: Vec<Observation>,
    counts: Vec<u64>,
}

impl OutcomeTable {
    /// Group observations by outcome. Also returns, for each observation, its row in the table.
    pub fn tabulate(obs: &[Observation]) -> (Self, Vec<usize>) {
        let mut index: BTreeMap<Observation, u64> = BTreeMap::new();
        for o in obs {
            *index.entry(*o).or_default() += 1;
        }
        let outcomes: Vec<Observation> = index.keys().copied().collect();
        let counts: Vec<u64> = index.values().copied().collect();
        let rows = obs
            .iter()
            .map(|o| outcomes.binary_search(o).expect("tabulated"))
            .collect();
        (Self { outcomes, counts }, rows)
    }

    pub fn from_observations(obs: &[Observation]) -> Self {
        Self::tabulate(obs).0
    }

    pub fn new(outcomes: Vec<Observation>, counts: Vec<u64>) -> Result<Self> {
        if outcomes.len() != counts.len() || outcomes.is_empty() {
            return Err(Error::Domain(
                "outcome table needs matching, nonempty outcomes and counts".into(),
            ));
        }
        if counts.contains(&0) {
            return Err(Error::Domain("listed outcomes must have count >= 1".into()));
        }
        let mut sorted = outcomes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("outcomes must be distinct".into()));
        }
        Ok(Self { outcomes, counts })
    }

    pub fn outcomes(&self) -> &[Observation] {
        &self.outcomes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of distinct observed outcomes (M).
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical frequencies `n_y / n`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// `L[i][j] = f(y_i | theta_j)`, stored with each row divided by its maximum.
///
/// The true density is `L[i][j] * exp(row_scale[i])`. Rows carry a multiplicity
/// so that a matrix over distinct outcomes is equivalent to one over strata.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    row_scale: Vec<f64>,
    multiplicity: Vec<f64>,
}

impl LikelihoodMatrix {
    /// Build from raw (unscaled) densities; each row must have a positive entry.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = vec![1.0; n];
        Self::from_weighted_rows(rows, m)
    }

    pub fn from_weighted_rows(rows: Vec<Vec<f64>>, multiplicity: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Domain("likelihood matrix must be nonempty".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) || multiplicity.len() != rows.len() {
            return Err(Error::Domain("ragged likelihood matrix".into()));
        }
        if multiplicity.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Domain("row multiplicities must be positive".into()));
        }
        let logs: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                if r.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Domain(
                        "likelihood entries must be finite and nonnegative".into(),
                    ));
                }
                Ok(r.into_iter().map(f64::ln).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_log_rows(logs, multiplicity, cols)
    }

    fn from_log_rows(logs: Vec<Vec<f64>>, multiplicity: Vec<f64>, cols: usize) -> Result<Self> {
        let rows = logs.len();
        let mut values = Vec::with_capacity(rows * cols);
        let mut row_scale = Vec::with_capacity(rows);
        for (i, row) in logs.into_iter().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::ZeroLikelihoodRow { i });
            }
            values.extend(row.iter().map(|l| (l - max).exp()));
            row_scale.push(max);
        }
        Ok(Self {
            rows,
            cols,
            values,
            row_scale,
            multiplicity,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Scaled row `i`; its maximum entry is exactly 1.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Log of the factor removed from row `i`.
    pub fn row_scale(&self) -> &[f64] {
        &self.row_scale
    }

    pub fn multiplicity(&self) -> &[f64] {
        &self.multiplicity
    }

    /// Sum of row multiplicities (the number of strata represented).
    pub fn total_weight(&self) -> f64 {
        self.multiplicity.iter().sum()
    }

    /// Unscaled density `f(y_i | theta_j)`.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        (self.values[i * self.cols + j].ln() + self.row_scale[i]).exp()
    }

    /// Restrict to a subset of rows (used by tests and per-row diagnostics).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
            row_scale: idx.iter().map(|&i| self.row_scale[i]).collect(),
            multiplicity: idx.iter().map(|&i| self.multiplicity[i]).collect(),
        }
    }

    /// Reorder columns: column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(perm.iter().map(|&j| row[j]));
        }
        Self {
            values,
            ..self.clone()
        }
    }
}

fn log_rows(obs: &[Observation], grid: &SupportGrid) -> Result<Vec<Vec<f64>>> {
    let scenario = grid.scenario();
    scenario.validate(obs)?;
    obs.par_iter()
        .map(|&y| {
            grid.points()
                .iter()
                .map(|&t| ln_component_density(y, t, scenario))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// One row per stratum.
pub fn build_likelihood_matrix(
    obs: &[Observation],
    grid: &SupportGrid,
) -> Result<LikelihoodMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyData);
    }
    let logs = log_rows(obs, grid)?;
    LikelihoodMatrix::from_log_rows(logs, vec![1.0; obs.len()], grid.len())
}

/// One row per distinct outcome, weighted by its count; equivalent to the
/// per-stratum matrix for EM, likelihood, and plug-in estimation.
pub fn build_outcome_likelihood(
    table: &OutcomeTable,
    grid: &SupportGrid,
) -> Result<LikelihoodMatrix> {
    let logs = log_rows(table.outcomes(), grid)?;
    let m = table.counts().iter().map(|&c| c as f64).collect();
    LikelihoodMatrix::from_log_rows(logs, m, grid.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::{binomial_pmf, poisson_pmf};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::factorial::ln_factorial;

    const POI: Scenario = Scenario::PoissonSampleSize;

    #[test]
    fn observation_invariants() {
        assert!(Observation::new(3, 2).is_err());
        assert_eq!(Observation::new(0, 0).unwrap(), Observation::EMPTY);
        assert_eq!(Observation::new(1, 4).unwrap().proportion(), Some(0.25));
        assert_eq!(Observation::EMPTY.proportion(), None);
    }

    #[test]
    fn poisson_component_examples() {
        let t = ThetaPoint::poisson(1.0, 1.0).unwrap();
        assert_relative_eq!(
            component_density(Observation::EMPTY, t, POI).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-14
        );

        let t = ThetaPoint::poisson(0.5, 0.5).unwrap();
        let y = Observation::new(1, 2).unwrap();
        let v = component_density(y, t, POI).unwrap();
        assert_relative_eq!(v, 0.25 * (-1.0f64).exp(), max_relative = 1e-14);
        let cross = poisson_pmf(2, 1.0).unwrap() * binomial_pmf(1, 2, 0.5).unwrap();
        assert_relative_eq!(v, cross, max_relative = 1e-14);
    }

    #[test]
    fn binomial_kappa_one_outcome_probabilities() {
        let s = Scenario::BinomialSampleSize { kappa: 1 };
        let t = ThetaPoint::binomial(0.5, 0.5).unwrap();
        assert_relative_eq!(component_density(Observation::EMPTY, t, s).unwrap(), 0.5);
        // (pi p, pi (1 - p), 1 - pi) for (x, k) = (1, 1), (0, 1), (0, 0)
        let t = ThetaPoint::binomial(0.8, 0.3).unwrap();
        assert_relative_eq!(
            component_density(Observation { x: 1, k: 1 }, t, s).unwrap(),
            0.8 * 0.3,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            component_density(Observation { x: 0, k: 1 }, t, s).unwrap(),
            0.8 * 0.7,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            component_density(Observation { x: 0, k: 0 }, t, s).unwrap(),
            0.2,
            max_relative = 1e-14
        );
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        let t = ThetaPoint::binomial(0.5, 0.5).unwrap();
        assert!(component_density(Observation::EMPTY, t, POI).is_err());
        assert!(ThetaPoint::poisson(0.0, 0.0).is_err());
        let s = Scenario::BinomialSampleSize { kappa: 2 };
        assert!(matches!(
            s.validate(&[Observation { x: 1, k: 3 }]),
            Err(Error::InvalidObservation { index: 0, .. })
        ));
    }

    #[test]
    fn single_empty_observation_matrix() {
        let grid = SupportGrid::from_points(
            POI,
            vec![
                ThetaPoint::poisson(0.2, 0.3).unwrap(),
                ThetaPoint::poisson(1.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        let l = build_likelihood_matrix(&[Observation::EMPTY], &grid).unwrap();
        assert_eq!((l.rows(), l.cols()), (1, 2));
        assert_relative_eq!(l.density(0, 0), (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(l.density(0, 1), (-3.0f64).exp(), max_relative = 1e-14);
        assert_eq!(l.row(0)[0], 1.0);
    }

    #[test]
    fn zero_likelihood_row_is_reported() {
        let s = Scenario::BinomialSampleSize { kappa: 3 };
        let grid =
            SupportGrid::from_points(s, vec![ThetaPoint::binomial(0.5, 0.0).unwrap()]).unwrap();
        let obs = [Observation::EMPTY, Observation { x: 2, k: 3 }];
        assert!(matches!(
            build_likelihood_matrix(&obs, &grid),
            Err(Error::ZeroLikelihoodRow { i: 1 })
        ));
    }

    #[test]
    fn default_grid_examples() {
        let s = Scenario::BinomialSampleSize { kappa: 4 };
        let g = default_grid(s, &[], &GridSpec::default()).unwrap();
        assert_eq!(g.len(), 1600);
        assert_eq!(g.dims(), Some((40, 40)));
        assert!(g.points().iter().all(|p| {
            let (a, b) = p.coords();
            (0.025..=0.975).contains(&a) && (0.025..=0.975).contains(&b)
        }));

        let g = default_grid(
            s,
            &[],
            &GridSpec::with_dims(2, 2).with_ranges((0.0, 1.0), (0.0, 1.0)),
        )
        .unwrap();
        let coords: Vec<_> = g.points().iter().map(ThetaPoint::coords).collect();
        assert_eq!(
            coords,
            vec![
                (0.025, 0.025),
                (0.025, 0.975),
                (0.975, 0.025),
                (0.975, 0.975)
            ]
        );

        let obs = [Observation { x: 2, k: 6 }, Observation::EMPTY];
        let g = default_grid(POI, &obs, &GridSpec::with_dims(3, 3)).unwrap();
        let axis: Vec<f64> = g.points().iter().step_by(3).map(|p| p.coords().0).collect();
        assert_eq!(axis, vec![0.01, 3.005, 6.0]);

        assert!(matches!(
            default_grid(POI, &[], &GridSpec::with_dims(3, 3)),
            Err(Error::EmptyData)
        ));
        let g = default_grid(POI, &obs, &GridSpec::with_dims(1, 3)).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.points()[0].coords().0, 3.005);
        assert!(default_grid(POI, &obs, &GridSpec::with_dims(0, 3)).is_err());
    }

    #[test]
    fn outcome_table_groups_and_indexes() {
        let obs = [
            Observation { x: 1, k: 2 },
            Observation::EMPTY,
            Observation { x: 1, k: 2 },
        ];
        let (t, idx) = OutcomeTable::tabulate(&obs);
        assert_eq!(
            t.outcomes(),
            &[Observation::EMPTY, Observation { x: 1, k: 2 }]
        );
        assert_eq!(t.counts(), &[1, 2]);
        assert_eq!(idx, vec![1, 0, 1]);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn outcome_truncation_normalizes() {
        let s = Scenario::BinomialSampleSize { kappa: 5 };
        let t = ThetaPoint::binomial(0.37, 0.81).unwrap();
        let total: f64 = (0..=5)
            .flat_map(|k| (0..=k).map(move |x| Observation { x, k }))
            .map(|y| component_density(y, t, s).unwrap())
            .sum();
        assert!((1.0 - 1e-6..=1.0 + 1e-12).contains(&total));

        // Poisson truncated at k <= 60 covers all but a negligible tail for lambda = 3.
        let t = ThetaPoint::poisson(1.2, 1.8).unwrap();
        let total: f64 = (0..=60)
            .flat_map(|k| (0..=k).map(move |x| Observation { x, k }))
            .map(|y| component_density(y, t, POI).unwrap())
            .sum();
        assert!((1.0 - 1e-6..=1.0 + 1e-12).contains(&total), "{total}");
    }

    proptest! {
        #[test]
        fn poisson_factorization_identity(x in 0u64..30, extra in 0u64..30, xi1 in 0.001f64..20.0, xi2 in 0.001f64..20.0) {
            let k = x + extra;
            let lhs = poisson_pmf(x, xi1).unwrap() * poisson_pmf(k - x, xi2).unwrap();
            let lambda = xi1 + xi2;
            // Closed form with 1 - p = xi2 / lambda, avoiding the subtraction.
            let ln_choose = ln_factorial(k) - ln_factorial(x) - ln_factorial(k - x);
            let oracle = poisson_pmf(k, lambda).unwrap()
                * (ln_choose + x as f64 * (xi1 / lambda).ln() + (k - x) as f64 * (xi2 / lambda).ln()).exp();
            prop_assert!((lhs - oracle).abs() <= 1e-12 * oracle);
            // Through binomial_pmf, 1 - p carries relative error ~eps * lambda / xi2, raised to the k - x power.
            let via_binomial = poisson_pmf(k, lambda).unwrap() * binomial_pmf(x, k, xi1 / lambda).unwrap();
            let cancel = (k - x) as f64 * 4.0 * f64::EPSILON * lambda / xi2;
            prop_assert!((via_binomial - oracle).abs() <= (1e-12 + cancel) * oracle);
            let t = ThetaPoint::poisson(xi1, xi2).unwrap();
            let direct = component_density(Observation { x, k }, t, POI).unwrap();
            prop_assert!((direct - oracle).abs() <= 1e-12 * oracle);
        }

        #[test]
        fn matrix_matches_direct_evaluation(raw in proptest::collection::vec((0u64..5, 0u64..5), 1..8), n1 in 2usize..5, n2 in 2usize..5) {
            let obs: Vec<Observation> = raw.iter().map(|&(x, e)| Observation { x, k: x + e }).collect();
            let grid = default_grid(POI, &obs, &GridSpec::with_dims(n1, n2)).unwrap();
            let l = build_likelihood_matrix(&obs, &grid).unwrap();
            let again = build_likelihood_matrix(&obs, &grid).unwrap();
            prop_assert_eq!(&l, &again);
            for (i, y) in obs.iter().enumerate() {
                for (j, t) in grid.points().iter().enumerate() {
                    let direct = component_density(*y, *t, POI).unwrap();
                    prop_assert!((l.density(i, j) - direct).abs() <= 1e-12 * direct);
                }
            }
        }
    }
}
