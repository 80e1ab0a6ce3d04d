//! Simulation designs, seeded replication, and data thinning.
//!
//! Randomness is derived from a master seed by counter: replicate `r` gets
//! seed `mix(master, r)`, and stratum `i` of a dataset draws from ChaCha
//! stream `i` of that seed. Results are therefore independent of thread count.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::estimators::estimate;
use crate::general::GeneralStratum;
use crate::model::{GridSpec, Observation, Scenario};

/// Law of one latent coordinate within a group of strata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    PointMass(f64),
    Uniform(f64, f64),
}

impl Law {
    pub fn mean(&self) -> f64 {
        match *self {
            Law::PointMass(v) => v,
            Law::Uniform(lo, hi) => 0.5 * (lo + hi),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::PointMass(v) => v,
            Law::Uniform(lo, hi) => rng.random_range(lo..hi),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Law::PointMass(v) => (v, v),
            Law::Uniform(lo, hi) => (lo, hi),
        }
    }
}

impl FromStr for Law {
    type Err = Error;

    /// `"v"` is a point mass, `"lo..hi"` is uniform on `(lo, hi)`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidDesign(format!("cannot parse law {s:?}")))
        };
        match s.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if !(lo < hi) {
                    return Err(Error::InvalidDesign(format!(
                        "uniform law needs lo < hi, got {s:?}"
                    )));
                }
                Ok(Law::Uniform(lo, hi))
            }
            None => Ok(Law::PointMass(num(s)?)),
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::PointMass(v) => write!(f, "{v}"),
            Law::Uniform(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

impl Serialize for Law {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Law {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Law::PointMass(v)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A block of strata sharing the laws of `(theta1, theta2)`, drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataGroup {
    pub count: usize,
    pub theta1: Law,
    pub theta2: Law,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrataDesign {
    pub scenario: Scenario,
    pub groups: Vec<StrataGroup>,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    scenario: String,
    #[serde(default)]
    kappa: Option<u64>,
    groups: Vec<StrataGroup>,
}

impl StrataDesign {
    pub fn new(scenario: Scenario, groups: Vec<StrataGroup>) -> Result<Self> {
        let d = Self { scenario, groups };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidDesign("design has no groups".into()));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.count == 0 {
                return Err(Error::InvalidDesign(format!("group {i} has zero strata")));
            }
            let (lo2, hi2) = g.theta2.bounds();
            if lo2 < 0.0 || hi2 > 1.0 {
                return Err(Error::InvalidDesign(format!(
                    "group {i}: theta2 must lie in [0, 1]"
                )));
            }
            let (lo1, hi1) = g.theta1.bounds();
            let ok = match self.scenario {
                Scenario::BinomialSampleSize { kappa } => kappa > 0 && lo1 >= 0.0 && hi1 <= 1.0,
                Scenario::PoissonSampleSize => lo1 >= 0.0 && hi1.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidDesign(format!(
                    "group {i}: theta1 out of range for {}",
                    self.scenario.name()
                )));
            }
        }
        Ok(())
    }

    pub fn n_strata(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// `E[theta2]` across strata, computed from the laws.
    pub fn true_p(&self) -> f64 {
        let n = self.n_strata() as f64;
        self.groups
            .iter()
            .map(|g| g.count as f64 * g.theta2.mean())
            .sum::<f64>()
            / n
    }

    /// Parse the TOML design format (`scenario`, `kappa`, `[[groups]]` with `count`, `theta1`, `theta2`).
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: DesignFile =
            toml::from_str(text).map_err(|e| Error::InvalidDesign(e.to_string()))?;
        let scenario = match raw.scenario.as_str() {
            "poisson" => Scenario::PoissonSampleSize,
            "binomial" => Scenario::BinomialSampleSize {
                kappa: raw
                    .kappa
                    .ok_or_else(|| Error::InvalidDesign("binomial design needs kappa".into()))?,
            },
            other => return Err(Error::InvalidDesign(format!("unknown scenario {other:?}"))),
        };
        Self::new(scenario, raw.groups)
    }

    pub fn to_toml(&self) -> String {
        let kappa = match self.scenario {
            Scenario::BinomialSampleSize { kappa } => Some(kappa),
            Scenario::PoissonSampleSize => None,
        };
        let file = DesignFile {
            scenario: self.scenario.name().into(),
            kappa,
            groups: self.groups.clone(),
        };
        toml::to_string(&file).expect("design serializes")
    }
}

pub const PRESETS: [&str; 14] = [
    "t1r1", "t1r2", "t1r3", "t2r1", "t2r2", "t2r3", "t3r1", "t3r2", "t3r3", "t4k1", "t4k2", "t4k3",
    "t4k4", "t4k5",
];

fn group(count: usize, theta1: Law, theta2: Law) -> StrataGroup {
    StrataGroup {
        count,
        theta1,
        theta2,
    }
}

/// Built-in designs: two types of 500 strata each.
///
/// * `t1r*`: Poisson sizes, discrete `(lambda, p)`.
/// * `t2r*`: Poisson sizes, `lambda ~ U(0.5, 1)` / `U(0.5, 2)`, `p` fixed per type.
/// * `t3r*`: Binomial sizes with `kappa = 4`, `pi = p` per type.
/// * `t4k*`: Binomial sizes with `kappa = 1..5`, `pi, p ~ U(0.1, 0.6)` / `U(0.4, 0.9)` independently.
pub fn preset(name: &str) -> Option<StrataDesign> {
    use Law::{PointMass as P, Uniform as U};
    let poisson = Scenario::PoissonSampleSize;
    let two = |scenario, a: (Law, Law), b: (Law, Law)| StrataDesign {
        scenario,
        groups: vec![group(500, a.0, a.1), group(500, b.0, b.1)],
    };
    let t1 = |l1, p1, l2, p2| two(poisson, (P(l1), P(p1)), (P(l2), P(p2)));
    let t2 = |p: f64| two(poisson, (U(0.5, 1.0), P(p)), (U(0.5, 2.0), P(1.0 - p)));
    let t3 = |p: f64| {
        two(
            Scenario::BinomialSampleSize { kappa: 4 },
            (P(p), P(p)),
            (P(1.0 - p), P(1.0 - p)),
        )
    };
    let t4 = |kappa| {
        two(
            Scenario::BinomialSampleSize { kappa },
            (U(0.1, 0.6), U(0.1, 0.6)),
            (U(0.4, 0.9), U(0.4, 0.9)),
        )
    };
    Some(match name {
        "t1r1" => t1(2.0, 0.4, 1.0, 0.6),
        "t1r2" => t1(2.0, 0.2, 1.0, 0.8),
        "t1r3" => t1(2.0, 0.2, 0.5, 0.8),
        "t2r1" => t2(0.4),
        "t2r2" => t2(0.3),
        "t2r3" => t2(0.2),
        "t3r1" => t3(0.2),
        "t3r2" => t3(0.3),
        "t3r3" => t3(0.4),
        "t4k1" => t4(1),
        "t4k2" => t4(2),
        "t4k3" => t4(3),
        "t4k4" => t4(4),
        "t4k5" => t4(5),
        _ => return None,
    })
}

/// SplitMix64 finalizer; decorrelates consecutive counters.
fn mix(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for item `index` under `seed`.
fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

fn draw_poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
    }
}

/// Draw one dataset: `theta` from the group laws, then `K`, then `X ~ B(K, theta2)`.
pub fn draw_dataset(design: &StrataDesign, seed: u64) -> Vec<Observation> {
    let mut out = Vec::with_capacity(design.n_strata());
    let mut index = 0u64;
    for g in &design.groups {
        for _ in 0..g.count {
            let mut rng = stream(seed, index);
            index += 1;
            let t1 = g.theta1.sample(&mut rng);
            let p = g.theta2.sample(&mut rng);
            let k = match design.scenario {
                Scenario::BinomialSampleSize { kappa } => draw_binomial(&mut rng, kappa, t1),
                Scenario::PoissonSampleSize => draw_poisson(&mut rng, t1),
            };
            let x = draw_binomial(&mut rng, k, p);
            out.push(Observation { x, k });
        }
    }
    out
}

/// Seed of replicate `rep` under `master`.
pub fn replicate_seed(master: u64, rep: usize) -> u64 {
    mix(master, rep as u64)
}

/// Estimator values from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub naive: Option<f64>,
    pub extreme_collapse: Option<f64>,
    pub gmle: f64,
    pub psi_star: f64,
    pub m_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean: Option<f64>,
    /// Sample standard deviation; absent with fewer than two values.
    pub sd: Option<f64>,
    /// Replicates where the estimator was defined.
    pub count: usize,
}

impl EstimatorSummary {
    fn from_values(name: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let sd = match mean {
            Some(m) if n >= 2 => {
                Some((values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
            }
            _ => None,
        };
        Self {
            name: name.into(),
            mean,
            sd,
            count: n,
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> Option<f64> {
        self.sd.map(|s| s / (self.count as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub estimators: Vec<EstimatorSummary>,
    pub reps: usize,
    pub seed: u64,
    pub true_p: f64,
    pub replicates: Vec<ReplicateOutcome>,
}

impl SimSummary {
    pub fn get(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }

    /// Mean of `|psi_star - gmle|` across replicates.
    pub fn mean_psi_gmle_gap(&self) -> f64 {
        self.replicates
            .iter()
            .map(|r| (r.psi_star - r.gmle).abs())
            .sum::<f64>()
            / self.replicates.len() as f64
    }

    pub fn mean_of(&self, name: &str) -> f64 {
        self.get(name).and_then(|e| e.mean).unwrap_or(f64::NAN)
    }
}

/// Run `reps` independent replicates in parallel and summarize every estimator.
pub fn run_replications(
    design: &StrataDesign,
    reps: usize,
    em: &EmConfig,
    grid: &GridSpec,
    seed: u64,
) -> Result<SimSummary> {
    design.validate()?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let replicates: Vec<ReplicateOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = draw_dataset(design, replicate_seed(seed, rep));
            let fit = estimate(&data, design.scenario, grid, em).map_err(|e| Error::Replicate {
                rep,
                source: Box::new(e),
            })?;
            let r = fit.report;
            Ok(ReplicateOutcome {
                naive: r.naive,
                extreme_collapse: r.extreme_collapse,
                gmle: r.gmle_plugin,
                psi_star: r.psi_star,
                m_zero: r.m_zero,
            })
        })
        .collect::<Result<_>>()?;

    let collect = |f: &dyn Fn(&ReplicateOutcome) -> Option<f64>| -> Vec<f64> {
        replicates.iter().filter_map(f).collect()
    };
    let estimators = vec![
        EstimatorSummary::from_values("naive", &collect(&|r| r.naive)),
        EstimatorSummary::from_values("extreme_collapse", &collect(&|r| r.extreme_collapse)),
        EstimatorSummary::from_values("gmle", &collect(&|r| Some(r.gmle))),
        EstimatorSummary::from_values("psi_star", &collect(&|r| Some(r.psi_star))),
    ];
    Ok(SimSummary {
        estimators,
        reps,
        seed,
        true_p: design.true_p(),
        replicates,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    Ok(())
}

/// Keep each sampled unit with probability `gamma`, at the summary level:
/// `k' ~ B(k, gamma)` and `x' ~ Hypergeometric(k, x, k')`.
pub fn thin_dataset(obs: &[Observation], gamma: f64, seed: u64) -> Result<Vec<Observation>> {
    check_gamma(gamma)?;
    Ok(obs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if gamma == 1.0 {
                return *o;
            }
            let mut rng = stream(seed, i as u64);
            let k = draw_binomial(&mut rng, o.k, gamma);
            let x = if k == 0 || o.x == 0 {
                0
            } else if o.x == o.k {
                k
            } else {
                Hypergeometric::new(o.k, o.x, k)
                    .expect("valid hypergeometric")
                    .sample(&mut rng)
            };
            Observation { x, k }
        })
        .collect())
}

/// Unit-level thinning of raw strata values; weights and empty strata are kept.
pub fn thin_strata(
    strata: &[GeneralStratum],
    gamma: f64,
    seed: u64,
) -> Result<Vec<GeneralStratum>> {
    check_gamma(gamma)?;
    Ok(strata
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, i as u64);
            let values = s
                .values
                .iter()
                .copied()
                .filter(|_| gamma == 1.0 || rng.random_bool(gamma))
                .collect();
            GeneralStratum { a: s.a, values }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn law_parsing() {
        assert_eq!("0.4".parse::<Law>().unwrap(), Law::PointMass(0.4));
        assert_eq!("0.5..2".parse::<Law>().unwrap(), Law::Uniform(0.5, 2.0));
        assert!("2..1".parse::<Law>().is_err());
        assert!("abc".parse::<Law>().is_err());
    }

    #[test]
    fn presets_exist_and_have_true_p_half() {
        for name in PRESETS {
            let d = preset(name).unwrap();
            assert_eq!(d.n_strata(), 1000, "{name}");
            assert_relative_eq!(d.true_p(), 0.5, epsilon = 1e-12);
            d.validate().unwrap();
        }
        assert!(preset("t9r9").is_none());
    }

    #[test]
    fn design_toml_round_trip() {
        let text = r#"
scenario = "binomial"
kappa = 3

[[groups]]
count = 10
theta1 = "0.1..0.6"
theta2 = 0.25

[[groups]]
count = 5
theta1 = 0.9
theta2 = "0.4..0.9"
"#;
        let d = StrataDesign::from_toml(text).unwrap();
        assert_eq!(d.scenario, Scenario::BinomialSampleSize { kappa: 3 });
        assert_eq!(d.groups[0].theta1, Law::Uniform(0.1, 0.6));
        assert_eq!(d.groups[1].theta1, Law::PointMass(0.9));
        assert_eq!(StrataDesign::from_toml(&d.to_toml()).unwrap(), d);
        assert!(StrataDesign::from_toml("scenario = \"binomial\"\ngroups = []").is_err());
    }

    #[test]
    fn degenerate_draws() {
        let d = StrataDesign::new(
            Scenario::PoissonSampleSize,
            vec![group(50, Law::PointMass(2.0), Law::PointMass(1.0))],
        )
        .unwrap();
        assert!(draw_dataset(&d, 3).iter().all(|o| o.x == o.k));
        let d = StrataDesign::new(
            Scenario::PoissonSampleSize,
            vec![group(50, Law::PointMass(0.0), Law::PointMass(0.3))],
        )
        .unwrap();
        assert!(draw_dataset(&d, 3).iter().all(|o| *o == Observation::EMPTY));
    }

    #[test]
    fn draws_are_deterministic() {
        let d = preset("t4k3").unwrap();
        assert_eq!(draw_dataset(&d, 11), draw_dataset(&d, 11));
        assert_ne!(draw_dataset(&d, 11), draw_dataset(&d, 12));
    }

    #[test]
    fn thinning_edge_cases() {
        let obs = vec![
            Observation { x: 5, k: 10 },
            Observation::EMPTY,
            Observation { x: 3, k: 3 },
        ];
        assert_eq!(thin_dataset(&obs, 1.0, 9).unwrap(), obs);
        let tiny = thin_dataset(&obs, 1e-12, 9).unwrap();
        assert!(tiny.iter().all(|o| o.k == 0));
        assert!(thin_dataset(&obs, 0.0, 1).is_err());
        assert!(thin_dataset(&obs, 1.5, 1).is_err());
        for o in thin_dataset(&obs, 0.5, 4).unwrap().iter().zip(&obs) {
            assert!(o.0.k <= o.1.k && o.0.x <= o.1.x && o.0.x <= o.0.k);
        }
    }

    #[test]
    fn summary_statistics() {
        let s = EstimatorSummary::from_values("x", &[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_relative_eq!(s.sd.unwrap(), 1.0);
        let s = EstimatorSummary::from_values("x", &[1.0]);
        assert_eq!(s.sd, None);
    }
}
