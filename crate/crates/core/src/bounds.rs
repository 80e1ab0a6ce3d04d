//! Likelihood-ratio confidence bounds for `E_G[theta2]`.
//!
//! The feasible set is every weight vector on the simplex whose deviance
//! `2 sum_y n_y log(phat_y / q_y(w))` stays below a threshold. It is convex,
//! and the objective is linear, so each bound is a convex program with a
//! single nonlinear constraint. We dualize that constraint: for a multiplier
//! `1 / beta` the Lagrangian maximizer solves a tilted likelihood problem,
//! handled by an active-set Newton method on the support, and `beta` is
//! bisected until the duality gap is below tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::em::{fit_gmle, EmConfig};
use crate::error::{Error, Result};
use crate::estimators::gmle_plugin;
use crate::model::{
    build_outcome_likelihood, LikelihoodMatrix, MixingWeights, OutcomeTable, SupportGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Threshold `chi2_{M-1}(1 - alpha)`, for finitely many outcomes.
    ChiSquare,
    /// Threshold `log(n)^(1 + alpha_exp)`, for countably many outcomes.
    LogPower { alpha_exp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub alpha: f64,
    pub objective_tol: f64,
    pub mode: ConstraintMode,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            objective_tol: 1e-5,
            mode: ConstraintMode::ChiSquare,
        }
    }
}

impl CiConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.objective_tol > 0.0) {
            return Err(Error::Config("objective tolerance must be positive".into()));
        }
        if let ConstraintMode::LogPower { alpha_exp } = self.mode {
            if !(alpha_exp > 0.0) {
                return Err(Error::Config(format!(
                    "alpha_exp = {alpha_exp} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Deviance threshold for a table with `M` observed outcomes and `n` strata.
    pub fn threshold(&self, table: &OutcomeTable) -> Result<f64> {
        self.validate()?;
        match self.mode {
            ConstraintMode::ChiSquare => {
                let df = table.len().saturating_sub(1);
                if df == 0 {
                    return Ok(0.0);
                }
                let chi = ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
                Ok(chi.inverse_cdf(1.0 - self.alpha))
            }
            ConstraintMode::LogPower { alpha_exp } => {
                Ok((table.total() as f64).ln().powf(1.0 + alpha_exp))
            }
        }
    }
}

/// `ln q_y(w)` for every row, scaling reinstated.
fn ln_outcome_probabilities(l: &LikelihoodMatrix, w: &[f64]) -> Result<Vec<f64>> {
    (0..l.rows())
        .map(|i| {
            let q: f64 = l.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            if q > 0.0 {
                Ok(q.ln() + l.row_scale()[i])
            } else {
                Err(Error::NumericalUnderflow { row: i })
            }
        })
        .collect()
}

fn deviance_from(table: &OutcomeTable, l: &LikelihoodMatrix, w: &[f64]) -> Result<f64> {
    let lnq = ln_outcome_probabilities(l, w)?;
    Ok(2.0
        * table
            .frequencies()
            .iter()
            .zip(table.counts())
            .zip(&lnq)
            .map(|((phat, &n), lq)| n as f64 * (phat.ln() - lq))
            .sum::<f64>())
}

/// Deviance of the mixture `w` against the empirical outcome distribution.
pub fn deviance(table: &OutcomeTable, grid: &SupportGrid, w: &MixingWeights) -> Result<f64> {
    if w.len() != grid.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} grid points",
            w.len(),
            grid.len()
        )));
    }
    let l = build_outcome_likelihood(table, grid)?;
    deviance_from(table, &l, w.as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub lower: f64,
    pub upper: f64,
    pub threshold: f64,
    /// Deviance at the likelihood maximizer used as the interior starting point.
    pub deviance_at_gmle: f64,
    pub gmle_plugin: f64,
    pub lower_weights: MixingWeights,
    pub upper_weights: MixingWeights,
}

/// Small dense QP: minimize `v^T H v / 2 - h^T v` over the simplex, by a
/// primal active-set method started from the feasible point `v`.
fn simplex_qp(hm: &DMatrix<f64>, h: &DVector<f64>, mut v: DVector<f64>) -> DVector<f64> {
    let n = h.len();
    let mut free: Vec<bool> = v.iter().map(|x| *x > 0.0).collect();
    for _ in 0..10 * n + 10 {
        let idx: Vec<usize> = (0..n).filter(|&k| free[k]).collect();
        let f = idx.len();
        let mut kkt = DMatrix::<f64>::zeros(f + 1, f + 1);
        let mut rhs = DVector::<f64>::zeros(f + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = hm[(i, j)];
            }
            kkt[(a, f)] = 1.0;
            kkt[(f, a)] = 1.0;
            rhs[a] = h[i];
        }
        rhs[f] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return v;
        };
        let mut p = DVector::<f64>::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            p[i] = sol[a];
        }
        if idx.iter().all(|&i| p[i] >= 0.0) {
            v = p;
            // Bound multipliers `(H v - h)_k + nu` must be nonnegative off the free set.
            let nu = sol[f];
            let grad = hm * &v - h;
            let worst = (0..n)
                .filter(|&k| !free[k])
                .map(|k| (k, grad[k] + nu))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((k, mu)) if mu < -1e-12 * (1.0 + nu.abs()) => free[k] = true,
                _ => return v,
            }
        } else {
            let mut alpha = 1.0;
            let mut block = None;
            for &i in &idx {
                if p[i] < 0.0 {
                    let a = v[i] / (v[i] - p[i]);
                    if a < alpha {
                        alpha = a;
                        block = Some(i);
                    }
                }
            }
            v += (p - &v) * alpha;
            if let Some(i) = block {
                free[i] = false;
            }
            for k in 0..n {
                if v[k] <= 0.0 {
                    v[k] = 0.0;
                    free[k] = false;
                }
            }
        }
    }
    v
}

/// One bound as a convex program: maximize `c . w` subject to
/// `sum n_y ln q_y(w) >= floor` on the simplex, in scaled likelihood units.
struct Frontier<'a> {
    l: &'a LikelihoodMatrix,
    counts: Vec<f64>,
    c: Vec<f64>,
    floor: f64,
}

struct Tilted {
    w: Vec<f64>,
    loglik: f64,
    /// Frank-Wolfe gap of the tilted objective; bounds its suboptimality.
    gap: f64,
}

impl Frontier<'_> {
    fn mixture(&self, w: &[f64]) -> Vec<f64> {
        (0..self.l.rows())
            .map(|i| self.l.row(i).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn loglik(&self, q: &[f64]) -> f64 {
        q.iter()
            .zip(&self.counts)
            .map(|(q, n)| {
                if *q > 0.0 {
                    n * q.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    }

    fn tilted_value(&self, beta: f64, w: &[f64], q: &[f64]) -> f64 {
        beta * self.c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + self.loglik(q)
    }

    /// Maximize `beta c . w + sum n_y ln q_y(w)` over the simplex, warm-started from `w`.
    ///
    /// Each step solves the quadratic model of the log-likelihood on the current
    /// support plus the best few new points, then backtracks along the segment.
    fn tilted(&self, beta: f64, mut w: Vec<f64>) -> Tilted {
        let (m, j) = (self.l.rows(), self.l.cols());
        let total: f64 = self.counts.iter().sum();
        let cmax = self.c.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let tol = 1e-12 * (total + beta * cmax);
        let mut q = self.mixture(&w);
        let mut gap = f64::INFINITY;
        for _ in 0..1000 {
            let ratio: Vec<f64> = (0..m).map(|y| self.counts[y] / q[y]).collect();
            let mut g: Vec<f64> = self.c.iter().map(|c| beta * c).collect();
            for (y, r) in ratio.iter().enumerate() {
                for (gk, a) in g.iter_mut().zip(self.l.row(y)) {
                    *gk += r * a;
                }
            }
            let avg: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
            let mut order: Vec<usize> = (0..j).filter(|&k| w[k] == 0.0 && g[k] > avg).collect();
            order.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
            gap = order.first().map_or(0.0, |&k| g[k] - avg).max(
                (0..j)
                    .filter(|&k| w[k] > 0.0)
                    .map(|k| g[k] - avg)
                    .fold(0.0, f64::max),
            );
            if gap <= tol {
                break;
            }

            let support: Vec<usize> = (0..j)
                .filter(|&k| w[k] > 0.0)
                .chain(order.into_iter().take(8))
                .collect();
            let s = support.len();
            // Quadratic model: beta c . v - |B v - 2 sqrt(n)|^2 / 2, B_yk = sqrt(n_y) A_yk / q_y.
            let b = DMatrix::<f64>::from_fn(m, s, |y, k| {
                self.counts[y].sqrt() * self.l.row(y)[support[k]] / q[y]
            });
            let target = DVector::<f64>::from_fn(m, |y, _| 2.0 * self.counts[y].sqrt());
            let mut hm = b.transpose() * &b;
            let ridge = 1e-13 * (0..s).map(|k| hm[(k, k)]).fold(0.0, f64::max);
            for k in 0..s {
                hm[(k, k)] += ridge;
            }
            let h = b.transpose() * target
                + DVector::<f64>::from_fn(s, |k, _| beta * self.c[support[k]]);
            let v0 = DVector::<f64>::from_fn(s, |k, _| w[support[k]]);
            let v = simplex_qp(&hm, &h, v0.clone());

            let dir: Vec<(usize, f64)> = support
                .iter()
                .enumerate()
                .map(|(a, &k)| (k, v[a] - v0[a]))
                .collect();
            let slope: f64 = dir.iter().map(|&(k, d)| g[k] * d).sum();
            if !(slope > 0.0) {
                break;
            }
            let f0 = self.tilted_value(beta, &w, &q);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut cw = w.clone();
                for &(k, d) in &dir {
                    cw[k] = (cw[k] + step * d).max(0.0);
                }
                let cq = self.mixture(&cw);
                let f1 = self.tilted_value(beta, &cw, &cq);
                if f1 >= f0 + 1e-4 * step * slope {
                    let sum: f64 = cw.iter().sum();
                    cw.iter_mut().for_each(|x| *x /= sum);
                    q = self.mixture(&cw);
                    w = cw;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let loglik = self.loglik(&q);
        Tilted { w, loglik, gap }
    }

    /// Largest feasible `c . w`, to within `tol` as certified by Lagrangian duality.
    ///
    /// For `beta > 0` the tilted maximizer is optimal for its own likelihood level,
    /// and `c . w + (loglik - floor) / beta` bounds the optimum from above.
    fn maximize(&self, start: &[f64], tol: f64) -> Vec<f64> {
        let total: f64 = self.counts.iter().sum();
        // EM leaves every weight positive; the active-set solve wants a sparse start.
        let wmax = start.iter().fold(0.0f64, |a, b| a.max(*b));
        let mut sparse: Vec<f64> = start
            .iter()
            .map(|&v| if v >= 1e-6 * wmax { v } else { 0.0 })
            .collect();
        let sum: f64 = sparse.iter().sum();
        sparse.iter_mut().for_each(|v| *v /= sum);
        if !self.loglik(&self.mixture(&sparse)).is_finite() {
            sparse = start.to_vec();
        }
        let mut lo = self.tilted(0.0, sparse);
        if !(lo.loglik >= self.floor) {
            lo.w = start.to_vec();
        }
        let mut beta_lo = 0.0;
        let mut beta = 1e-3 * total.max(1.0);
        let mut hi = None;
        while beta < 1e18 * total.max(1.0) {
            let t = self.tilted(beta, lo.w.clone());
            if t.loglik >= self.floor {
                let excess = (t.loglik - self.floor + t.gap) / beta;
                lo = t;
                beta_lo = beta;
                if excess <= tol {
                    return lo.w;
                }
                beta *= 4.0;
            } else {
                hi = Some(beta);
                break;
            }
        }
        let Some(mut beta_hi) = hi else {
            return lo.w;
        };
        for _ in 0..200 {
            let mid = if beta_lo > 0.0 {
                (beta_lo * beta_hi).sqrt()
            } else {
                0.5 * beta_hi
            };
            let t = self.tilted(mid, lo.w.clone());
            if t.loglik >= self.floor {
                let excess = (t.loglik - self.floor + t.gap) / mid;
                lo = t;
                beta_lo = mid;
                if excess <= tol {
                    break;
                }
            } else {
                beta_hi = mid;
            }
            if beta_hi - beta_lo <= 1e-15 * beta_hi {
                break;
            }
        }
        lo.w
    }
}

/// Lower and upper likelihood-ratio bounds for `E_G[theta2]` over `grid`.
pub fn ci_bounds(table: &OutcomeTable, grid: &SupportGrid, cfg: &CiConfig) -> Result<CiResult> {
    let threshold = cfg.threshold(table)?;
    let l = build_outcome_likelihood(table, grid)?;
    let em = fit_gmle(&l, &EmConfig::until_converged(1e-11, 50_000))?;
    let w_hat = em.weights.as_slice();
    let dev_hat = deviance_from(table, &l, w_hat)?;
    if !(dev_hat < threshold) {
        return Err(Error::InfeasibleConstraint {
            deviance: dev_hat,
            threshold,
        });
    }
    let theta2 = grid.theta2();
    let plugin = gmle_plugin(grid, &em.weights);

    if grid.len() == 1 {
        let w = MixingWeights::uniform(1);
        return Ok(CiResult {
            lower: theta2[0],
            upper: theta2[0],
            threshold,
            deviance_at_gmle: dev_hat,
            gmle_plugin: plugin,
            lower_weights: w.clone(),
            upper_weights: w,
        });
    }

    // Constraint in scaled units: sum n_y ln q~_y >= sum n_y ln phat_y - sum n_y s_y - c/2.
    let saturated: f64 = table
        .frequencies()
        .iter()
        .zip(table.counts())
        .map(|(p, &n)| n as f64 * p.ln())
        .sum();
    let offset: f64 = l
        .row_scale()
        .iter()
        .zip(l.multiplicity())
        .map(|(s, m)| s * m)
        .sum();
    let frontier = |sign: f64| Frontier {
        l: &l,
        counts: l.multiplicity().to_vec(),
        c: theta2.iter().map(|t| sign * t).collect(),
        floor: saturated - offset - 0.5 * threshold,
    };
    let (lower_side, upper_side) = (frontier(-1.0), frontier(1.0));
    let tol = 0.01 * cfg.objective_tol;
    let (w_lo, w_hi) = rayon::join(
        || lower_side.maximize(w_hat, tol),
        || upper_side.maximize(w_hat, tol),
    );
    let value = |w: &[f64]| theta2.iter().zip(w).map(|(t, v)| t * v).sum::<f64>();
    let (lower, upper) = (value(&w_lo).min(plugin), value(&w_hi).max(plugin));
    Ok(CiResult {
        lower,
        upper,
        threshold,
        deviance_at_gmle: dev_hat,
        gmle_plugin: plugin,
        lower_weights: MixingWeights::from_simplex_unchecked(w_lo),
        upper_weights: MixingWeights::from_simplex_unchecked(w_hi),
    })
}
