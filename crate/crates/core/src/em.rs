//! EM fixed-point iteration for the grid mixing weights.
//!
//! One step maps `w` to `w'_j = (1/n) sum_i m_i L[i][j] w_j / sum_k L[i][k] w_k`,
//! where `m_i` is the multiplicity of row `i` and `n = sum_i m_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LikelihoodMatrix, MixingWeights};

/// Weights below this are set to zero after each step.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmInit {
    Uniform,
    Explicit(MixingWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once the per-step log-likelihood gain drops below this. Zero runs every iteration.
    pub tol: f64,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 0.0,
            init: EmInit::Uniform,
        }
    }
}

impl EmConfig {
    pub fn with_iterations(max_iter: usize) -> Self {
        Self {
            max_iter,
            ..Self::default()
        }
    }

    pub fn until_converged(tol: f64, max_iter: usize) -> Self {
        Self {
            max_iter,
            tol,
            init: EmInit::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub weights: MixingWeights,
    /// `log_lik_trace[t]` is the log-likelihood after `t` steps; entry 0 is the initial guess.
    pub log_lik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmResult {
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_lik_trace
            .last()
            .expect("trace holds the initial value")
    }
}

/// Mixture densities `sum_j L[i][j] w_j` of the scaled rows.
fn mixture_densities(l: &LikelihoodMatrix, w: &[f64]) -> Result<Vec<f64>> {
    (0..l.rows())
        .map(|i| {
            let m: f64 = l.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            if m > 0.0 && m.is_finite() {
                Ok(m)
            } else {
                Err(Error::NumericalUnderflow { row: i })
            }
        })
        .collect()
}

fn check_shape(l: &LikelihoodMatrix, w: &MixingWeights) -> Result<()> {
    if l.cols() != w.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} grid points",
            w.len(),
            l.cols()
        )));
    }
    Ok(())
}

fn scaled_log_likelihood(l: &LikelihoodMatrix, dens: &[f64]) -> f64 {
    dens.iter()
        .zip(l.multiplicity())
        .map(|(d, m)| m * d.ln())
        .sum()
}

fn scale_offset(l: &LikelihoodMatrix) -> f64 {
    l.row_scale()
        .iter()
        .zip(l.multiplicity())
        .map(|(s, m)| m * s)
        .sum()
}

/// Log-likelihood `sum_i m_i log(sum_j f(y_i | theta_j) w_j)`, row scaling reinstated.
pub fn log_likelihood(l: &LikelihoodMatrix, w: &MixingWeights) -> Result<f64> {
    check_shape(l, w)?;
    let dens = mixture_densities(l, w.as_slice())?;
    Ok(scaled_log_likelihood(l, &dens) + scale_offset(l))
}

/// Update from weights whose mixture densities are already known.
fn step_with(l: &LikelihoodMatrix, w: &[f64], dens: &[f64]) -> Vec<f64> {
    let n = l.total_weight();
    let mut acc = vec![0.0; l.cols()];
    for i in 0..l.rows() {
        let r = l.multiplicity()[i] / dens[i];
        for (a, v) in acc.iter_mut().zip(l.row(i)) {
            *a += r * v;
        }
    }
    let mut next: Vec<f64> = acc.iter().zip(w).map(|(a, wj)| wj * a / n).collect();
    let mut sum = 0.0;
    for v in next.iter_mut() {
        if *v < UNDERFLOW_CLAMP {
            *v = 0.0;
        }
        sum += *v;
    }
    next.iter_mut().for_each(|v| *v /= sum);
    next
}

/// A single EM update.
pub fn em_step(l: &LikelihoodMatrix, w: &MixingWeights) -> Result<MixingWeights> {
    check_shape(l, w)?;
    let dens = mixture_densities(l, w.as_slice())?;
    Ok(MixingWeights::from_simplex_unchecked(step_with(
        l,
        w.as_slice(),
        &dens,
    )))
}

/// Run EM from `cfg.init`, recording the log-likelihood at every iterate.
pub fn fit_gmle(l: &LikelihoodMatrix, cfg: &EmConfig) -> Result<EmResult> {
    let mut w = match &cfg.init {
        EmInit::Uniform => MixingWeights::uniform(l.cols()).into_inner(),
        EmInit::Explicit(w0) => {
            check_shape(l, w0)?;
            w0.as_slice().to_vec()
        }
    };
    let offset = scale_offset(l);
    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    let mut dens = mixture_densities(l, &w)?;
    trace.push(scaled_log_likelihood(l, &dens) + offset);
    let mut iterations = 0;
    let mut converged = cfg.tol <= 0.0;
    while iterations < cfg.max_iter {
        w = step_with(l, &w, &dens);
        dens = mixture_densities(l, &w)?;
        let ll = scaled_log_likelihood(l, &dens) + offset;
        let gain = ll - trace[trace.len() - 1];
        trace.push(ll);
        iterations += 1;
        if cfg.tol > 0.0 && gain < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        weights: MixingWeights::from_simplex_unchecked(w),
        log_lik_trace: trace,
        iterations,
        converged,
    })
}
