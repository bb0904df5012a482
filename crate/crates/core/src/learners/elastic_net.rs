//! Elastic net by cyclic coordinate descent.
//!
//! Minimizes `(1/2n)||y - X b - c||^2 + lambda * (mix * |b|_1 + (1 - mix)/2 * |b|_2^2)`
//! with an unpenalized intercept `c`. Columns and targets are centered, the
//! coefficients are solved on the centered problem and the intercept is
//! recovered afterwards.

use serde::{Deserialize, Serialize};

use super::{check_xy, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ElasticNetConfig<F> {
    /// Overall penalty strength (lambda).
    pub strength: F,
    /// L1 share of the penalty, in `[0, 1]`.
    pub mixing: F,
    pub tol: F,
    pub max_sweeps: usize,
}

impl<F: Scalar> Default for ElasticNetConfig<F> {
    fn default() -> Self {
        Self {
            strength: F::one(),
            mixing: F::of(0.5),
            tol: F::of(1e-6),
            max_sweeps: 1000,
        }
    }
}

impl<F: Scalar> ElasticNetConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= F::zero() && self.strength.is_finite()) {
            return Err(Error::Argument("elastic net strength must be finite and >= 0".into()));
        }
        if !(self.mixing >= F::zero() && self.mixing <= F::one()) {
            return Err(Error::Argument("elastic net mixing must lie in [0, 1]".into()));
        }
        if !(self.tol > F::zero()) {
            return Err(Error::Argument("elastic net tol must be > 0".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Argument("elastic net max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LinearModel<F> {
    pub beta: Vec<F>,
    pub intercept: F,
}

impl<F: Scalar> Regressor<F> for LinearModel<F> {
    fn n_features(&self) -> usize {
        self.beta.len()
    }

    fn predict_row(&self, x: &[F]) -> F {
        self.beta
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (&b, &v)| acc + b * v)
    }
}

/// Fitted model plus the solver's trajectory.
#[derive(Debug, Clone)]
pub struct ElasticNetFit<F> {
    pub model: LinearModel<F>,
    /// Objective after each completed sweep.
    pub objective_trace: Vec<F>,
    pub sweeps: usize,
    pub converged: bool,
}

#[inline]
pub fn soft_threshold<F: Scalar>(z: F, gamma: F) -> F {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        F::zero()
    }
}

fn penalty<F: Scalar>(beta: &[F], cfg: &ElasticNetConfig<F>) -> F {
    let l1 = beta.iter().fold(F::zero(), |a, b| a + b.abs());
    let l2 = beta.iter().fold(F::zero(), |a, &b| a + b * b);
    cfg.strength * (cfg.mixing * l1 + (F::one() - cfg.mixing) * F::of(0.5) * l2)
}

/// Objective of `model` on `(x, y)` under `cfg`.
pub fn elastic_net_objective<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    model: &LinearModel<F>,
    cfg: &ElasticNetConfig<F>,
) -> F {
    let n = F::of_usize(y.len());
    let rss = x
        .iter_rows()
        .zip(y)
        .map(|(row, &t)| {
            let r = t - model.predict_row(row);
            r * r
        })
        .fold(F::zero(), |a, b| a + b);
    rss / (n + n) + penalty(&model.beta, cfg)
}

pub fn fit_elastic_net<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &ElasticNetConfig<F>) -> Result<LinearModel<F>> {
    fit_elastic_net_traced(x, y, cfg).map(|f| f.model)
}

pub fn fit_elastic_net_traced<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    cfg: &ElasticNetConfig<F>,
) -> Result<ElasticNetFit<F>> {
    cfg.validate()?;
    check_xy(x, y)?;
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("elastic net input contains non-finite values".into()));
    }
    let (n, p) = x.shape();
    let nf = F::of_usize(n);

    let y_mean = y.iter().fold(F::zero(), |a, &b| a + b) / nf;
    let mut x_mean = vec![F::zero(); p];
    for row in x.iter_rows() {
        for (m, &v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);

    // Column-major centered copy.
    let cols: Vec<Vec<F>> = (0..p)
        .map(|j| (0..n).map(|i| x.get(i, j) - x_mean[j]).collect())
        .collect();
    let col_sq: Vec<F> = cols
        .iter()
        .map(|c| c.iter().fold(F::zero(), |a, &v| a + v * v) / nf)
        .collect();

    let mut beta = vec![F::zero(); p];
    let mut resid: Vec<F> = y.iter().map(|&v| v - y_mean).collect();
    let l1 = cfg.strength * cfg.mixing;
    let l2 = cfg.strength * (F::one() - cfg.mixing);

    let objective = |resid: &[F], beta: &[F]| {
        let rss = resid.iter().fold(F::zero(), |a, &r| a + r * r);
        rss / (nf + nf) + penalty(beta, cfg)
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_delta = F::zero();
        for j in 0..p {
            let denom = col_sq[j] + l2;
            let old = beta[j];
            let new = if col_sq[j] <= F::zero() || denom <= F::zero() {
                F::zero()
            } else {
                let rho = cols[j].iter().zip(&resid).fold(F::zero(), |a, (&c, &r)| a + c * r) / nf + col_sq[j] * old;
                soft_threshold(rho, l1) / denom
            };
            let delta = new - old;
            if delta != F::zero() {
                for (r, &c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= delta * c;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let obj = objective(&resid, &beta);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!("objective became non-finite in sweep {sweeps}")));
        }
        trace.push(obj);
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let intercept = beta.iter().zip(&x_mean).fold(y_mean, |a, (&b, &m)| a - b * m);
    Ok(ElasticNetFit {
        model: LinearModel { beta, intercept },
        objective_trace: trace,
        sweeps,
        converged,
    })
}
