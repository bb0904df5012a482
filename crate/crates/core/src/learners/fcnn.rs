//! Fully connected regression network trained by mini-batch SGD on MSE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::{check_xy, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FcnnConfig<F> {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub learning_rate: F,
    pub dropout: F,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for FcnnConfig<F> {
    fn default() -> Self {
        Self {
            hidden: vec![3000, 1500],
            learning_rate: F::of(1e-4),
            dropout: F::of(0.4),
            epochs: 455,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl<F: Scalar> FcnnConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Argument("hidden layer widths must be positive".into()));
        }
        if !(self.learning_rate > F::zero() && self.learning_rate.is_finite()) {
            return Err(Error::Argument("learning_rate must be > 0".into()));
        }
        if !(self.dropout >= F::zero() && self.dropout < F::one()) {
            return Err(Error::Argument("dropout must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn layer_sizes(&self, input: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Fcnn<F> {
    pub config: FcnnConfig<F>,
    pub net: Mlp<F>,
}

impl<F: Scalar> Regressor<F> for Fcnn<F> {
    fn n_features(&self) -> usize {
        self.net.input_dim()
    }

    fn predict_row(&self, x: &[F]) -> F {
        self.net.forward(x)[0]
    }
}

#[derive(Debug, Clone)]
pub struct FcnnFit<F> {
    pub model: Fcnn<F>,
    /// Mean training-mode squared error of each epoch.
    pub epoch_loss: Vec<F>,
}

pub fn fit_fcnn<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &FcnnConfig<F>) -> Result<Fcnn<F>> {
    fit_fcnn_traced(x, y, cfg).map(|f| f.model)
}

pub fn fit_fcnn_traced<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &FcnnConfig<F>) -> Result<FcnnFit<F>> {
    cfg.validate()?;
    check_xy(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::init(&cfg.layer_sizes(x.cols()), &mut rng)?;
    let mut grads = net.zeros_like();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let two = F::of(2.0);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = F::zero();
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = two / F::of_usize(batch.len());
            for &i in batch {
                let trace = net.forward_train(x.row(i), cfg.dropout, &mut rng);
                let err = trace.output[0] - y[i];
                total += err * err;
                net.backward(&trace, &[scale * err], &mut grads);
            }
            net.add_scaled(&grads, -cfg.learning_rate);
        }
        let loss = total / F::of_usize(x.rows());
        if !loss.is_finite() || !net.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_loss.push(loss);
    }
    Ok(FcnnFit {
        model: Fcnn {
            config: cfg.clone(),
            net,
        },
        epoch_loss,
    })
}

/// Full-batch mean squared error and its gradient, dropout disabled.
pub fn mse_loss_and_grad<F: Scalar>(net: &Mlp<F>, x: &Matrix<F>, y: &[F]) -> (F, Mlp<F>) {
    let mut grads = net.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = F::of_usize(y.len());
    let mut loss = F::zero();
    for (row, &t) in x.iter_rows().zip(y) {
        let trace = net.forward_train(row, F::zero(), &mut rng);
        let err = trace.output[0] - t;
        loss += err * err;
        net.backward(&trace, &[F::of(2.0) * err / n], &mut grads);
    }
    (loss / n, grads)
}

pub fn mse_loss<F: Scalar>(net: &Mlp<F>, x: &Matrix<F>, y: &[F]) -> F {
    let n = F::of_usize(y.len());
    x.iter_rows()
        .zip(y)
        .map(|(row, &t)| {
            let e = net.forward(row)[0] - t;
            e * e
        })
        .fold(F::zero(), |a, b| a + b)
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_data() -> (Matrix<f64>, Vec<f64>) {
        let xs: Vec<[f64; 1]> = (0..64).map(|i| [-1.0 + 2.0 * i as f64 / 63.0]).collect();
        let y = xs.iter().map(|r| 2.0 * r[0]).collect();
        (Matrix::from_rows(&xs).unwrap(), y)
    }

    fn small_cfg(lr: f64) -> FcnnConfig<f64> {
        FcnnConfig {
            hidden: vec![16, 16],
            learning_rate: lr,
            dropout: 0.0,
            epochs: 300,
            batch_size: 8,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = linear_data();
        let cfg = FcnnConfig {
            epochs: 5,
            ..small_cfg(0.01)
        };
        let a = fit_fcnn(&x, &y, &cfg).unwrap();
        let b = fit_fcnn(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let drop = FcnnConfig { dropout: 0.3, ..cfg };
        assert_eq!(fit_fcnn(&x, &y, &drop).unwrap(), fit_fcnn(&x, &y, &drop).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::<f64>::init(&[3, 5, 4, 1], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grads) = mse_loss_and_grad(&net, &x, &y);
        let h = 1e-5;
        for k in 0..net.param_count() {
            let mut plus = net.clone();
            plus.set_param(k, net.param(k) + h);
            let mut minus = net.clone();
            minus.set_param(k, net.param(k) - h);
            let numeric = (mse_loss(&plus, &x, &y) - mse_loss(&minus, &x, &y)) / (2.0 * h);
            let analytic = grads.param(k);
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: {analytic} vs {numeric}");
        }
    }

    // Learning-rate sweep: the chosen rate must be among those that reach the
    // target, and the best of the sweep must too.
    #[test]
    fn learns_linear_map() {
        let (x, y) = linear_data();
        let sweep: Vec<(f64, f64)> = [0.001, 0.003, 0.01, 0.03]
            .iter()
            .map(|&lr| {
                let m = fit_fcnn(&x, &y, &small_cfg(lr)).unwrap();
                (lr, mse_loss(&m.net, &x, &y))
            })
            .collect();
        let chosen = sweep.iter().find(|(lr, _)| *lr == 0.01).unwrap().1;
        assert!(chosen < 1e-2, "{sweep:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = linear_data();
        let y: Vec<f64> = y.iter().map(|v| v * 1e150).collect();
        let cfg = FcnnConfig {
            epochs: 50,
            ..small_cfg(10.0)
        };
        assert!(matches!(fit_fcnn(&x, &y, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn config_validation() {
        let bad = FcnnConfig {
            dropout: 1.5,
            ..small_cfg(0.01)
        };
        assert!(bad.validate().is_err());
        assert!(FcnnConfig::<f64>::default().validate().is_ok());
    }
}
