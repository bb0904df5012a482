//! Dense feed-forward network: rectifier hidden layers, linear output,
//! inverted dropout on hidden activations during training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Dense<F> {
    /// `out x in`
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    fn forward(&self, input: &[F], out: &mut Vec<F>) {
        out.clear();
        for (o, &b) in self.bias.iter().enumerate() {
            let w = self.weights.row(o);
            out.push(w.iter().zip(input).fold(b, |acc, (&wi, &xi)| acc + wi * xi));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
}

/// Intermediate values of one training-mode forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace<F> {
    /// Input seen by each layer.
    inputs: Vec<Vec<F>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<F>>,
    /// Per-unit dropout multipliers of each hidden layer.
    masks: Vec<Option<Vec<F>>>,
    pub output: Vec<F>,
}

impl<F: Scalar> Mlp<F> {
    /// Uniform fan-in scaled initialization: `sqrt(6 / fan_in)` for hidden
    /// layers, `sqrt(3 / fan_in)` for the output layer, zero biases.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Argument(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if l == last { 3.0 } else { 6.0 };
                let limit = F::of((gain / fan_in as f64).sqrt());
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
                Dense {
                    weights: Matrix::new(fan_out, fan_in, data).expect("sized above"),
                    bias: vec![F::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![F::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    /// Inference pass (no dropout).
    pub fn forward(&self, x: &[F]) -> Vec<F> {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut z);
            if l != last {
                z.iter_mut().for_each(|v| *v = v.max(F::zero()));
            }
            std::mem::swap(&mut a, &mut z);
        }
        a
    }

    /// Training pass. With `dropout > 0` each hidden unit is zeroed with
    /// probability `dropout` and survivors are scaled by `1 / (1 - dropout)`.
    pub(crate) fn forward_train<R: Rng>(&self, x: &[F], dropout: F, rng: &mut R) -> Trace<F> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        let mut a = x.to_vec();
        let keep_scale = F::one() / (F::one() - dropout);
        let drop_p = dropout.as_f64();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&a, &mut z);
            inputs.push(a);
            if l == last {
                a = z.clone();
            } else {
                let mut h: Vec<F> = z.iter().map(|v| v.max(F::zero())).collect();
                if dropout > F::zero() {
                    let mask: Vec<F> = (0..h.len())
                        .map(|_| {
                            if rng.gen::<f64>() < drop_p {
                                F::zero()
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    h.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
                a = h;
            }
            pre.push(z);
        }
        Trace {
            inputs,
            pre,
            masks,
            output: a,
        }
    }

    /// Accumulates parameter gradients for upstream gradient `dout` into
    /// `grads` and returns the gradient with respect to the input.
    pub(crate) fn backward(&self, trace: &Trace<F>, dout: &[F], grads: &mut Mlp<F>) -> Vec<F> {
        let last = self.layers.len() - 1;
        let mut delta = dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l != last {
                for (k, d) in delta.iter_mut().enumerate() {
                    if let Some(mask) = &trace.masks[l] {
                        *d *= mask[k];
                    }
                    if trace.pre[l][k] <= F::zero() {
                        *d = F::zero();
                    }
                }
            }
            let input = &trace.inputs[l];
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let mut dinput = vec![F::zero(); input.len()];
            for (o, &d) in delta.iter().enumerate() {
                if d == F::zero() {
                    continue;
                }
                g.bias[o] += d;
                for (gw, &xi) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *gw += d * xi;
                }
                for (di, &w) in dinput.iter_mut().zip(layer.weights.row(o)) {
                    *di += d * w;
                }
            }
            delta = dinput;
        }
        delta
    }

    /// `self += scale * other`
    pub(crate) fn add_scaled(&mut self, other: &Mlp<F>, scale: F) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += scale * y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v = F::zero());
            l.bias.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub(crate) fn locate_mut(&mut self, mut k: usize) -> &mut F {
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            if k < nw {
                return &mut l.weights.as_mut_slice()[k];
            }
            k -= nw;
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `k` in flat order (layer by layer, weights then bias).
    pub fn param(&self, k: usize) -> F {
        let mut copy_k = k;
        for l in &self.layers {
            let nw = l.weights.as_slice().len();
            if copy_k < nw {
                return l.weights.as_slice()[copy_k];
            }
            copy_k -= nw;
            if copy_k < l.bias.len() {
                return l.bias[copy_k];
            }
            copy_k -= l.bias.len();
        }
        panic!("parameter index {k} out of range");
    }

    pub fn set_param(&mut self, k: usize, v: F) {
        *self.locate_mut(k) = v;
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}
