use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// One affine layer; `weights` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected network: ReLU on every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradient = MlpParams;

impl MlpParams {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        MlpParams {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    /// He-uniform weights on hidden layers, `U(-1e-3, 1e-3)` on the output layer, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut params = MlpParams::zeros(dims);
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let fan_in = layer.weights.ncols() as f64;
            let bound = if l == last {
                1e-3
            } else {
                (6.0 / fan_in).sqrt()
            };
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams::zeros(&self.dims())
    }

    /// `[input, hidden.., output]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Every weight and bias, layer by layer, weights row-major before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Hash over the exact bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dims().hash(&mut h);
        for v in self.values() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x).into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `(batch, input)` matrix.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            if l != last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }

    /// Forward pass keeping every layer's pre-activation for backprop.
    /// Returns `(inputs_to_each_layer, pre_activations)`.
    pub(crate) fn forward_cached(&self, x: Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            let next = if l != last { z.mapv(relu) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        (inputs, pre)
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output) through
    /// the cached forward pass.
    pub(crate) fn backward(
        &self,
        inputs: &[Array2<f64>],
        pre: &[Array2<f64>],
        d_out: Array2<f64>,
    ) -> Gradient {
        let mut grad = self.zeros_like();
        let mut dz = d_out;
        for l in (0..self.layers.len()).rev() {
            grad.layers[l].weights = dz.t().dot(&inputs[l]);
            grad.layers[l].bias = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.layers[l].weights);
                Zip::from(&mut da).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
        }
        grad
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
