use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{check_len, Error, Result};

/// Activation applied to the last layer. Hidden layers always use the
/// rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputActivation {
    Identity,
    /// `scale · tanh(z)`, bounded to `[-scale, scale]`.
    BoundedTanh { scale: f64 },
}

/// Fully connected feed-forward network.
///
/// Layer `l` stores its weights as an `out × in` row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    output: OutputActivation,
}

/// Intermediate values of a batched forward pass, needed for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<DenseMatrix>,
    preacts: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &DenseMatrix {
        self.activations.last().expect("trace has at least the input")
    }

    pub fn into_output(mut self) -> DenseMatrix {
        self.activations.pop().expect("trace has at least the input")
    }

    /// Which hidden units were active, in layer order.
    pub fn rectifier_pattern(&self) -> Vec<bool> {
        let hidden = self.preacts.len().saturating_sub(1);
        self.preacts[..hidden]
            .iter()
            .flat_map(|z| z.as_slice().iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Parameter gradients, shaped exactly like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Slices in the same order as [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn new_seeded<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output)?;
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = 1.0 / (w.cols() as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
            for v in b.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidInput(
                "an mlp needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidInput("layer sizes must be positive".into()));
        }
        if let OutputActivation::BoundedTanh { scale } = output {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "tanh output scale must be positive, got {scale}"
                )));
            }
        }
        let weights = layer_sizes
            .windows(2)
            .map(|p| DenseMatrix::zeros(p[1], p[0]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<Vec<f64>>,
        output: OutputActivation,
    ) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidInput("no layers".into()))?;
        let mut sizes = vec![first.cols()];
        check_len("bias count", weights.len(), biases.len())?;
        for (w, b) in weights.iter().zip(&biases) {
            check_len("layer input width", *sizes.last().unwrap(), w.cols())?;
            check_len("bias length", w.rows(), b.len())?;
            sizes.push(w.rows());
        }
        let mut net = Self::zeros(&sizes, output)?;
        net.weights = weights;
        net.biases = biases;
        Ok(net)
    }

    /// Number of trainable scalars for the given layer sizes.
    pub fn param_count_for(layer_sizes: &[usize]) -> usize {
        layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(&self.layer_sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Parameter slices ordered `[W0, b0, W1, b1, ...]`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), input.len())?;
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.into_output().into_vec())
    }

    /// Forward pass over a batch laid out one sample per row.
    pub fn forward_batch(&self, inputs: &DenseMatrix) -> Result<ForwardTrace> {
        check_len("mlp batch input", self.input_dim(), inputs.cols())?;
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut preacts = Vec::with_capacity(self.num_layers());
        activations.push(inputs.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].matmul_transposed(w)?;
            for r in 0..z.rows() {
                for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                }
            }
            let mut a = z.clone();
            if l < last {
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            } else if let OutputActivation::BoundedTanh { scale } = self.output {
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = scale * v.tanh());
            }
            preacts.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            activations,
            preacts,
        })
    }

    /// Gradients of `upstream · forward(input)` with respect to the
    /// parameters and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        check_len("mlp input", self.input_dim(), input.len())?;
        check_len("mlp upstream gradient", self.output_dim(), upstream.len())?;
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        let g = DenseMatrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        let trace = self.forward_batch(&x)?;
        let (grads, dx) = self.backward_batch(&trace, &g)?;
        Ok((grads, dx.into_vec()))
    }

    /// Backpropagates `upstream` (one row per sample, gradient of the loss
    /// with respect to the network output). Parameter gradients are summed
    /// over the batch.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        upstream: &DenseMatrix,
    ) -> Result<(Gradients, DenseMatrix)> {
        let out = trace.output();
        check_len("upstream rows", out.rows(), upstream.rows())?;
        check_len("upstream cols", out.cols(), upstream.cols())?;
        let last = self.num_layers() - 1;

        let mut delta = upstream.clone();
        if let OutputActivation::BoundedTanh { scale } = self.output {
            for (d, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                let t = a / scale;
                *d *= scale * (1.0 - t * t);
            }
        }

        let mut weights = Vec::with_capacity(self.num_layers());
        let mut biases = Vec::with_capacity(self.num_layers());
        for l in (0..=last).rev() {
            if l < last {
                for (d, &z) in delta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(trace.preacts[l].as_slice())
                {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            weights.push(delta.transpose_matmul(&trace.activations[l])?);
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (acc, v) in db.iter_mut().zip(delta.row(r)) {
                    *acc += v;
                }
            }
            biases.push(db);
            delta = delta.matmul(&self.weights[l])?;
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    /// `self ← tau · online + (1 − tau) · self`, parameter-wise.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !self.same_shape(online) {
            return Err(Error::InvalidInput(format!(
                "soft update shape mismatch: {:?} vs {:?}",
                self.layer_sizes, online.layer_sizes
            )));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidInput(format!("tau {tau} outside [0, 1]")));
        }
        for (dst, src) in self.params_mut().into_iter().zip(online.params()) {
            for (t, &o) in dst.iter_mut().zip(src) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }
}
