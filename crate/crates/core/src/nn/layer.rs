//! Dense layer: `y = activation(W x + b)`.
//!
//! Weights are row-major with shape `(out_dim, in_dim)`.

use super::fastexp::exp_nonpositive_slice;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    /// Only valid as the final decoder activation.
    Softmax,
}

impl Activation {
    /// Applies the activation to one row in place.
    pub(crate) fn apply(self, row: &mut [f64]) {
        match self {
            Activation::Relu => {
                for v in row.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// A zero-initialized layer.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        })
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, activation)?;
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::Dimension(format!(
                "layer {in_dim}->{out_dim} expects {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                biases.len()
            )));
        }
        layer.weights = weights;
        layer.biases = biases;
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim {
            return Err(Error::Dimension(format!(
                "layer expects input of length {}, got {}",
                self.in_dim,
                input.len()
            )));
        }
        let mut out: Vec<f64> = self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        self.activation.apply(&mut out);
        Ok(out)
    }
}

/// Max-shifted softmax in place. NaN propagates.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let n = row.len();
    softmax_rows(row, n);
}

/// Row-wise softmax over a `(rows, width)` buffer; the exponentials run as one
/// batch.
pub(crate) fn softmax_rows(values: &mut [f64], width: usize) {
    for row in values.chunks_exact_mut(width) {
        // a NaN entry turns the whole row NaN either way through the sum below
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
        for v in row.iter_mut() {
            *v -= max;
        }
    }
    exp_nonpositive_slice(values);
    for row in values.chunks_exact_mut(width) {
        let inv = 1.0 / row.iter().sum::<f64>();
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Numerically stabilized softmax. Rejects non-finite logits.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}
