//! Batched multi-layer perceptron with a hand-written backward pass.
//!
//! Batches are row-major `(batch, dim)` buffers. The forward pass records every
//! post-activation; that is all ReLU, Linear and Softmax need for the reverse
//! sweep.

use super::gemm::{gemm, Transpose};
use super::layer::{softmax_rows, Activation, DenseLayer};
use super::tape::LayerGrad;
use crate::error::{Error, Result};

const SMALL_FAN_IN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Input to a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum MlpInput {
    /// Row-major `(batch, in_dim)` values.
    Dense(Vec<f64>),
    /// One-hot rows given by the hot index. The first layer reduces to column
    /// selection.
    OneHot(Vec<usize>),
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    batch: usize,
    input: MlpInput,
    /// `outputs[l]` is the post-activation of layer `l`, `(batch, out_dim)`.
    outputs: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("an Mlp has at least one layer")
    }

    /// Post-activations of every layer, in order.
    pub fn layer_outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer output {} does not feed next input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| l.activation() == Activation::Softmax)
        {
            return Err(Error::InvalidConfig("softmax is only allowed on the final layer".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, hidden..., out]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    /// Single-vector forward pass through every layer.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.layers
            .iter()
            .try_fold(input.to_vec(), |x, layer| layer.forward(&x))
    }

    pub fn forward(&self, input: MlpInput) -> Result<MlpTrace> {
        let in_dim = self.in_dim();
        let batch = match &input {
            MlpInput::Dense(values) => {
                if values.len() % in_dim != 0 {
                    return Err(Error::Dimension(format!(
                        "batch buffer of {} values is not a multiple of input dim {in_dim}",
                        values.len()
                    )));
                }
                values.len() / in_dim
            }
            MlpInput::OneHot(indices) => {
                if let Some(&bad) = indices.iter().find(|&&i| i >= in_dim) {
                    return Err(Error::MessageOutOfRange { index: bad, messages: in_dim });
                }
                indices.len()
            }
        };

        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let out_dim = layer.out_dim();
            let mut out = Vec::with_capacity(batch * out_dim);
            for _ in 0..batch {
                out.extend_from_slice(&layer.biases);
            }
            match (l, &input) {
                (0, MlpInput::OneHot(indices)) => {
                    let w = &layer.weights;
                    for (row, &s) in out.chunks_exact_mut(out_dim).zip(indices) {
                        for (o, v) in row.iter_mut().enumerate() {
                            *v += w[o * in_dim + s];
                        }
                    }
                }
                _ => {
                    let prev: &[f64] = match l {
                        0 => match &input {
                            MlpInput::Dense(values) => values,
                            MlpInput::OneHot(_) => unreachable!(),
                        },
                        _ => &outputs[l - 1],
                    };
                    add_product(prev, layer, batch, &mut out);
                }
            }
            match layer.activation() {
                Activation::Softmax => softmax_rows(&mut out, out_dim),
                act => {
                    for row in out.chunks_exact_mut(out_dim) {
                        act.apply(row);
                    }
                }
            }
            outputs.push(out);
        }
        Ok(MlpTrace { batch, input, outputs })
    }

    /// Reverse sweep.
    ///
    /// `upstream` is `(batch, out_dim)`: the derivative of the scalar cost with
    /// respect to each network output. Parameter gradients are accumulated
    /// into `grads`; the return value is the derivative with respect to the
    /// input rows (empty for one-hot inputs, which are not differentiable).
    pub fn backward(
        &self,
        trace: &MlpTrace,
        upstream: &[f64],
        grads: &mut [LayerGrad],
    ) -> Result<Vec<f64>> {
        let batch = trace.batch;
        if trace.outputs.len() != self.layers.len() {
            return Err(Error::Dimension("trace was recorded on a different network".into()));
        }
        if upstream.len() != batch * self.out_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                batch * self.out_dim()
            )));
        }
        if grads.len() != self.layers.len() {
            return Err(Error::Dimension("gradient buffers do not match layers".into()));
        }
        Ok(self.sweep_back(trace, upstream.to_vec(), false, grads))
    }

    /// Reverse sweep starting from the derivative with respect to the final
    /// layer's pre-activation (the logits, for a softmax output). Lets a
    /// caller supply the fused softmax/cross-entropy gradient directly.
    pub fn backward_from_logits(
        &self,
        trace: &MlpTrace,
        delta_logits: Vec<f64>,
        grads: &mut [LayerGrad],
    ) -> Result<Vec<f64>> {
        if trace.outputs.len() != self.layers.len() || grads.len() != self.layers.len() {
            return Err(Error::Dimension("trace or gradient buffers do not match layers".into()));
        }
        if delta_logits.len() != trace.batch * self.out_dim() {
            return Err(Error::Dimension(format!(
                "logit gradient has {} values, expected {}",
                delta_logits.len(),
                trace.batch * self.out_dim()
            )));
        }
        Ok(self.sweep_back(trace, delta_logits, true, grads))
    }

    /// `delta` is post-activation for the last layer unless `at_logits`.
    fn sweep_back(&self, trace: &MlpTrace, mut delta: Vec<f64>, at_logits: bool, grads: &mut [LayerGrad]) -> Vec<f64> {
        let batch = trace.batch;
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let out_dim = layer.out_dim();
            let in_dim = layer.in_dim();
            let out = &trace.outputs[l];

            let grad = &mut grads[l];
            // dL/d(post-activation) -> dL/d(pre-activation)
            match layer.activation() {
                _ if at_logits && l == last => {}
                Activation::Linear => {}
                Activation::Relu => {
                    // mask and bias gradient in one pass
                    for (row, a) in delta.chunks_exact_mut(out_dim).zip(out.chunks_exact(out_dim)) {
                        for ((d, a), gb) in row.iter_mut().zip(a).zip(grad.biases.iter_mut()) {
                            if *a <= 0.0 {
                                *d = 0.0;
                            }
                            *gb += *d;
                        }
                    }
                }
                Activation::Softmax => {
                    for (d, p) in delta.chunks_exact_mut(out_dim).zip(out.chunks_exact(out_dim)) {
                        let dot: f64 = d.iter().zip(p).map(|(g, p)| g * p).sum();
                        for (g, p) in d.iter_mut().zip(p) {
                            *g = p * (*g - dot);
                        }
                    }
                }
            }

            if !matches!(layer.activation(), Activation::Relu) || (at_logits && l == last) {
                for row in delta.chunks_exact(out_dim) {
                    for (gb, d) in grad.biases.iter_mut().zip(row) {
                        *gb += d;
                    }
                }
            }

            match (l, &trace.input) {
                (0, MlpInput::OneHot(indices)) => {
                    for (row, &s) in delta.chunks_exact(out_dim).zip(indices) {
                        for (o, d) in row.iter().enumerate() {
                            grad.weights[o * in_dim + s] += d;
                        }
                    }
                    return Vec::new();
                }
                _ => {
                    let prev: &[f64] = match l {
                        0 => match &trace.input {
                            MlpInput::Dense(values) => values,
                            MlpInput::OneHot(_) => unreachable!(),
                        },
                        _ => &trace.outputs[l - 1],
                    };
                    delta = back_product(&delta, prev, layer, batch, &mut grad.weights);
                }
            }
        }
        delta
    }
}

/// `out(B x out) += prev(B x in) * W^T`.
fn add_product(prev: &[f64], layer: &DenseLayer, batch: usize, out: &mut [f64]) {
    let (k, n, w) = (layer.in_dim(), layer.out_dim(), &layer.weights);
    if k <= SMALL_FAN_IN {
        // gemm packing costs more than the product itself at tiny fan-in
        let mut cols = vec![0.0; k * n];
        for o in 0..n {
            for j in 0..k {
                cols[j * n + o] = w[o * k + j];
            }
        }
        for (row, x) in out.chunks_exact_mut(n).zip(prev.chunks_exact(k)) {
            for (j, &xj) in x.iter().enumerate() {
                for (v, c) in row.iter_mut().zip(&cols[j * n..(j + 1) * n]) {
                    *v += xj * c;
                }
            }
        }
    } else {
        gemm(batch, k, n, 1.0, prev, Transpose::No, w, Transpose::Yes, 1.0, out);
    }
}

/// Accumulates `dW(out x in) += delta^T * prev` and returns
/// `dprev(B x in) = delta * W`.
fn back_product(delta: &[f64], prev: &[f64], layer: &DenseLayer, batch: usize, dw: &mut [f64]) -> Vec<f64> {
    let (k, n, w) = (layer.in_dim(), layer.out_dim(), &layer.weights);
    let mut next = vec![0.0; batch * k];
    if k <= SMALL_FAN_IN {
        let mut dcols = vec![0.0; k * n];
        let mut cols = vec![0.0; k * n];
        for o in 0..n {
            for j in 0..k {
                cols[j * n + o] = w[o * k + j];
            }
        }
        for ((d, x), g) in delta.chunks_exact(n).zip(prev.chunks_exact(k)).zip(next.chunks_exact_mut(k)) {
            for j in 0..k {
                let col = &cols[j * n..(j + 1) * n];
                g[j] = d.iter().zip(col).map(|(a, b)| a * b).sum();
                for (acc, dv) in dcols[j * n..(j + 1) * n].iter_mut().zip(d) {
                    *acc += dv * x[j];
                }
            }
        }
        for o in 0..n {
            for j in 0..k {
                dw[o * k + j] += dcols[j * n + o];
            }
        }
    } else {
        gemm(n, batch, k, 1.0, delta, Transpose::Yes, prev, Transpose::No, 1.0, dw);
        gemm(batch, n, k, 1.0, delta, Transpose::No, w, Transpose::No, 0.0, &mut next);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::LayerGrad;

    fn linear(w: Vec<f64>, b: Vec<f64>, i: usize, o: usize) -> DenseLayer {
        DenseLayer::from_parts(i, o, w, b, Activation::Linear).unwrap()
    }

    #[test]
    fn batch_forward_matches_single() {
        let mlp = Mlp::new(vec![
            DenseLayer::from_parts(2, 3, vec![0.1, -0.4, 0.7, 0.2, -0.3, 0.9], vec![0.05, -0.2, 0.1], Activation::Relu)
                .unwrap(),
            DenseLayer::from_parts(3, 2, vec![0.5, -0.6, 0.3, 0.8, 0.1, -0.7], vec![0.0, 0.3], Activation::Softmax)
                .unwrap(),
        ])
        .unwrap();
        let rows = vec![0.3, -1.2, 2.0, 0.5, -0.1, 0.0];
        let trace = mlp.forward(MlpInput::Dense(rows.clone())).unwrap();
        for (row, out) in rows.chunks(2).zip(trace.output().chunks(2)) {
            let single = mlp.forward_one(row).unwrap();
            for (a, b) in single.iter().zip(out) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_hot_equals_dense_one_hot() {
        let mlp = Mlp::new(vec![linear(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, -0.5], 3, 2)]).unwrap();
        let a = mlp.forward(MlpInput::OneHot(vec![2, 0])).unwrap();
        let b = mlp
            .forward(MlpInput::Dense(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(a.output(), b.output());
        assert!(mlp.forward(MlpInput::OneHot(vec![3])).is_err());
    }

    #[test]
    fn squared_error_closed_form() {
        // cost = |Wx + b - t|^2 ; dW = 2 (Wx+b-t) x^T, db = 2 (Wx+b-t)
        let w = vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6];
        let b = vec![0.1, -0.3];
        let x = [0.7, -1.1, 0.4];
        let t = [0.2, 0.9];
        let mlp = Mlp::new(vec![linear(w.clone(), b.clone(), 3, 2)]).unwrap();
        let trace = mlp.forward(MlpInput::Dense(x.to_vec())).unwrap();
        let r: Vec<f64> = trace.output().iter().zip(t).map(|(y, t)| y - t).collect();
        let upstream: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let mut grads = vec![LayerGrad::zeros(3, 2)];
        let dx = mlp.backward(&trace, &upstream, &mut grads).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let expected = 2.0 * r[o] * x[i];
                assert!((grads[0].weights[o * 3 + i] - expected).abs() < 1e-15);
            }
            assert!((grads[0].biases[o] - 2.0 * r[o]).abs() < 1e-15);
        }
        for i in 0..3 {
            let expected = 2.0 * (r[0] * w[i] + r[1] * w[3 + i]);
            assert!((dx[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_tape() {
        let mlp = Mlp::new(vec![
            DenseLayer::from_parts(2, 2, vec![0.3, 0.4, -0.5, 0.6], vec![0.1, 0.2], Activation::Relu).unwrap(),
            DenseLayer::from_parts(2, 3, vec![0.3; 6], vec![0.0; 3], Activation::Softmax).unwrap(),
        ])
        .unwrap();
        let trace = mlp.forward(MlpInput::Dense(vec![1.0, 2.0])).unwrap();
        let mut grads = vec![LayerGrad::zeros(2, 2), LayerGrad::zeros(2, 3)];
        mlp.backward(&trace, &[0.0; 3], &mut grads).unwrap();
        assert!(grads.iter().all(|g| g.weights.iter().chain(&g.biases).all(|v| *v == 0.0)));
    }

    #[test]
    fn logit_entry_matches_cross_entropy_through_softmax() {
        let mlp = Mlp::new(vec![
            DenseLayer::from_parts(2, 3, vec![0.3, 0.4, -0.5, 0.6, 0.2, -0.1], vec![0.1, 0.2, 0.0], Activation::Relu)
                .unwrap(),
            DenseLayer::from_parts(3, 4, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect(), vec![0.0; 4], Activation::Softmax)
                .unwrap(),
        ])
        .unwrap();
        let trace = mlp.forward(MlpInput::Dense(vec![1.0, 2.0, -0.5, 0.3])).unwrap();
        let targets = [2usize, 0];
        let p = trace.output().to_vec();
        // -(1/B) ln p_t per row
        let mut upstream = vec![0.0; 8];
        let mut logits = Vec::new();
        for (k, &t) in targets.iter().enumerate() {
            upstream[k * 4 + t] = -0.5 / p[k * 4 + t];
            for j in 0..4 {
                logits.push(0.5 * (p[k * 4 + j] - if j == t { 1.0 } else { 0.0 }));
            }
        }
        let zeros = || vec![LayerGrad::zeros(2, 3), LayerGrad::zeros(3, 4)];
        let (mut g1, mut g2) = (zeros(), zeros());
        let d1 = mlp.backward(&trace, &upstream, &mut g1).unwrap();
        let d2 = mlp.backward_from_logits(&trace, logits, &mut g2).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.weights.iter().chain(&a.biases).zip(b.weights.iter().chain(&b.biases)) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert!(mlp.backward_from_logits(&trace, vec![0.0; 3], &mut g2).is_err());
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let mlp = Mlp::new(vec![linear(vec![1.0; 4], vec![0.0; 2], 2, 2)]).unwrap();
        let trace = mlp.forward(MlpInput::Dense(vec![1.0, 1.0])).unwrap();
        let mut grads = vec![LayerGrad::zeros(2, 2)];
        assert!(mlp.backward(&trace, &[1.0; 4], &mut grads).is_err());
    }

    #[test]
    fn softmax_only_last() {
        let err = Mlp::new(vec![
            DenseLayer::zeros(2, 2, Activation::Softmax).unwrap(),
            DenseLayer::zeros(2, 2, Activation::Linear).unwrap(),
        ]);
        assert!(err.is_err());
    }
}
