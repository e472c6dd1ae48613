use super::params::NetworkParams;
use super::Mlp;

/// Gradient buffers for one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn for_mlp(mlp: &Mlp) -> Vec<Self> {
        mlp.layers()
            .iter()
            .map(|l| Self::zeros(l.in_dim(), l.out_dim()))
            .collect()
    }
}

/// Per-parameter gradients over one minibatch, shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
}

impl GradientTape {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            encoder: LayerGrad::for_mlp(&params.encoder),
            decoder: LayerGrad::for_mlp(&params.decoder),
        }
    }

    pub fn zero(&mut self) {
        for g in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            g.weights.fill(0.0);
            g.biases.fill(0.0);
        }
    }

    /// Gradient blocks in [`NetworkParams::blocks`] order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|g| [g.weights.as_slice(), g.biases.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|g| [g.weights.as_mut_slice(), g.biases.as_mut_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| *v == 0.0))
    }
}
