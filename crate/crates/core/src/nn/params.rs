//! Encoder/decoder parameter sets and their deterministic initialization.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::layer::{Activation, DenseLayer};
use super::Mlp;
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

/// Layer widths of the autoencoder.
///
/// Encoder: `M -> encoder_hidden... -> 2`, hidden ReLU, linear output.
/// Decoder: `2 -> decoder_hidden... -> M`, hidden ReLU, softmax output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub messages: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Architecture {
    /// One hidden layer of width `2M` on each side.
    pub fn default_for(messages: usize) -> Self {
        Self {
            messages,
            encoder_hidden: vec![2 * messages],
            decoder_hidden: vec![2 * messages],
        }
    }

    pub fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.messages];
        dims.extend(&self.encoder_hidden);
        dims.push(2);
        dims
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![2];
        dims.extend(&self.decoder_hidden);
        dims.push(self.messages);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 messages, got {}",
                self.messages
            )));
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl NetworkParams {
    /// Builds the network from layer dims, all parameters zero.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoder: build(&arch.encoder_dims(), Activation::Linear)?,
            decoder: build(&arch.decoder_dims(), Activation::Softmax)?,
        })
    }

    pub fn architecture(&self) -> Architecture {
        let enc = self.encoder.dims();
        let dec = self.decoder.dims();
        Architecture {
            messages: enc[0],
            encoder_hidden: enc[1..enc.len() - 1].to_vec(),
            decoder_hidden: dec[1..dec.len() - 1].to_vec(),
        }
    }

    pub fn messages(&self) -> usize {
        self.encoder.in_dim()
    }

    /// Parameter blocks, encoder first: `weights, biases` per layer.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.encoder
            .layers()
            .iter()
            .chain(self.decoder.layers())
            .flat_map(|l| [l.weights(), l.biases()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let (enc, dec) = (&mut self.encoder, &mut self.decoder);
        enc.layers_mut()
            .iter_mut()
            .chain(dec.layers_mut().iter_mut())
            .flat_map(|l| {
                let DenseLayer { weights, biases, .. } = l;
                [weights.as_mut_slice(), biases.as_mut_slice()]
            })
            .collect()
    }

    /// Human-readable name of each block, same order as [`Self::blocks`].
    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (side, mlp) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for l in 0..mlp.layers().len() {
                names.push(format!("{side}.{l}.weights"));
                names.push(format!("{side}.{l}.biases"));
            }
        }
        names
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

fn build(dims: &[usize], last: Activation) -> Result<Mlp> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("invalid layer dims {dims:?}")));
    }
    let n = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 1 == n { last } else { Activation::Relu };
            DenseLayer::zeros(w[0], w[1], act)
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::new(layers)
}

/// Xavier-uniform weights, zero biases. A pure function of `(arch, seed)`.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(arch)?;
    let mut rng = RngStream::new(seed, Purpose::Init).rng();
    let (enc, dec) = (&mut params.encoder, &mut params.decoder);
    for layer in enc.layers_mut().iter_mut().chain(dec.layers_mut().iter_mut()) {
        xavier_uniform(layer, &mut rng);
    }
    Ok(params)
}

fn xavier_uniform<R: Rng + ?Sized>(layer: &mut DenseLayer, rng: &mut R) {
    let bound = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for w in layer.weights_mut() {
        *w = dist.sample(rng);
    }
    layer.biases_mut().fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let p = init_params(&Architecture::default_for(16), 1).unwrap();
        assert_eq!(p.encoder.dims(), vec![16, 32, 2]);
        assert_eq!(p.decoder.dims(), vec![2, 32, 16]);
        assert_eq!(p.architecture(), Architecture::default_for(16));
        assert_eq!(p.blocks().len(), p.block_names().len());
    }

    #[test]
    fn biases_zero_and_deterministic() {
        let arch = Architecture::default_for(8);
        let a = init_params(&arch, 7).unwrap();
        let b = init_params(&arch, 7).unwrap();
        let c = init_params(&arch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for l in a.encoder.layers().iter().chain(a.decoder.layers()) {
            assert!(l.biases().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn xavier_variance() {
        // 64x64 layer redrawn until 10^4 samples are collected.
        let mut rng = RngStream::new(3, Purpose::Auxiliary).rng();
        let mut samples = Vec::new();
        while samples.len() < 10_000 {
            let mut layer = DenseLayer::zeros(64, 64, Activation::Relu).unwrap();
            xavier_uniform(&mut layer, &mut rng);
            samples.extend_from_slice(layer.weights());
        }
        samples.truncate(10_000);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / 128.0;
        assert!((var - target).abs() / target < 0.1, "variance {var}");
    }

    #[test]
    fn rejects_zero_width() {
        let arch = Architecture {
            messages: 4,
            encoder_hidden: vec![0],
            decoder_hidden: vec![8],
        };
        assert!(init_params(&arch, 1).is_err());
        assert!(init_params(&Architecture::default_for(1), 1).is_err());
    }
}
