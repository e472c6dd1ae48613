//! The end-to-end training cost and its gradient.
//!
//! The graph is fixed: one-hot messages -> encoder -> minibatch power
//! normalization -> additive noise -> decoder -> cost, where
//!
//! ```text
//! cost = mean_k CE(s_k, s_hat_k) + lambda / max(P_del, EPS_PDEL)
//! ```
//!
//! and `P_del` is evaluated on the normalized (noise-free) minibatch symbols.
//! Noise samples are constants of the minibatch, so gradients flow through the
//! clean signal path only.
//!
//! Every message in a minibatch maps to one of `M` encoder outputs, so the
//! encoder runs once per message rather than once per sample, and the
//! minibatch moments are taken over the `M` symbols weighted by their counts.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::harvester::Harvester;
use crate::nn::{Activation, GradientTape, MlpInput, MlpTrace, NetworkParams};
use crate::transceiver::{EPS_LOG, EPS_NORM};

/// Floor applied to `P_del` before it divides `lambda`.
pub const EPS_PDEL: f64 = 1e-12;

/// `batch_ce + lambda / max(p_del, EPS_PDEL)`.
pub fn total_cost(batch_ce: f64, p_del: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return batch_ce;
    }
    batch_ce + lambda / p_del.max(EPS_PDEL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub p_a: f64,
    pub harvester: Harvester,
    pub lambda: f64,
}

/// Messages (zero-based) and the channel noise realization for each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub messages: Vec<usize>,
    pub noise: Vec<Complex64>,
}

impl Minibatch {
    /// Uniform messages and fresh noise.
    pub fn sample<R: Rng + ?Sized>(
        messages: usize,
        size: usize,
        channel: &ChannelParams,
        rng: &mut R,
    ) -> Self {
        let msgs: Vec<usize> = (0..size).map(|_| rng.random_range(0..messages)).collect();
        let noise = if channel.noise_variance() == 0.0 {
            vec![Complex64::new(0.0, 0.0); size]
        } else {
            (0..size).map(|_| channel.sample(rng)).collect()
        };
        Self { messages: msgs, noise }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub cost: f64,
    pub cross_entropy: f64,
    pub p_del: f64,
    /// Realized `mean_k |x_k|^2` over the minibatch after normalization.
    pub mean_power: f64,
    pub degenerate: bool,
}

pub(crate) struct Pass {
    pub report: StepReport,
    pub encoder: MlpTrace,
    pub decoder: MlpTrace,
}

/// Forward pass only.
pub fn evaluate(params: &NetworkParams, batch: &Minibatch, obj: &Objective) -> Result<StepReport> {
    run(params, batch, obj, None).map(|p| p.report)
}

/// Forward and reverse pass; `tape` is zeroed and then filled with
/// `d cost / d theta`.
pub fn evaluate_with_gradient(
    params: &NetworkParams,
    batch: &Minibatch,
    obj: &Objective,
    tape: &mut GradientTape,
) -> Result<StepReport> {
    tape.zero();
    run(params, batch, obj, Some(tape)).map(|p| p.report)
}

pub(crate) fn run(
    params: &NetworkParams,
    batch: &Minibatch,
    obj: &Objective,
    tape: Option<&mut GradientTape>,
) -> Result<Pass> {
    let m = params.messages();
    let b = batch.len();
    if b == 0 {
        return Err(Error::Empty("minibatch"));
    }
    if batch.noise.len() != b {
        return Err(Error::Dimension("one noise sample per message required".into()));
    }
    if let Some(&bad) = batch.messages.iter().find(|&&s| s >= m) {
        return Err(Error::MessageOutOfRange { index: bad, messages: m });
    }

    let out_act = params.decoder.layers().last().map(|l| l.activation());
    if out_act != Some(Activation::Softmax) {
        return Err(Error::InvalidConfig("decoder must end in a softmax layer".into()));
    }

    // encoder, once per message
    let enc = params.encoder.forward(MlpInput::OneHot((0..m).collect()))?;
    let raw: Vec<Complex64> = enc
        .output()
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();

    let mut counts = vec![0usize; m];
    for &s in &batch.messages {
        counts[s] += 1;
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / b as f64).collect();

    // minibatch normalization: scale = sqrt(P_a B / sum_k |u_k|^2)
    let energy: f64 = counts.iter().zip(&raw).map(|(&c, u)| c as f64 * u.norm_sqr()).sum();
    let degenerate = energy < EPS_NORM;
    let mean_energy = energy.max(EPS_NORM) / b as f64;
    let scale = (obj.p_a / mean_energy).sqrt();
    let symbols: Vec<Complex64> = raw.iter().map(|u| u * scale).collect();
    let mean_power =
        batch.messages.iter().map(|&s| symbols[s].norm_sqr()).sum::<f64>() / b as f64;

    // channel and decoder
    let received: Vec<f64> = batch
        .messages
        .iter()
        .zip(&batch.noise)
        .flat_map(|(&s, n)| {
            let y = symbols[s] + n;
            [y.re, y.im]
        })
        .collect();
    let dec = params.decoder.forward(MlpInput::Dense(received))?;
    let probs = dec.output();
    let ce = batch
        .messages
        .iter()
        .enumerate()
        .map(|(k, &s)| -probs[k * m + s].max(EPS_LOG).ln())
        .sum::<f64>()
        / b as f64;

    let mut pdel_grad = vec![Complex64::new(0.0, 0.0); m];
    let p_del = obj
        .harvester
        .delivered_power_with_grad(&symbols, &weights, &mut pdel_grad)?;
    let cost = total_cost(ce, p_del, obj.lambda);
    let report = StepReport { cost, cross_entropy: ce, p_del, mean_power, degenerate };

    if let Some(tape) = tape {
        // d CE / d logits = (p - onehot) / B; zero where the log clamp is active
        let inv_b = 1.0 / b as f64;
        let mut delta = Vec::with_capacity(b * m);
        for (row, &s) in probs.chunks_exact(m).zip(&batch.messages) {
            if row[s] >= EPS_LOG {
                let start = delta.len();
                delta.extend(row.iter().map(|p| p * inv_b));
                delta[start + s] -= inv_b;
            } else {
                delta.resize(delta.len() + m, 0.0);
            }
        }
        let d_received = params.decoder.backward_from_logits(&dec, delta, &mut tape.decoder)?;

        // gather per message: noise is additive, so d/dx = d/dy
        let mut d_sym = vec![Complex64::new(0.0, 0.0); m];
        for (k, &s) in batch.messages.iter().enumerate() {
            d_sym[s] += Complex64::new(d_received[2 * k], d_received[2 * k + 1]);
        }
        if obj.lambda != 0.0 && p_del > EPS_PDEL {
            let k = -obj.lambda / (p_del * p_del);
            for (d, g) in d_sym.iter_mut().zip(&pdel_grad) {
                *d += g * k;
            }
        }

        // through the normalization: x_s = c u_s, c = sqrt(P_a / S),
        // S = sum_t w_t |u_t|^2, dc/du_s = -c w_s u_s / S
        let mut upstream_enc = vec![0.0; 2 * m];
        let proj: f64 = d_sym.iter().zip(&raw).map(|(g, u)| g.re * u.re + g.im * u.im).sum();
        for s in 0..m {
            let mut d = d_sym[s] * scale;
            if !degenerate {
                d -= raw[s] * (scale * weights[s] * proj / mean_energy);
            }
            upstream_enc[2 * s] = d.re;
            upstream_enc[2 * s + 1] = d.im;
        }
        params.encoder.backward(&enc, &upstream_enc, &mut tape.encoder)?;
    }

    Ok(Pass { report, encoder: enc, decoder: dec })
}
