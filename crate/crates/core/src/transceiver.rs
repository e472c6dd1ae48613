//! Encoder, power normalization, decoder and the information loss.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpInput};

/// Floor on the total batch energy `sum |x_k|^2` below which normalization
/// is clamped and the batch reported as degenerate.
pub const EPS_NORM: f64 = 1e-20;
/// Probabilities are clamped to this before taking the log.
pub const EPS_LOG: f64 = 1e-15;

/// A message index, stored zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message(usize);

impl Message {
    /// Zero-based constructor, checked against the alphabet size.
    pub fn new(index: usize, messages: usize) -> Result<Self> {
        if index >= messages {
            return Err(Error::MessageOutOfRange { index, messages });
        }
        Ok(Self(index))
    }

    /// One-based constructor, matching the `{1, ..., M}` alphabet.
    pub fn from_number(number: usize, messages: usize) -> Result<Self> {
        if number == 0 {
            return Err(Error::MessageOutOfRange { index: 0, messages });
        }
        Self::new(number - 1, messages)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn number(self) -> usize {
        self.0 + 1
    }
}

pub fn one_hot(s: Message, messages: usize) -> Result<Vec<f64>> {
    if s.index() >= messages {
        return Err(Error::MessageOutOfRange { index: s.index(), messages });
    }
    let mut v = vec![0.0; messages];
    v[s.index()] = 1.0;
    Ok(v)
}

/// Raw (pre-normalization) encoder outputs, one complex symbol per message.
pub fn encode(encoder: &Mlp, messages: &[Message]) -> Result<Vec<Complex64>> {
    if encoder.out_dim() != 2 {
        return Err(Error::Dimension(format!(
            "encoder must end in 2 outputs (re, im), has {}",
            encoder.out_dim()
        )));
    }
    let trace = encoder.forward(MlpInput::OneHot(messages.iter().map(|m| m.index()).collect()))?;
    Ok(trace
        .output()
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect())
}

/// Result of [`normalize_power`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub symbols: Vec<Complex64>,
    pub scale: f64,
    /// Set when the batch energy fell below [`EPS_NORM`] and was clamped.
    pub degenerate: bool,
}

/// Scales the batch so that its mean power is exactly `p_a`.
pub fn normalize_power(batch: &[Complex64], p_a: f64) -> Result<Normalized> {
    if batch.is_empty() {
        return Err(Error::Empty("symbol batch"));
    }
    let energy: f64 = batch.iter().map(|x| x.norm_sqr()).sum();
    let degenerate = energy < EPS_NORM;
    let scale = (p_a * batch.len() as f64 / energy.max(EPS_NORM)).sqrt();
    Ok(Normalized {
        symbols: batch.iter().map(|x| x * scale).collect(),
        scale,
        degenerate,
    })
}

/// Probability vector for one received symbol.
pub fn decode(decoder: &Mlp, y: Complex64) -> Result<Vec<f64>> {
    if decoder.in_dim() != 2 {
        return Err(Error::Dimension(format!(
            "decoder must take 2 inputs (re, im), takes {}",
            decoder.in_dim()
        )));
    }
    decoder.forward_one(&[y.re, y.im])
}

/// Row-major `(batch, M)` probabilities for a batch of received symbols.
pub fn decode_batch(decoder: &Mlp, ys: &[Complex64]) -> Result<Vec<f64>> {
    let input = ys.iter().flat_map(|y| [y.re, y.im]).collect();
    let trace = decoder.forward(MlpInput::Dense(input))?;
    Ok(trace.output().to_vec())
}

/// Arg-max, ties broken toward the lowest index.
pub fn detect(probs: &[f64]) -> Result<Message> {
    if probs.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    Ok(Message(argmax(probs)))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `-sum_i s_i ln(max(p_i, EPS_LOG))`.
pub fn cross_entropy(target: &[f64], probs: &[f64]) -> Result<f64> {
    if target.len() != probs.len() {
        return Err(Error::Dimension(format!(
            "target has {} entries, prediction {}",
            target.len(),
            probs.len()
        )));
    }
    Ok(target
        .iter()
        .zip(probs)
        .filter(|(s, _)| **s != 0.0)
        .map(|(s, p)| -s * p.max(EPS_LOG).ln())
        .sum())
}

/// Cross-entropy against a one-hot target given by its index.
pub fn cross_entropy_index(s: usize, probs: &[f64]) -> f64 {
    -probs[s].max(EPS_LOG).ln()
}

/// A learned (or classical) modulation: `M` points with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<Complex64>,
    pub probabilities: Vec<f64>,
}

impl Constellation {
    /// Equiprobable points.
    pub fn uniform(points: Vec<Complex64>) -> Self {
        let n = points.len();
        Self {
            points,
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.probabilities)
            .map(|(x, p)| p * x.norm_sqr())
            .sum()
    }

    /// Rescales to mean power `p_a` under the stored probabilities.
    pub fn normalized(&self, p_a: f64) -> Result<Self> {
        let power = self.mean_power();
        if power < EPS_NORM {
            return Err(Error::Degenerate);
        }
        let scale = (p_a / power).sqrt();
        Ok(Self {
            points: self.points.iter().map(|x| x * scale).collect(),
            probabilities: self.probabilities.clone(),
        })
    }
}

/// Feeds all `M` messages as one batch through the encoder and
/// [`normalize_power`], giving the constellation under uniform messages.
pub fn export_constellation(encoder: &Mlp, messages: usize, p_a: f64) -> Result<Constellation> {
    let all: Vec<Message> = (0..messages).map(Message).collect();
    let raw = encode(encoder, &all)?;
    let normalized = normalize_power(&raw, p_a)?;
    if normalized.degenerate {
        return Err(Error::Degenerate);
    }
    Ok(Constellation::uniform(normalized.symbols))
}
