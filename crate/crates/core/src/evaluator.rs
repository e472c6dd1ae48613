//! Monte-Carlo symbol error rate, exact delivered power, and classical
//! reference constellations.
//!
//! SER sampling is split into fixed blocks of [`BLOCK_SAMPLES`]; block `i`
//! always draws from substream `i` of the evaluation stream. Shards take
//! contiguous block ranges and their error counts are summed, so the estimate
//! does not depend on how many shards run or in which order they finish.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::harvester::Harvester;
use crate::nn::{Mlp, MlpInput};
use crate::rng::RngStream;
use crate::transceiver::{argmax, Constellation, Message};

pub const BLOCK_SAMPLES: usize = 4096;
pub const MIN_SER_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ser: f64,
    pub ser_stderr: f64,
    pub p_del: f64,
    pub rate_bits: f64,
    pub num_samples: usize,
}

/// Maps received symbols to message indices.
pub trait Detector: Sync {
    fn detect_batch(&self, ys: &[Complex64]) -> Result<Vec<usize>>;
}

/// The learned decoder followed by arg-max detection.
#[derive(Debug, Clone, Copy)]
pub struct NetworkDetector<'a>(pub &'a Mlp);

impl Detector for NetworkDetector<'_> {
    fn detect_batch(&self, ys: &[Complex64]) -> Result<Vec<usize>> {
        let m = self.0.out_dim();
        let trace = self.0.forward(MlpInput::Dense(ys.iter().flat_map(|y| [y.re, y.im]).collect()))?;
        Ok(trace.output().chunks_exact(m).map(argmax).collect())
    }
}

/// Minimum-distance detection against a known constellation.
#[derive(Debug, Clone, Copy)]
pub struct MlDetector<'a>(pub &'a Constellation);

impl Detector for MlDetector<'_> {
    fn detect_batch(&self, ys: &[Complex64]) -> Result<Vec<usize>> {
        if self.0.is_empty() {
            return Err(Error::Empty("constellation"));
        }
        Ok(ys.iter().map(|y| nearest(&self.0.points, *y)).collect())
    }
}

fn nearest(points: &[Complex64], y: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = (points[0] - y).norm_sqr();
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = (p - y).norm_sqr();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Nearest-point (ML for AWGN with equal priors); ties to the lowest index.
pub fn ml_detect(constellation: &Constellation, y: Complex64) -> Result<Message> {
    if constellation.is_empty() {
        return Err(Error::Empty("constellation"));
    }
    Message::new(nearest(&constellation.points, y), constellation.len())
}

/// Error count and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerCount {
    pub errors: u64,
    pub samples: u64,
}

impl SerCount {
    pub fn ser(&self) -> f64 {
        self.errors as f64 / self.samples as f64
    }

    pub fn stderr(&self) -> f64 {
        let p = self.ser();
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }
}

fn run_block(
    constellation: &Constellation,
    detector: &dyn Detector,
    channel: &ChannelParams,
    stream: &RngStream,
    block: usize,
    samples: usize,
) -> Result<u64> {
    let m = constellation.len();
    let mut rng = stream.substream(block as u64);
    let mut sent = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for _ in 0..samples {
        let s = rng.random_range(0..m);
        let mut y = constellation.points[s];
        if channel.noise_variance() > 0.0 {
            y += channel.sample(&mut rng);
        }
        sent.push(s);
        ys.push(y);
    }
    let got = detector.detect_batch(&ys)?;
    Ok(sent.iter().zip(&got).filter(|(a, b)| a != b).count() as u64)
}

/// Counts detection errors over `num_samples` uniformly drawn messages.
pub fn count_errors(
    constellation: &Constellation,
    detector: &dyn Detector,
    channel: &ChannelParams,
    num_samples: usize,
    stream: &RngStream,
    shards: usize,
) -> Result<SerCount> {
    if num_samples < MIN_SER_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "SER estimation needs at least {MIN_SER_SAMPLES} samples, got {num_samples}"
        )));
    }
    if constellation.is_empty() {
        return Err(Error::Empty("constellation"));
    }
    let blocks = num_samples.div_ceil(BLOCK_SAMPLES);
    let shards = shards.clamp(1, blocks);
    let per_shard = blocks.div_ceil(shards);
    let block_len = |b: usize| BLOCK_SAMPLES.min(num_samples - b * BLOCK_SAMPLES);

    let errors = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let lo = shard * per_shard;
            let hi = ((shard + 1) * per_shard).min(blocks);
            (lo..hi)
                .map(|b| run_block(constellation, detector, channel, stream, b, block_len(b)))
                .sum::<Result<u64>>()
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    Ok(SerCount { errors, samples: num_samples as u64 })
}

/// SER of `constellation` decoded by `detector`, plus the exact delivered power.
#[allow(clippy::too_many_arguments)]
pub fn estimate_ser(
    constellation: &Constellation,
    detector: &dyn Detector,
    channel: &ChannelParams,
    harvester: &Harvester,
    num_samples: usize,
    stream: &RngStream,
    shards: usize,
) -> Result<EvalReport> {
    let count = count_errors(constellation, detector, channel, num_samples, stream, shards)?;
    Ok(EvalReport {
        ser: count.ser(),
        ser_stderr: count.stderr(),
        p_del: evaluate_power(constellation, harvester)?,
        rate_bits: (constellation.len() as f64).log2(),
        num_samples,
    })
}

/// Exact probability-weighted delivered power.
pub fn evaluate_power(constellation: &Constellation, harvester: &Harvester) -> Result<f64> {
    harvester.delivered_power(&constellation.points, &constellation.probabilities)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Qam,
    Psk,
}

/// Square (4, 16), rectangular (8) or cross (32) QAM, or a PSK ring rotated
/// by `pi/M`; normalized to mean power `p_a`.
pub fn classical_baseline(kind: BaselineKind, messages: usize, p_a: f64) -> Result<Constellation> {
    if ![4, 8, 16, 32].contains(&messages) {
        return Err(Error::InvalidConfig(format!(
            "baseline constellations exist for M in {{4, 8, 16, 32}}, got {messages}"
        )));
    }
    let points: Vec<Complex64> = match kind {
        BaselineKind::Psk => (0..messages)
            .map(|k| {
                let phase = std::f64::consts::PI * (2 * k + 1) as f64 / messages as f64;
                Complex64::from_polar(1.0, phase)
            })
            .collect(),
        BaselineKind::Qam => {
            let grid = |cols: usize, rows: usize| -> Vec<Complex64> {
                let mut v = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        v.push(Complex64::new(
                            2.0 * c as f64 - (cols - 1) as f64,
                            2.0 * r as f64 - (rows - 1) as f64,
                        ));
                    }
                }
                v
            };
            match messages {
                4 => grid(2, 2),
                8 => grid(4, 2),
                16 => grid(4, 4),
                _ => grid(6, 6)
                    .into_iter()
                    .filter(|p| !(p.re.abs() == 5.0 && p.im.abs() == 5.0))
                    .collect(),
            }
        }
    };
    Constellation::uniform(points).normalized(p_a)
}
