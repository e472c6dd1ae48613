//! Central finite-difference verification of the end-to-end gradient.
//!
//! Each parameter is perturbed by `+-step` with the minibatch (messages and
//! noise) held fixed. Perturbations that flip any ReLU unit on or off cross a
//! kink where the cost is not differentiable; those entries are skipped and
//! counted.

use num_complex::Complex64;

use crate::channel::ChannelParams;
use crate::error::Result;
use crate::harvester::{Harvester, ModelAParams, ModelBParams};
use crate::nn::{init_params, Activation, Architecture, GradientTape, NetworkParams};
use crate::objective::{run, Minibatch, Objective, Pass};
use crate::rng::{Purpose, RngStream};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Worst entry of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub max_rel_error: f64,
    pub blocks: Vec<BlockError>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Relative error with an absolute floor.
///
/// A central difference of a cost of magnitude `|f|` carries rounding noise of
/// order `eps_mach |f| / step`; entries far below that cannot be resolved, so
/// the denominator never drops below `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Rounding error of one cost evaluation, in units of `eps_mach |cost|`. The
/// cost sums a minibatch of log terms plus the power term, each carrying a
/// few roundings.
pub const COST_ROUNDING_ULPS: f64 = 16.0;

/// Smallest gradient magnitude at which a rounding-limited central difference
/// still meets `tolerance`:
/// `COST_ROUNDING_ULPS * eps_mach * max(|cost|, 1) / (step * tolerance)`.
pub fn resolution_floor(cost: f64, step: f64, tolerance: f64) -> f64 {
    COST_ROUNDING_ULPS * f64::EPSILON * cost.abs().max(1.0) / (step * tolerance)
}

fn relu_pattern(pass: &Pass, params: &NetworkParams) -> Vec<bool> {
    let mut pattern = Vec::new();
    for (trace, mlp) in [(&pass.encoder, &params.encoder), (&pass.decoder, &params.decoder)] {
        for (out, layer) in trace.layer_outputs().iter().zip(mlp.layers()) {
            if layer.activation() == Activation::Relu {
                pattern.extend(out.iter().map(|v| *v > 0.0));
            }
        }
    }
    pattern
}

/// Compares the analytic gradient with central differences.
///
/// `corrupt` perturbs one analytic entry before comparison; it exists so the
/// harness itself can be shown to fail.
pub fn check_gradient(
    params: &NetworkParams,
    batch: &Minibatch,
    obj: &Objective,
    step: f64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let mut tape = GradientTape::zeros_like(params);
    let base = run(params, batch, obj, Some(&mut tape))?;
    let base_pattern = relu_pattern(&base, params);
    let floor = resolution_floor(base.report.cost, step, DEFAULT_TOLERANCE);

    if corrupt {
        let blocks = tape.blocks_mut();
        if let Some(first) = blocks.into_iter().find(|b| !b.is_empty()) {
            first[0] += 1e-3 * first[0].abs().max(floor);
        }
    }

    let names = params.block_names();
    let analytic: Vec<Vec<f64>> = tape.blocks().iter().map(|b| b.to_vec()).collect();
    let mut probe = params.clone();
    let mut blocks = Vec::with_capacity(names.len());
    let mut checked = 0;
    let mut skipped = 0;

    for (bi, name) in names.iter().enumerate() {
        let mut worst = BlockError {
            name: name.clone(),
            max_rel_error: 0.0,
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for j in 0..analytic[bi].len() {
            let orig = probe.blocks()[bi][j];
            probe.blocks_mut()[bi][j] = orig + step;
            let plus = run(&probe, batch, obj, None)?;
            let plus_ok = relu_pattern(&plus, &probe) == base_pattern;
            probe.blocks_mut()[bi][j] = orig - step;
            let minus = run(&probe, batch, obj, None)?;
            let minus_ok = relu_pattern(&minus, &probe) == base_pattern;
            probe.blocks_mut()[bi][j] = orig;

            if !(plus_ok && minus_ok) {
                skipped += 1;
                continue;
            }
            checked += 1;
            let numeric = (plus.report.cost - minus.report.cost) / (2.0 * step);
            let a = analytic[bi][j];
            let err = relative_error(a, numeric, floor);
            if err > worst.max_rel_error || err.is_nan() {
                worst = BlockError {
                    name: name.clone(),
                    max_rel_error: err,
                    index: j,
                    analytic: a,
                    numeric,
                };
            }
        }
        blocks.push(worst);
    }

    let max_rel_error = blocks
        .iter()
        .map(|b| b.max_rel_error)
        .fold(0.0, |acc: f64, e| if e.is_nan() { f64::NAN } else { acc.max(e) });
    Ok(GradCheckReport {
        label: format!(
            "model {} lambda {:e} batch {}",
            obj.harvester.name(),
            obj.lambda,
            batch.len()
        ),
        max_rel_error,
        blocks,
        checked,
        skipped_kinks: skipped,
    })
}

/// Settings for a randomized gradient-check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSuite {
    pub architecture: Architecture,
    pub p_a: f64,
    pub snr: f64,
    pub model_a: ModelAParams,
    pub model_b: ModelBParams,
    pub lambdas: Vec<f64>,
    pub cases: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub step: f64,
}

impl GradCheckSuite {
    pub fn new(architecture: Architecture, p_a: f64, snr: f64, seed: u64) -> Self {
        Self {
            architecture,
            p_a,
            snr,
            model_a: ModelAParams::default(),
            model_b: ModelBParams::default(),
            lambdas: vec![0.0, 1e-4, 1e-2],
            cases: 24,
            batch_size: 16,
            seed,
            step: DEFAULT_STEP,
        }
    }

    /// Runs every case: harvester models alternate, lambdas cycle, each case
    /// has its own initialization and minibatch.
    pub fn run(&self, corrupt: bool) -> Result<Vec<GradCheckReport>> {
        let channel = ChannelParams::from_snr(self.p_a, self.snr)?;
        let stream = RngStream::new(self.seed, Purpose::GradCheck);
        (0..self.cases)
            .map(|i| {
                let harvester = if i % 2 == 0 {
                    Harvester::ModelA(self.model_a)
                } else {
                    Harvester::ModelB(self.model_b)
                };
                let lambda = self.lambdas[(i / 2) % self.lambdas.len()];
                let params = init_params(&self.architecture, self.seed.wrapping_add(i as u64))?;
                let params = perturb_biases(params, &stream, i as u64);
                let mut rng = stream.substream(i as u64);
                let batch = Minibatch::sample(self.architecture.messages, self.batch_size, &channel, &mut rng);
                let obj = Objective { p_a: self.p_a, harvester, lambda };
                let mut report = check_gradient(&params, &batch, &obj, self.step, corrupt && i == 0)?;
                report.label = format!("case {i:2}: {}", report.label);
                Ok(report)
            })
            .collect()
    }
}

/// Init leaves biases at zero; random biases exercise more of the graph.
fn perturb_biases(mut params: NetworkParams, stream: &RngStream, index: u64) -> NetworkParams {
    use rand::Rng;
    let mut rng = stream.substream(1 << 32 | index);
    let (enc, dec) = (&mut params.encoder, &mut params.decoder);
    for layer in enc.layers_mut().iter_mut().chain(dec.layers_mut().iter_mut()) {
        for b in layer.biases_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    params
}

/// A minibatch that sends each listed message with zero noise.
pub fn noiseless_batch(messages: &[usize]) -> Minibatch {
    Minibatch {
        messages: messages.to_vec(),
        noise: vec![Complex64::new(0.0, 0.0); messages.len()],
    }
}
