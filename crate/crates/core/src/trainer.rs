//! Minibatch Adam training, best-of-restarts selection, and the `lambda`
//! sweep.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::evaluator::{estimate_ser, NetworkDetector};
use crate::harvester::{Harvester, ModelAParams};
use crate::nn::{init_params, AdamHyper, AdamState, Architecture, GradientTape, NetworkParams};
use crate::objective::{evaluate_with_gradient, total_cost, Minibatch, Objective, StepReport};
use crate::rng::{Purpose, RngStream};
use crate::transceiver::{cross_entropy_index, decode_batch, export_constellation, Constellation};

/// Geometric schedule with `lambda = 0` prepended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub start: f64,
    pub factor: f64,
    /// Total number of points including `lambda = 0`.
    pub max_points: usize,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { start: 1e-5, factor: 2.0, max_points: 16 }
    }
}

impl LambdaSchedule {
    /// Point `k`: 0 for `k = 0`, else `start * factor^(k-1)`.
    pub fn value(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.start * self.factor.powi(k as i32 - 1)
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.max_points).map(|k| self.value(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.start > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda start must be positive, got {}", self.start)));
        }
        if !(self.factor.is_finite() && self.factor > 1.0) {
            return Err(Error::InvalidConfig(format!("lambda factor must exceed 1, got {}", self.factor)));
        }
        if self.max_points == 0 {
            return Err(Error::InvalidConfig("lambda max_points must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub p_a: f64,
    /// Linear SNR, `P_a / sigma^2`.
    pub snr: f64,
    /// Explicit `sigma^2`; takes precedence over `snr` when set.
    pub noise_variance: Option<f64>,
    pub harvester: Harvester,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub train_set_size: usize,
    pub learning_rate: f64,
    pub restarts: usize,
    pub schedule: LambdaSchedule,
    pub ser_max: f64,
    pub seed: u64,
    /// Samples behind each record's SER.
    pub eval_samples: usize,
    pub eval_shards: usize,
    /// Fixed validation set behind `final_cost`.
    pub validation_samples: usize,
}

impl TrainConfig {
    /// Desk-scale defaults for `messages` messages.
    pub fn desk(messages: usize) -> Self {
        Self {
            architecture: Architecture::default_for(messages),
            p_a: 1e-3,
            snr: 50.0,
            noise_variance: None,
            harvester: Harvester::ModelA(ModelAParams::default()),
            epochs: 1000,
            minibatch_size: 100 * messages,
            train_set_size: 10_000 * messages,
            learning_rate: 0.01,
            restarts: 10,
            schedule: LambdaSchedule::default(),
            ser_max: 0.95,
            seed: 1,
            eval_samples: 100_000 * messages,
            eval_shards: rayon::current_num_threads(),
            validation_samples: 1000 * messages,
        }
    }

    /// Full-scale profile: 5000 epochs, 100 restarts, larger sets.
    pub fn paper_scale(messages: usize) -> Self {
        Self {
            epochs: 5000,
            minibatch_size: 1000 * messages,
            train_set_size: 100_000 * messages,
            restarts: 100,
            eval_samples: 5_000_000 * messages,
            ..Self::desk(messages)
        }
    }

    pub fn messages(&self) -> usize {
        self.architecture.messages
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train_set_size / self.minibatch_size
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        match self.noise_variance {
            Some(v) => ChannelParams::new(v),
            None => ChannelParams::from_snr(self.p_a, self.snr),
        }
    }

    /// `seed, seed + 1, ..., seed + restarts - 1`.
    pub fn restart_seeds(&self) -> Vec<u64> {
        (0..self.restarts as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.harvester.validate()?;
        self.schedule.validate()?;
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.p_a, "P_a")?;
        positive(self.snr, "snr")?;
        self.channel()?;
        positive(self.learning_rate, "learning_rate")?;
        for (v, name) in [
            (self.epochs, "epochs"),
            (self.minibatch_size, "minibatch_size"),
            (self.train_set_size, "train_set_size"),
            (self.restarts, "restarts"),
            (self.eval_shards, "eval_shards"),
            (self.validation_samples, "validation_samples"),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.minibatch_size > self.train_set_size {
            return Err(Error::InvalidConfig(format!(
                "minibatch_size ({}) exceeds train_set_size ({})",
                self.minibatch_size, self.train_set_size
            )));
        }
        if !(self.ser_max > 0.0 && self.ser_max < 1.0) {
            return Err(Error::InvalidConfig(format!("ser_max must lie in (0, 1), got {}", self.ser_max)));
        }
        if self.eval_samples < crate::evaluator::MIN_SER_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "eval_samples must be at least {}",
                crate::evaluator::MIN_SER_SAMPLES
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub lambda: f64,
    pub seed: u64,
    pub final_cost: f64,
    /// Validation cross-entropy (nats) of the final model.
    pub cross_entropy: f64,
    pub ser: f64,
    pub ser_stderr: f64,
    pub p_del: f64,
    pub constellation: Constellation,
    pub params: NetworkParams,
    /// Set on the sweep record whose SER exceeded `ser_max`.
    pub terminal: bool,
}

/// A trained model before SER evaluation.
#[derive(Debug, Clone)]
struct Trained {
    seed: u64,
    params: NetworkParams,
    constellation: Constellation,
    cross_entropy: f64,
    p_del: f64,
    final_cost: f64,
}

/// Mean cross-entropy on the fixed validation set; shared by every run of a
/// config so `final_cost` is comparable across restarts.
fn validation_cross_entropy(cfg: &TrainConfig, params: &NetworkParams, constellation: &Constellation) -> Result<f64> {
    let m = cfg.messages();
    let batch = Minibatch::sample(
        m,
        cfg.validation_samples,
        &cfg.channel()?,
        &mut RngStream::new(cfg.seed, Purpose::Validation).rng(),
    );
    let ys: Vec<_> = batch
        .messages
        .iter()
        .zip(&batch.noise)
        .map(|(&s, n)| constellation.points[s] + n)
        .collect();
    let probs = decode_batch(&params.decoder, &ys)?;
    let total: f64 = batch
        .messages
        .iter()
        .zip(probs.chunks_exact(m))
        .map(|(&s, row)| cross_entropy_index(s, row))
        .sum();
    Ok(total / batch.len() as f64)
}

fn train(
    cfg: &TrainConfig,
    lambda: f64,
    seed: u64,
    observer: &mut dyn FnMut(&StepReport),
) -> Result<Trained> {
    cfg.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
    }
    let m = cfg.messages();
    let channel = cfg.channel()?;
    let obj = Objective { p_a: cfg.p_a, harvester: cfg.harvester, lambda };
    let mut params = init_params(&cfg.architecture, seed)?;
    let mut adam = AdamState::new(&params, AdamHyper { learning_rate: cfg.learning_rate, ..AdamHyper::default() });
    let mut tape = GradientTape::zeros_like(&params);
    let mut rng = RngStream::new(seed, Purpose::Training).rng();

    for epoch in 0..cfg.epochs {
        for step in 0..cfg.steps_per_epoch() {
            let batch = Minibatch::sample(m, cfg.minibatch_size, &channel, &mut rng);
            let report = evaluate_with_gradient(&params, &batch, &obj, &mut tape)?;
            observer(&report);
            if !report.cost.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            adam.step(&mut params, &tape)?;
        }
    }

    let constellation = export_constellation(&params.encoder, m, cfg.p_a)?;
    let p_del = cfg.harvester.delivered_power(&constellation.points, &constellation.probabilities)?;
    let cross_entropy = validation_cross_entropy(cfg, &params, &constellation)?;
    let final_cost = total_cost(cross_entropy, p_del, lambda);
    if !final_cost.is_finite() {
        return Err(Error::NonFinite("final cost"));
    }
    Ok(Trained { seed, params, constellation, cross_entropy, p_del, final_cost })
}

fn finish(cfg: &TrainConfig, lambda: f64, t: Trained) -> Result<RunRecord> {
    let report = estimate_ser(
        &t.constellation,
        &NetworkDetector(&t.params.decoder),
        &cfg.channel()?,
        &cfg.harvester,
        cfg.eval_samples,
        &RngStream::new(cfg.seed, Purpose::Evaluation),
        cfg.eval_shards,
    )?;
    Ok(RunRecord {
        lambda,
        seed: t.seed,
        final_cost: t.final_cost,
        cross_entropy: t.cross_entropy,
        ser: report.ser,
        ser_stderr: report.ser_stderr,
        p_del: t.p_del,
        constellation: t.constellation,
        params: t.params,
        terminal: false,
    })
}

/// One cold-start run. Divergence surfaces as [`Error::Diverged`].
pub fn train_run(cfg: &TrainConfig, lambda: f64, seed: u64) -> Result<RunRecord> {
    train_run_observed(cfg, lambda, seed, &mut |_| {})
}

/// As [`train_run`], calling `observer` after every minibatch forward pass.
pub fn train_run_observed(
    cfg: &TrainConfig,
    lambda: f64,
    seed: u64,
    observer: &mut dyn FnMut(&StepReport),
) -> Result<RunRecord> {
    let t = train(cfg, lambda, seed, observer)?;
    finish(cfg, lambda, t)
}

/// Minimum `final_cost`; ties go to the lowest seed.
fn better(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Index of the selected entry among `(final_cost, seed)` pairs; `None`
/// entries are failed runs.
pub fn select_best(candidates: &[Option<(f64, u64)>]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.filter(|(cost, _)| cost.is_finite()).map(|c| (i, c)))
        .min_by(|(_, a), (_, b)| better(*a, *b))
        .map(|(i, _)| i)
}

/// Trains one run per seed in parallel and returns the best record. Failed
/// runs are dropped; if all fail the result is [`Error::AllRunsFailed`].
pub fn multi_restart(cfg: &TrainConfig, lambda: f64, seeds: &[u64]) -> Result<RunRecord> {
    if seeds.is_empty() {
        return Err(Error::Empty("seeds"));
    }
    cfg.validate()?;
    let results: Vec<Result<Trained>> =
        seeds.par_iter().map(|&seed| train(cfg, lambda, seed, &mut |_| {})).collect();
    let keys: Vec<Option<(f64, u64)>> =
        results.iter().map(|r| r.as_ref().ok().map(|t| (t.final_cost, t.seed))).collect();
    let best = select_best(&keys).ok_or(Error::AllRunsFailed(seeds.len()))?;
    let trained = results.into_iter().nth(best).and_then(|r| r.ok()).ok_or(Error::AllRunsFailed(seeds.len()))?;
    finish(cfg, lambda, trained)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    SerExceeded,
    MaxPoints,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub records: Vec<RunRecord>,
    pub stop: StopReason,
}

/// Best-of-restarts records for `lambda = 0, start, start*factor, ...`,
/// stopping after the first record with `ser > ser_max` or at `max_points`.
pub fn lambda_sweep(cfg: &TrainConfig) -> Result<Sweep> {
    lambda_sweep_observed(cfg, &mut |_| {})
}

/// As [`lambda_sweep`], reporting each record as it completes.
pub fn lambda_sweep_observed(cfg: &TrainConfig, on_record: &mut dyn FnMut(&RunRecord)) -> Result<Sweep> {
    cfg.validate()?;
    let seeds = cfg.restart_seeds();
    let mut records = Vec::new();
    for lambda in cfg.schedule.values() {
        let mut rec = multi_restart(cfg, lambda, &seeds)?;
        let stop = rec.ser > cfg.ser_max;
        rec.terminal = stop;
        on_record(&rec);
        records.push(rec);
        if stop {
            return Ok(Sweep { records, stop: StopReason::SerExceeded });
        }
    }
    Ok(Sweep { records, stop: StopReason::MaxPoints })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension("spearman inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Empty("spearman needs two points"));
    }
    let rx = ranks(x)?;
    let ry = ranks(y)?;
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("rank input"));
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(messages: usize) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            minibatch_size: 8 * messages,
            train_set_size: 40 * messages,
            restarts: 2,
            eval_samples: 2000,
            eval_shards: 2,
            validation_samples: 200,
            ..TrainConfig::desk(messages)
        }
    }

    #[test]
    fn schedule_values() {
        let s = LambdaSchedule { start: 1e-5, factor: 2.0, max_points: 4 };
        assert_eq!(s.values(), vec![0.0, 1e-5, 2e-5, 4e-5]);
        assert!(LambdaSchedule { factor: 1.0, ..s }.validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::desk(16).validate().is_ok());
        assert!(TrainConfig::paper_scale(32).validate().is_ok());
        let mut c = TrainConfig::desk(4);
        c.minibatch_size = c.train_set_size + 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(4);
        c.ser_max = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(4);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(4);
        c.noise_variance = Some(-1.0);
        assert!(c.validate().is_err());
        c.noise_variance = Some(0.0);
        assert_eq!(c.channel().unwrap().noise_variance(), 0.0);
    }

    #[test]
    fn argmin_selection() {
        let c = [Some((2.0, 1)), Some((1.5, 2)), Some((3.0, 3))];
        assert_eq!(select_best(&c), Some(1));
        let tie = [Some((1.0, 9)), Some((1.0, 4)), None];
        assert_eq!(select_best(&tie), Some(1));
        assert_eq!(select_best(&[None, Some((f64::NAN, 1))]), None);
    }

    #[test]
    fn single_seed_equals_train_run() {
        let cfg = tiny(4);
        let a = multi_restart(&cfg, 1e-4, &[7]).unwrap();
        let b = train_run(&cfg, 1e-4, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn best_of_superset_is_no_worse() {
        let cfg = tiny(4);
        let one = multi_restart(&cfg, 0.0, &[3]).unwrap();
        let many = multi_restart(&cfg, 0.0, &[3, 4, 5]).unwrap();
        assert!(many.final_cost <= one.final_cost);
    }

    #[test]
    fn sweep_stops_at_max_points() {
        let mut cfg = tiny(4);
        cfg.schedule.max_points = 3;
        cfg.restarts = 1;
        let s = lambda_sweep(&cfg).unwrap();
        assert!(s.records.len() <= 3);
        assert_eq!(s.records[0].lambda, 0.0);
        assert!(s.records.iter().filter(|r| r.ser > cfg.ser_max).count() <= 1);
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // scipy.stats.spearmanr([1,2,3,4,5],[2,1,4,3,5]) = 0.8
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs() < 1e-12);
        // ties: spearmanr([1,2,2,3],[1,2,3,4]) = 0.9486832980505138
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
