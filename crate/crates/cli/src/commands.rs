use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use swipt_core::evaluator::{estimate_ser, NetworkDetector};
use swipt_core::gradcheck::{GradCheckSuite, DEFAULT_TOLERANCE};
use swipt_core::harvester::Harvester;
use swipt_core::rng::{Purpose, RngStream};
use swipt_core::trainer::{lambda_sweep_observed, multi_restart, RunRecord, StopReason};
use swipt_core::transceiver::export_constellation;
use toml::Value;

use crate::config::{self, Config, PlotOptions, Sources, OUTPUT_ROOT_ENV};
use crate::error::CliError;
use crate::io;
use crate::plot::render_svg;

#[derive(Debug, Parser)]
#[command(name = "swipt", version, about = "Learned modulation for joint information and power transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Best-of-restarts training at one lambda.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Lambda weight on the inverse delivered power.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Lambda sweep from 0 until SER exceeds sweep.ser_max or sweep.max_points.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte-Carlo SER and delivered power of a saved model.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// SVG scatter plot of a constellation CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Reference circle power; defaults to the CSV's mean power.
        #[arg(long)]
        p_a: Option<f64>,
        #[arg(long, default_value_t = 480, value_parser = clap::value_parser!(u32).range(100..=4000))]
        size: u32,
        #[arg(long)]
        no_labels: bool,
    },
    /// Finite-difference check of the end-to-end gradient, both harvester models.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 24)]
        cases: usize,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Print the configuration key schema.
    Schema,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full-scale constants: 5000 epochs, 100 restarts, larger sets.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub output_root: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<String>,
}

impl CommonArgs {
    fn sources(&self, extra: Vec<(String, Value)>) -> Result<Sources, CliError> {
        let file = match &self.config {
            Some(path) => config::read_file(path)?,
            None => config::Flat::new(),
        };
        let mut flags = Vec::new();
        for s in &self.set {
            flags.push(config::parse_assignment(s)?);
        }
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| CliError::Config("key `seed`: too large".into()))?;
            flags.push(("seed".into(), Value::Integer(seed)));
        }
        if let Some(root) = &self.output_root {
            flags.push(("output_root".into(), Value::String(root.display().to_string())));
        }
        if let Some(profile) = &self.profile {
            flags.push(("profile".into(), Value::String(profile.clone())));
        }
        flags.extend(extra);
        Ok(Sources {
            file,
            flags,
            paper_scale: self.paper_scale,
            env_output_root: std::env::var(OUTPUT_ROOT_ENV).ok(),
        })
    }

    pub fn resolve(&self, extra: Vec<(String, Value)>) -> Result<Config, CliError> {
        config::resolve(&self.sources(extra)?)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, lambda } => {
            let extra = lambda.map(|l| vec![("train.lambda".to_string(), Value::Float(l))]).unwrap_or_default();
            cmd_train(&common.resolve(extra)?, out).map(|_| ())
        }
        Command::Sweep { common } => cmd_sweep(&common.resolve(vec![])?, out).map(|_| ()),
        Command::Eval { common, checkpoint, output } => {
            cmd_eval(&common.resolve(vec![])?, &checkpoint, output.as_deref(), out)
        }
        Command::Plot { csv, output, p_a, size, no_labels } => {
            cmd_plot(&csv, &output, p_a, &PlotOptions { size, labels: !no_labels })
        }
        Command::Gradcheck { common, cases, corrupt_gradient } => {
            cmd_gradcheck(&common.resolve(vec![])?, cases, corrupt_gradient, out)
        }
        Command::Schema => {
            write!(out, "{}", config::schema_help())?;
            Ok(())
        }
    }
}

fn write_artifacts(cfg: &Config, record: &RunRecord) -> Result<PathBuf, CliError> {
    let dir = io::write_run(&cfg.profile_dir(), record, &cfg.train)?;
    let svg = render_svg(&record.constellation, cfg.train.p_a, &cfg.plot);
    io::write_bytes(&dir.join(io::PLOT_FILE), svg.as_bytes())?;
    Ok(dir)
}

fn describe(record: &RunRecord, dir: &Path) -> String {
    format!(
        "lambda={:e} seed={} ser={:.6} p_del={:.6e} cross_entropy={:.6} final_cost={:.6e} terminal={} dir={}",
        record.lambda,
        record.seed,
        record.ser,
        record.p_del,
        record.cross_entropy,
        record.final_cost,
        record.terminal,
        dir.display()
    )
}

/// Trains at `cfg.lambda` over `cfg.train.restarts` seeds and writes the
/// selected run.
pub fn cmd_train(cfg: &Config, out: &mut dyn Write) -> Result<RunRecord, CliError> {
    let record = multi_restart(&cfg.train, cfg.lambda, &cfg.train.restart_seeds())?;
    let dir = write_artifacts(cfg, &record)?;
    writeln!(out, "{}", describe(&record, &dir))?;
    Ok(record)
}

/// Runs the sweep, writing each point as it completes and the summary table
/// after every point.
pub fn cmd_sweep(cfg: &Config, out: &mut dyn Write) -> Result<Vec<RunRecord>, CliError> {
    let summary = cfg.profile_dir().join(io::SUMMARY_FILE);
    let mut done: Vec<RunRecord> = Vec::new();
    let mut failure: Option<CliError> = None;
    let sweep = lambda_sweep_observed(&cfg.train, &mut |record| {
        if failure.is_some() {
            return;
        }
        done.push(record.clone());
        let step = write_artifacts(cfg, record)
            .and_then(|dir| io::write_bytes(&summary, io::render_summary(&done).as_bytes()).map(|_| dir))
            .and_then(|dir| writeln!(out, "{}", describe(record, &dir)).map_err(CliError::from));
        if let Err(e) = step {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let reason = match sweep.stop {
        StopReason::SerExceeded => format!("SER exceeded {}", cfg.train.ser_max),
        StopReason::MaxPoints => format!("reached {} lambda points", cfg.train.schedule.max_points),
    };
    writeln!(out, "sweep finished: {reason}; summary {}", summary.display())?;
    Ok(sweep.records)
}

pub fn cmd_eval(cfg: &Config, checkpoint: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let params = io::load_checkpoint(checkpoint)?;
    let found = params.architecture();
    let want = &cfg.train.architecture;
    if &found != want {
        return Err(CliError::Format(format!(
            "checkpoint {} has encoder {:?} / decoder {:?}, config expects encoder {:?} / decoder {:?}",
            checkpoint.display(),
            found.encoder_dims(),
            found.decoder_dims(),
            want.encoder_dims(),
            want.decoder_dims()
        )));
    }
    let t = &cfg.train;
    let constellation = export_constellation(&params.encoder, t.messages(), t.p_a)?;
    let report = estimate_ser(
        &constellation,
        &NetworkDetector(&params.decoder),
        &t.channel()?,
        &t.harvester,
        t.eval_samples,
        &RngStream::new(t.seed, Purpose::Evaluation),
        t.eval_shards,
    )?;
    let text = io::render_eval_report(&report);
    match output {
        Some(path) => io::write_bytes(path, text.as_bytes())?,
        None => write!(out, "{text}")?,
    }
    Ok(())
}

pub fn cmd_plot(csv: &Path, output: &Path, p_a: Option<f64>, opts: &PlotOptions) -> Result<(), CliError> {
    let c = io::read_constellation_csv(csv)?;
    let p_a = match p_a {
        Some(v) if v.is_finite() && v >= 0.0 => v,
        Some(v) => return Err(CliError::Config(format!("--p-a must be a finite non-negative number, got {v}"))),
        None => c.points.iter().zip(&c.probabilities).map(|(p, w)| w * p.norm_sqr()).sum(),
    };
    io::write_bytes(output, render_svg(&c, p_a, opts).as_bytes())
}

pub fn cmd_gradcheck(cfg: &Config, cases: usize, corrupt: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let t = &cfg.train;
    let mut suite = GradCheckSuite::new(t.architecture.clone(), t.p_a, t.snr, t.seed);
    suite.cases = cases.max(1);
    match t.harvester {
        Harvester::ModelA(p) => suite.model_a = p,
        Harvester::ModelB(p) => suite.model_b = p,
    }
    let reports = suite.run(corrupt)?;
    let mut worst: f64 = 0.0;
    for r in &reports {
        writeln!(
            out,
            "{}: max_rel_error={:.3e} checked={} skipped_kinks={}",
            r.label, r.max_rel_error, r.checked, r.skipped_kinks
        )?;
        for b in &r.blocks {
            writeln!(
                out,
                "    {:<18} worst={:.3e} at [{}] analytic={:.6e} numeric={:.6e}",
                b.name, b.max_rel_error, b.index, b.analytic, b.numeric
            )?;
        }
        worst = if r.max_rel_error.is_nan() { f64::NAN } else { worst.max(r.max_rel_error) };
    }
    let pass = worst < DEFAULT_TOLERANCE;
    writeln!(
        out,
        "max relative error {worst:.3e} over {} cases (tolerance {DEFAULT_TOLERANCE:e}): {}",
        reports.len(),
        if pass { "PASS" } else { "FAIL" }
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::GradCheck(worst))
    }
}
