//! Configuration: a TOML file of flat dotted keys, overridden by flags.
//!
//! Precedence is flag > file > default. Every key is listed in [`SCHEMA`];
//! unknown keys and out-of-domain values are rejected with the key named.
//! `harvester.model` and the parameters of the chosen model have no default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use swipt_core::harvester::{Harvester, ModelAParams, ModelBParams};
use swipt_core::nn::Architecture;
use swipt_core::trainer::{LambdaSchedule, TrainConfig};
use toml::Value;

use crate::error::CliError;

pub const OUTPUT_ROOT_ENV: &str = "SWIPT_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Finite float, `> 0`.
    Positive,
    /// Finite float, `>= 0`.
    NonNegative,
    /// Finite float, strictly inside `(0, 1)`.
    OpenUnit,
    /// Finite float, `> 1`.
    AboveOne,
    /// Integer `>= min`.
    Count { min: i64 },
    /// Integer in `[min, max]`.
    Bounded { min: i64, max: i64 },
    /// Non-empty array of integers `>= 1`.
    Widths,
    /// `"A"` or `"B"`.
    Model,
    /// Non-empty string without path separators.
    Name,
    Path,
    Bool,
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub doc: &'static str,
}

const fn spec(key: &'static str, kind: Kind, doc: &'static str) -> KeySpec {
    KeySpec { key, kind, doc }
}

pub const SCHEMA: &[KeySpec] = &[
    spec("profile", Kind::Name, "run group name; outputs go to <output_root>/<profile>/"),
    spec("output_root", Kind::Path, "output directory root (default: $SWIPT_OUTPUT_ROOT, else ./runs)"),
    spec("messages", Kind::Count { min: 2 }, "number of messages M (default 16)"),
    spec("p_a", Kind::Positive, "average transmit power P_a (default 0.001)"),
    spec("snr", Kind::Positive, "linear SNR P_a / sigma^2 (default 50)"),
    spec("noise_variance", Kind::NonNegative, "explicit sigma^2, overrides snr (default: P_a / snr)"),
    spec("seed", Kind::Count { min: 0 }, "base seed; restart i uses seed + i (default 1)"),
    spec("harvester.model", Kind::Model, "energy harvester model, A or B (required)"),
    spec("harvester.alpha", Kind::NonNegative, "Model A fourth-moment coefficient (required for A)"),
    spec("harvester.beta", Kind::NonNegative, "Model A second-moment coefficient (required for A)"),
    spec("harvester.gamma", Kind::NonNegative, "Model A offset (required for A)"),
    spec("harvester.ls", Kind::Positive, "Model B saturation level L_s (required for B)"),
    spec("harvester.a", Kind::Positive, "Model B sigmoid steepness (required for B)"),
    spec("harvester.b", Kind::Positive, "Model B sigmoid midpoint (required for B)"),
    spec("arch.encoder_hidden", Kind::Widths, "encoder hidden widths (default [2M])"),
    spec("arch.decoder_hidden", Kind::Widths, "decoder hidden widths (default [2M])"),
    spec("train.epochs", Kind::Count { min: 1 }, "epochs per run (default 1000)"),
    spec("train.minibatch_size", Kind::Count { min: 1 }, "minibatch size (default 100 M)"),
    spec("train.train_set_size", Kind::Count { min: 1 }, "samples per epoch (default 10^4 M)"),
    spec("train.learning_rate", Kind::Positive, "Adam learning rate (default 0.01)"),
    spec("train.restarts", Kind::Count { min: 1 }, "restarts per lambda point (default 10)"),
    spec("train.lambda", Kind::NonNegative, "lambda for `train` (default 0)"),
    spec("sweep.start", Kind::Positive, "first nonzero lambda (default 1e-5)"),
    spec("sweep.factor", Kind::AboveOne, "geometric lambda factor (default 2)"),
    spec("sweep.max_points", Kind::Count { min: 1 }, "lambda points including 0 (default 16)"),
    spec("sweep.ser_max", Kind::OpenUnit, "sweep stops after SER exceeds this (default 0.95)"),
    spec("eval.samples", Kind::Count { min: 1000 }, "Monte-Carlo SER samples (default 10^5 M)"),
    spec("eval.shards", Kind::Count { min: 1 }, "SER worker shards (default: thread count)"),
    spec("eval.validation_samples", Kind::Count { min: 1 }, "validation set behind final_cost (default 1000 M)"),
    spec("plot.size", Kind::Bounded { min: 100, max: 4000 }, "SVG width and height in px (default 480)"),
    spec("plot.labels", Kind::Bool, "label markers with message index (default true)"),
];

/// Keys set by `--paper-scale`, with their values for `M` messages.
pub fn paper_scale_overrides(messages: usize) -> Vec<(&'static str, Value)> {
    let p = TrainConfig::paper_scale(messages);
    vec![
        ("train.epochs", Value::Integer(p.epochs as i64)),
        ("train.minibatch_size", Value::Integer(p.minibatch_size as i64)),
        ("train.train_set_size", Value::Integer(p.train_set_size as i64)),
        ("train.restarts", Value::Integer(p.restarts as i64)),
        ("eval.samples", Value::Integer(p.eval_samples as i64)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub size: u32,
    pub labels: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { size: 480, labels: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    /// Lambda used by `train`.
    pub lambda: f64,
    pub profile: String,
    pub output_root: PathBuf,
    pub plot: PlotOptions,
}

impl Config {
    pub fn profile_dir(&self) -> PathBuf {
        self.output_root.join(&self.profile)
    }
}

/// Flattened dotted key -> value.
pub type Flat = BTreeMap<String, Value>;

/// Flattens nested tables into dotted keys.
pub fn flatten(table: &toml::Table) -> Flat {
    fn walk(prefix: &str, table: &toml::Table, out: &mut Flat) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = Flat::new();
    walk("", table, &mut out);
    out
}

pub fn parse_file_text(text: &str) -> Result<Flat, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("{e}")))?;
    Ok(flatten(&table))
}

pub fn read_file(path: &Path) -> Result<Flat, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_file_text(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses `key=value`; the value is read as a TOML value, falling back to a
/// bare string.
pub fn parse_assignment(text: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{text}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn schema_entry(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Checks one value against its schema kind.
pub fn check_value(key: &str, value: &Value) -> Result<(), CliError> {
    let spec = schema_entry(key).ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
    let bad = |what: &str| Err(CliError::Config(format!("key `{key}`: expected {what}, got {value}")));
    match spec.kind {
        Kind::Positive | Kind::NonNegative | Kind::OpenUnit | Kind::AboveOne => {
            let Some(f) = as_float(value) else { return bad("a number") };
            let ok = f.is_finite()
                && match spec.kind {
                    Kind::Positive => f > 0.0,
                    Kind::NonNegative => f >= 0.0,
                    Kind::OpenUnit => f > 0.0 && f < 1.0,
                    _ => f > 1.0,
                };
            if !ok {
                return bad(match spec.kind {
                    Kind::Positive => "a finite number > 0",
                    Kind::NonNegative => "a finite number >= 0",
                    Kind::OpenUnit => "a number strictly between 0 and 1",
                    _ => "a finite number > 1",
                });
            }
        }
        Kind::Count { min } => match value {
            Value::Integer(i) if *i >= min => {}
            _ => return bad(&format!("an integer >= {min}")),
        },
        Kind::Bounded { min, max } => match value {
            Value::Integer(i) if (min..=max).contains(i) => {}
            _ => return bad(&format!("an integer in [{min}, {max}]")),
        },
        Kind::Widths => match value {
            Value::Array(items)
                if !items.is_empty() && items.iter().all(|v| matches!(v, Value::Integer(i) if *i >= 1)) => {}
            _ => return bad("a non-empty array of positive integers"),
        },
        Kind::Model => match value {
            Value::String(s) if s == "A" || s == "B" => {}
            _ => return bad("\"A\" or \"B\""),
        },
        Kind::Name => match value {
            Value::String(s) if !s.is_empty() && !s.contains(['/', '\\']) && s != "." && s != ".." => {}
            _ => return bad("a non-empty name without path separators"),
        },
        Kind::Path => match value {
            Value::String(s) if !s.is_empty() => {}
            _ => return bad("a non-empty path string"),
        },
        Kind::Bool => match value {
            Value::Boolean(_) => {}
            _ => return bad("true or false"),
        },
    }
    Ok(())
}

/// Layered inputs to [`resolve`].
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub file: Flat,
    /// Flag overrides, applied in order after the file.
    pub flags: Vec<(String, Value)>,
    pub paper_scale: bool,
    /// Value of [`OUTPUT_ROOT_ENV`], if set.
    pub env_output_root: Option<String>,
}

/// Merges the layers, validates every key, and builds the configuration.
pub fn resolve(sources: &Sources) -> Result<Config, CliError> {
    let mut merged = sources.file.clone();
    for (k, v) in &sources.flags {
        merged.insert(k.clone(), v.clone());
    }
    for (k, v) in &merged {
        check_value(k, v)?;
    }

    let messages = merged.get("messages").and_then(Value::as_integer).map_or(16, |m| m as usize);
    if sources.paper_scale {
        for (k, v) in paper_scale_overrides(messages) {
            if !sources.flags.iter().any(|(f, _)| f == k) {
                merged.insert(k.to_string(), v);
            }
        }
    }

    let float = |k: &str| merged.get(k).and_then(as_float);
    let int = |k: &str| merged.get(k).and_then(Value::as_integer);
    let required = |k: &str| {
        float(k).ok_or_else(|| CliError::Config(format!("missing required key `{k}`")))
    };

    let model = merged
        .get("harvester.model")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Config("missing required key `harvester.model`".into()))?;
    let (own, other): (&[&str], &[&str]) = if model == "A" {
        (&["harvester.alpha", "harvester.beta", "harvester.gamma"], &["harvester.ls", "harvester.a", "harvester.b"])
    } else {
        (&["harvester.ls", "harvester.a", "harvester.b"], &["harvester.alpha", "harvester.beta", "harvester.gamma"])
    };
    if let Some(k) = other.iter().find(|k| merged.contains_key(**k)) {
        return Err(CliError::Config(format!("key `{k}` does not apply to harvester.model = \"{model}\"")));
    }
    let harvester = if model == "A" {
        Harvester::ModelA(ModelAParams { alpha: required(own[0])?, beta: required(own[1])?, gamma: required(own[2])? })
    } else {
        Harvester::ModelB(ModelBParams { ls: required(own[0])?, a: required(own[1])?, b: required(own[2])? })
    };

    let mut t = TrainConfig::desk(messages);
    t.harvester = harvester;
    let widths = |k: &str, default: &Vec<usize>| {
        merged.get(k).and_then(Value::as_array).map_or(default.clone(), |a| {
            a.iter().filter_map(Value::as_integer).map(|i| i as usize).collect()
        })
    };
    let arch = Architecture::default_for(messages);
    t.architecture = Architecture {
        messages,
        encoder_hidden: widths("arch.encoder_hidden", &arch.encoder_hidden),
        decoder_hidden: widths("arch.decoder_hidden", &arch.decoder_hidden),
    };
    t.p_a = float("p_a").unwrap_or(t.p_a);
    t.snr = float("snr").unwrap_or(t.snr);
    t.noise_variance = float("noise_variance");
    t.seed = int("seed").map_or(t.seed, |s| s as u64);
    t.epochs = int("train.epochs").map_or(t.epochs, |v| v as usize);
    t.minibatch_size = int("train.minibatch_size").map_or(t.minibatch_size, |v| v as usize);
    t.train_set_size = int("train.train_set_size").map_or(t.train_set_size, |v| v as usize);
    t.learning_rate = float("train.learning_rate").unwrap_or(t.learning_rate);
    t.restarts = int("train.restarts").map_or(t.restarts, |v| v as usize);
    t.schedule = LambdaSchedule {
        start: float("sweep.start").unwrap_or(t.schedule.start),
        factor: float("sweep.factor").unwrap_or(t.schedule.factor),
        max_points: int("sweep.max_points").map_or(t.schedule.max_points, |v| v as usize),
    };
    t.ser_max = float("sweep.ser_max").unwrap_or(t.ser_max);
    t.eval_samples = int("eval.samples").map_or(t.eval_samples, |v| v as usize);
    t.eval_shards = int("eval.shards").map_or(t.eval_shards, |v| v as usize);
    t.validation_samples = int("eval.validation_samples").map_or(t.validation_samples, |v| v as usize);

    if t.minibatch_size > t.train_set_size {
        return Err(CliError::Config(format!(
            "key `train.minibatch_size` ({}) exceeds `train.train_set_size` ({})",
            t.minibatch_size, t.train_set_size
        )));
    }
    t.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let output_root = merged
        .get("output_root")
        .and_then(Value::as_str)
        .map(str::to_string)
        .or_else(|| sources.env_output_root.clone().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_OUTPUT_ROOT.to_string());

    Ok(Config {
        train: t,
        lambda: float("train.lambda").unwrap_or(0.0),
        profile: merged.get("profile").and_then(Value::as_str).unwrap_or("default").to_string(),
        output_root: PathBuf::from(output_root),
        plot: PlotOptions {
            size: int("plot.size").map_or(480, |v| v as u32),
            labels: merged.get("plot.labels").and_then(Value::as_bool).unwrap_or(true),
        },
    })
}

/// Renders the schema as a table for `--help`-style output.
pub fn schema_help() -> String {
    let width = SCHEMA.iter().map(|s| s.key.len()).max().unwrap_or(0);
    SCHEMA.iter().map(|s| format!("  {:width$}  {}\n", s.key, s.doc)).collect()
}
