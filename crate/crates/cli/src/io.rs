//! Run artifacts on disk.
//!
//! Floats are written with `{:.16e}`, which round-trips every `f64`, so equal
//! runs produce byte-identical files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use swipt_core::evaluator::EvalReport;
use swipt_core::nn::checkpoint::{read_checkpoint, write_checkpoint};
use swipt_core::nn::NetworkParams;
use swipt_core::trainer::{RunRecord, TrainConfig};
use swipt_core::transceiver::Constellation;

use crate::error::CliError;

pub const CSV_HEADER: [&str; 4] = ["index", "probability", "real", "imag"];
pub const META_FILE: &str = "meta.toml";
pub const CONSTELLATION_FILE: &str = "constellation.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PLOT_FILE: &str = "plot.svg";
pub const SUMMARY_FILE: &str = "sweep.csv";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Creates parent directories, then writes `bytes`.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Directory name for a lambda point, e.g. `0e0`, `1e-5`, `2.5e-3`.
pub fn lambda_dir_name(lambda: f64) -> String {
    format!("{lambda:e}")
}

pub fn run_dir(profile_dir: &Path, lambda: f64) -> PathBuf {
    profile_dir.join(lambda_dir_name(lambda))
}

pub fn render_constellation_csv(c: &Constellation) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for (i, (p, w)) in c.points.iter().zip(&c.probabilities).enumerate() {
        out.push_str(&format!("{i},{w:.16e},{:.16e},{:.16e}\n", p.re, p.im));
    }
    out
}

/// Reads a constellation CSV. Errors name the offending line.
pub fn read_constellation_csv(path: &Path) -> Result<Constellation, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| CliError::Format(format!("{}: line 1: {e}", path.display())))?
        .clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(CliError::Format(format!(
            "{}: line 1: expected header `{}`",
            path.display(),
            CSV_HEADER.join(",")
        )));
    }
    let mut points = Vec::new();
    let mut probabilities = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let fallback_line = row as u64 + 2;
        let record = record.map_err(|e| {
            let line = e.position().map_or(fallback_line, |p| p.line());
            CliError::Format(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map_or(fallback_line, |p| p.line());
        let bad = |what: &str| CliError::Format(format!("{}: line {line}: {what}", path.display()));
        let field = |i: usize| -> Result<f64, CliError> {
            let v: f64 = record[i].trim().parse().map_err(|_| bad(&format!("`{}` is not a number", &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(&format!("`{}` is not finite", &record[i])))
            }
        };
        let index: usize = record[0].trim().parse().map_err(|_| bad("index is not a non-negative integer"))?;
        if index != points.len() {
            return Err(bad(&format!("expected index {}, got {index}", points.len())));
        }
        let prob = field(1)?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(bad("probability outside [0, 1]"));
        }
        probabilities.push(prob);
        points.push(Complex64::new(field(2)?, field(3)?));
    }
    if points.is_empty() {
        return Err(CliError::Format(format!("{}: no constellation rows", path.display())));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CliError::Format(format!("{}: probabilities sum to {total}, not 1", path.display())));
    }
    Ok(Constellation { points, probabilities })
}

pub fn render_meta(record: &RunRecord, cfg: &TrainConfig) -> String {
    let mut t = toml::Table::new();
    let mut put = |k: &str, v: toml::Value| {
        t.insert(k.to_string(), v);
    };
    use toml::Value::{Boolean, Float, Integer, String as Str};
    put("lambda", Float(record.lambda));
    put("seed", Integer(record.seed as i64));
    put("final_cost", Float(record.final_cost));
    put("cross_entropy", Float(record.cross_entropy));
    put("ser", Float(record.ser));
    put("ser_stderr", Float(record.ser_stderr));
    put("p_del", Float(record.p_del));
    put("epochs", Integer(cfg.epochs as i64));
    put("M", Integer(cfg.messages() as i64));
    put("P_a", Float(cfg.p_a));
    put("snr", Float(cfg.snr));
    put("harvester_model", Str(cfg.harvester.name().to_string()));
    put("terminal", Boolean(record.terminal));
    t.to_string()
}

/// Writes meta, constellation and checkpoint for one record; returns the
/// run directory.
pub fn write_run(profile_dir: &Path, record: &RunRecord, cfg: &TrainConfig) -> Result<PathBuf, CliError> {
    let dir = run_dir(profile_dir, record.lambda);
    write_bytes(&dir.join(META_FILE), render_meta(record, cfg).as_bytes())?;
    write_bytes(&dir.join(CONSTELLATION_FILE), render_constellation_csv(&record.constellation).as_bytes())?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &record.params)?;
    Ok(dir)
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    write_bytes(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub const SUMMARY_HEADER: &str = "lambda,seed,ser,ser_stderr,p_del,cross_entropy,final_cost,terminal";

pub fn summary_row(r: &RunRecord) -> String {
    format!(
        "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.lambda, r.seed, r.ser, r.ser_stderr, r.p_del, r.cross_entropy, r.final_cost, r.terminal
    )
}

pub fn render_summary(records: &[RunRecord]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in records {
        out.push_str(&summary_row(r));
        out.push('\n');
    }
    out
}

pub fn render_eval_report(r: &EvalReport) -> String {
    let mut t = toml::Table::new();
    t.insert("ser".into(), toml::Value::Float(r.ser));
    t.insert("ser_stderr".into(), toml::Value::Float(r.ser_stderr));
    t.insert("p_del".into(), toml::Value::Float(r.p_del));
    t.insert("rate_bits".into(), toml::Value::Float(r.rate_bits));
    t.insert("num_samples".into(), toml::Value::Integer(r.num_samples as i64));
    t.to_string()
}
