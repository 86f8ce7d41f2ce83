//! CSV and JSON artifacts.
//!
//! Schema version 1 fixes the CSV columns below; every file starts with its
//! header even when there are no rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use super::run::{LocalizeRow, SweepRow, TrialResult};
use super::Scheme;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const LOCALIZE_COLUMNS: [&str; 10] = [
    "seed", "snr_db", "user_id", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "error_m",
];
pub const SWEEP_COLUMNS: [&str; 7] = [
    "seed",
    "trial",
    "sweep_axis",
    "sweep_value",
    "scheme",
    "weighted_rate",
    "sum_rate",
];
pub const USER_RATE_COLUMNS: [&str; 3] = ["user_id", "rate", "weight"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRateRow {
    pub user_id: usize,
    pub rate: f64,
    pub weight: f64,
}

/// Writes `rows` after a fixed header.
pub fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// SHA-256 of the config's canonical JSON form, in hex.
pub fn config_hash(cfg: &Config) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub config_sha256: String,
    pub config: Config,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, cfg: &Config) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            version: concat!("polarsim-", env!("CARGO_PKG_VERSION")).to_string(),
            config_sha256: config_hash(cfg)?,
            config: cfg.clone(),
        })
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizePoint {
    pub snr_db: f64,
    pub samples: usize,
    pub median_error_m: f64,
    pub mean_error_m: f64,
    pub rmse_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeSummary {
    pub points: Vec<LocalizePoint>,
}

/// Per-SNR error statistics, in the order the SNR values first appear.
pub fn summarize_localization(rows: &[LocalizeRow]) -> LocalizeSummary {
    let mut order: Vec<f64> = Vec::new();
    for r in rows {
        if !order.contains(&r.snr_db) {
            order.push(r.snr_db);
        }
    }
    let points = order
        .into_iter()
        .map(|snr| {
            let e: Vec<f64> = rows.iter().filter(|r| r.snr_db == snr).map(|r| r.error_m).collect();
            let (mean, _) = mean_std(&e);
            let rmse = (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
            LocalizePoint {
                snr_db: snr,
                samples: e.len(),
                median_error_m: median(e),
                mean_error_m: mean,
                rmse_m: rmse,
            }
        })
        .collect();
    LocalizeSummary { points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub mean_weighted_rate: f64,
    pub std_weighted_rate: f64,
    pub mean_sum_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep_axis: String,
    pub points: Vec<SweepPoint>,
}

pub fn summarize_sweep(axis: &str, rows: &[SweepRow]) -> SweepSummary {
    let mut groups: Vec<((f64, Scheme), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|g| g.0 == (r.sweep_value, r.scheme)) {
            Some(g) => g.1.push(r),
            None => groups.push(((r.sweep_value, r.scheme), vec![r])),
        }
    }
    let points = groups
        .into_iter()
        .map(|((v, scheme), g)| {
            let w: Vec<f64> = g.iter().map(|r| r.weighted_rate).collect();
            let s: Vec<f64> = g.iter().map(|r| r.sum_rate).collect();
            let (mw, sw) = mean_std(&w);
            SweepPoint {
                sweep_value: v,
                scheme,
                trials: g.len(),
                mean_weighted_rate: mw,
                std_weighted_rate: sw,
                mean_sum_rate: mean_std(&s).0,
            }
        })
        .collect();
    SweepSummary {
        sweep_axis: axis.to_string(),
        points,
    }
}

/// Per-user rates of one scheme averaged over coherence intervals.
pub fn user_rate_rows(trial: &TrialResult, scheme: Scheme, weights: &[f64]) -> Vec<UserRateRow> {
    let Some(r) = trial.schemes.iter().find(|r| r.scheme == scheme) else {
        return Vec::new();
    };
    if r.rates.is_empty() {
        return Vec::new();
    }
    let t = r.rates.len() as f64;
    weights
        .iter()
        .enumerate()
        .map(|(k, &w)| UserRateRow {
            user_id: k,
            rate: r.rates.iter().map(|x| x[k]).sum::<f64>() / t,
            weight: w,
        })
        .collect()
}
