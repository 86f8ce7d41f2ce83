//! Scenarios, the two-timescale protocol, reference schemes and result
//! export.
//!
//! Phase I of a location interval senses the users and designs subarray
//! poses; phase II re-solves polarforming and precoders in every channel
//! coherence interval. The [`commands`] functions are what the CLI runs.

pub mod config;
pub mod export;
pub mod run;
pub mod scenario;
pub mod schemes;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{Config, LocationSource, ScenarioConfig, SensingConfig, SweepAxis};
pub use export::{Manifest, SCHEMA_VERSION};
pub use run::{run_localization, run_sweep, run_trial, run_two_timescale, RunResult, TrialResult, TrialStreams};
pub use scenario::{generate_scenario, Scenario};
pub use schemes::Scheme;

pub mod commands {
    //! One function per CLI subcommand. Each writes `results.csv`,
    //! `summary.json` and `manifest.json` into `out`.

    use super::*;
    use export::{
        summarize_localization, summarize_sweep, user_rate_rows, write_csv, write_json, LOCALIZE_COLUMNS,
        SWEEP_COLUMNS, USER_RATE_COLUMNS,
    };

    fn prepare(out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e).in_stage("export"))
    }

    fn finish<S: Serialize>(out: &Path, command: &str, seed: u64, cfg: &Config, summary: &S) -> Result<()> {
        write_json(&out.join("summary.json"), summary).map_err(|e| e.in_stage("export"))?;
        let manifest = Manifest::new(command, seed, cfg).map_err(|e| e.in_stage("export"))?;
        write_json(&out.join("manifest.json"), &manifest).map_err(|e| e.in_stage("export"))
    }

    pub fn localize(cfg: &Config, out: &Path, seed: u64) -> Result<()> {
        prepare(out)?;
        let rows = run_localization(cfg, seed)?;
        write_csv(&out.join("results.csv"), &LOCALIZE_COLUMNS, &rows).map_err(|e| e.in_stage("export"))?;
        finish(out, "localize", seed, cfg, &summarize_localization(&rows))
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct OptimizeSummary {
        pub schema_version: u32,
        pub trial: TrialResult,
    }

    /// One location interval of the proposed design.
    pub fn optimize(cfg: &Config, out: &Path, seed: u64) -> Result<()> {
        prepare(out)?;
        let trial = run_trial(cfg, &[Scheme::TtPpr], seed, 0)?;
        let rows = user_rate_rows(&trial, Scheme::TtPpr, &cfg.scenario.weights());
        write_csv(&out.join("results.csv"), &USER_RATE_COLUMNS, &rows).map_err(|e| e.in_stage("export"))?;
        let summary = OptimizeSummary {
            schema_version: SCHEMA_VERSION,
            trial,
        };
        finish(out, "optimize", seed, cfg, &summary)
    }

    pub fn sweep(cfg: &Config, out: &Path, seed: u64) -> Result<()> {
        prepare(out)?;
        let rows = run_sweep(cfg, seed)?;
        write_csv(&out.join("results.csv"), &SWEEP_COLUMNS, &rows).map_err(|e| e.in_stage("export"))?;
        finish(out, "sweep", seed, cfg, &summarize_sweep(cfg.sweep.axis.name(), &rows))
    }
}
