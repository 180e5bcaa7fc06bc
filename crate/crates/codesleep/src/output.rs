//! Files an experiment leaves behind.
//!
//! ```text
//! <out>/config.toml      resolved scenario
//! <out>/runs.csv         one row per repetition
//! <out>/aggregate.csv    one row per flow count
//! <out>/traces/f<F>-r<R>.txt
//! <out>/qtables/f<F>-r<R>.txt
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::render_config;
use crate::experiment::{Experiment, RunOutput};
use codesleep_core::ScenarioConfig;

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const CONFIG_TOML: &str = "config.toml";

pub fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner()?)
}

fn run_name(run: &RunOutput) -> String {
    format!("f{}-r{}.txt", run.row.flows, run.row.rep)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes everything under `dir` and returns the paths written.
pub fn write_experiment(dir: &Path, config: &ScenarioConfig, experiment: &Experiment) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put(dir.join(CONFIG_TOML), render_config(config)?.as_bytes())?;
    put(dir.join(RUNS_CSV), &to_csv(experiment.rows())?)?;
    put(dir.join(AGGREGATE_CSV), &to_csv(&experiment.aggregates)?)?;
    for run in &experiment.runs {
        if let Some(trace) = &run.trace {
            let sub = dir.join("traces");
            fs::create_dir_all(&sub)?;
            let mut text = Vec::new();
            for event in trace {
                writeln!(text, "{event}")?;
            }
            put(sub.join(run_name(run)), &text)?;
        }
        if let Some(q) = &run.qtables {
            let sub = dir.join("qtables");
            fs::create_dir_all(&sub)?;
            put(sub.join(run_name(run)), q.as_bytes())?;
        }
    }
    Ok(written)
}
