use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use crate::config::load_config;
use crate::experiment::{run_experiment, Plan};
use crate::output::write_experiment;
use codesleep_core::oracle::{canonical_scenario, SCENARIOS};
use codesleep_core::{PolicyKind, ScenarioConfig};

/// Run overhear/sleep experiments on a simulated coding network.
#[derive(Debug, Parser)]
#[command(name = "codesleep", version)]
pub struct Args {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in scenario; with --config it is the base the file overrides.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    /// learned, always-overhear, always-sleep or random:P.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<PolicyKind>,
    /// Flow counts to sweep.
    #[arg(long, value_delimiter = ',', value_name = "N[,N...]")]
    pub flows: Vec<usize>,
    /// Repetitions per flow count.
    #[arg(long, value_name = "K")]
    pub reps: Option<usize>,
    /// Master seed.
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Write per-slot traces.
    #[arg(long)]
    pub trace: bool,
    /// Write final Q-tables.
    #[arg(long)]
    pub dump_qtable: bool,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl Args {
    /// Scenario after file, base and command-line overrides.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let base = match &self.scenario {
            Some(name) => Some(canonical_scenario(name).with_context(|| {
                format!("unknown scenario `{name}` (known: {})", SCENARIOS.join(", "))
            })?),
            None => None,
        };
        let mut config = match &self.config {
            Some(path) => load_config(path, base.as_ref())?,
            None => base.unwrap_or_default(),
        };
        if let Some(p) = self.policy {
            config.policy = p;
        }
        if let Some(k) = self.reps {
            config.repetitions = k;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.output.trace |= self.trace;
        config.output.dump_qtable |= self.dump_qtable;
        if let Some(out) = &self.out {
            config.output.dir = Some(out.display().to_string());
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn run(args: &Args) -> Result<()> {
    let config = args.resolve()?;
    let Some(dir) = config.output.dir.clone() else {
        bail!("no output directory; pass --out or set output.dir");
    };
    let plan = Plan {
        flows: args.flows.clone(),
        trace: config.output.trace,
        dump_qtable: config.output.dump_qtable,
    };
    let experiment = run_experiment(&config, &plan)?;
    let written = write_experiment(PathBuf::from(&dir).as_path(), &config, &experiment)?;
    for row in &experiment.aggregates {
        info!(
            "flows {}: gain {:?} energy/bit {:?} delay {:?}",
            row.flows, row.coding_gain_mean, row.energy_per_bit_mean, row.delay_mean_slots
        );
    }
    info!("wrote {} files to {dir}", written.len());
    Ok(())
}
