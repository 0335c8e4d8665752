//! Run configuration: JSON file, command-line overrides and environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qlmpc::{Mode, Scenario, Variant};
use serde::Deserialize;

pub const SEED_ENV: &str = "QLMPC_SEED";
pub const DEFAULT_REPEAT: usize = 50;

/// Either a builtin scenario name or a full inline scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Name(String),
    Inline(Box<Scenario>),
}

/// Contents of a `--config` file. Every field is optional; command-line
/// flags take precedence.
///
/// ```json
/// { "scenario": "adip", "out": "results", "repeat": 10, "seed": 7 }
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioRef>,
    pub out: Option<PathBuf>,
    pub repeat: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))
    }
}

/// Flags shared by both subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub variant: Option<Variant>,
    pub mode: Option<Mode>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub repeat: Option<usize>,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub out: PathBuf,
    pub repeat: usize,
    pub seed: u64,
}

pub fn resolve(flags: &Overrides) -> anyhow::Result<Resolved> {
    let config = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut scenario = match (&flags.scenario, config.scenario) {
        (Some(name), _) => Scenario::builtin(name)?,
        (None, Some(ScenarioRef::Name(name))) => Scenario::builtin(&name)?,
        (None, Some(ScenarioRef::Inline(scn))) => *scn,
        (None, None) => bail!("no scenario given: pass --scenario or a --config with a `scenario` entry"),
    };
    if let Some(v) = flags.variant {
        scenario.controller.variant = v;
    }
    if let Some(m) = flags.mode {
        scenario.controller.mode = m;
    }
    if let Some(t) = flags.tol {
        scenario.controller.stop_tol = t;
    }
    if let Some(n) = flags.max_iter {
        scenario.controller.max_iter = n;
    }
    scenario.validate()?;
    scenario.controller.validate()?;
    scenario.reference_controller.validate()?;
    // builds the model and weights, so bad identifiers and weights are config errors
    scenario.problem()?;

    let repeat = flags.repeat.or(config.repeat).unwrap_or(DEFAULT_REPEAT);
    if repeat == 0 {
        bail!("repeat must be at least 1");
    }
    let seed = match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))?,
        Err(_) => config.seed.unwrap_or(0),
    };
    Ok(Resolved {
        scenario,
        out: flags.out.clone().or(config.out).unwrap_or_else(|| PathBuf::from(".")),
        repeat,
        seed,
    })
}
