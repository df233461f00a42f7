//! Run configuration: one JSON document whose fields are overridden by flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cfe_core::analytic::{BetaGrid, DEFAULT_SEED};
use cfe_core::meanfield::{MeanFieldOptions, Schedule};
use cfe_core::{Domain, DomainPreset, NoiseModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Value table (`dividends`, `shapley`, `gibbs --from-game`) or energy
    /// table (`gibbs`, `nash`).
    pub input: Option<PathBuf>,
    /// Pairwise energy JSON (`meanfield`, `nash`).
    pub pairwise: Option<PathBuf>,
    pub from_game: Option<bool>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub max_order: Option<usize>,
    pub synergy_tol: Option<f64>,
    pub permutations: Option<usize>,
    pub verify_trials: Option<usize>,
    pub random_agents: Option<usize>,
    pub grid: Option<usize>,
    pub meanfield: Option<MeanFieldConfig>,
    #[serde(default)]
    pub presets: BTreeMap<String, PresetConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub damping: Option<f64>,
    pub schedule: Option<ScheduleName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Synchronous,
    Sequential,
}

impl From<ScheduleName> for Schedule {
    fn from(s: ScheduleName) -> Self {
        match s {
            ScheduleName::Synchronous => Schedule::Synchronous,
            ScheduleName::Sequential => Schedule::Sequential,
        }
    }
}

pub fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::Synchronous => "synchronous",
        Schedule::Sequential => "sequential",
    }
}

/// Per-domain overrides of the built-in sweep presets.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub n_agents: Option<usize>,
    pub alpha_penalty: Option<f64>,
    pub beta_start: Option<f64>,
    pub beta_stop: Option<f64>,
    pub steps: Option<usize>,
    pub n_runs: Option<usize>,
    pub noise: Option<NoiseConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Constant { sigma: f64 },
    Affine { scale: f64, slope: f64 },
}

impl From<NoiseConfig> for NoiseModel {
    fn from(n: NoiseConfig) -> Self {
        match n {
            NoiseConfig::Constant { sigma } => NoiseModel::Constant { sigma },
            NoiseConfig::Affine { scale, slope } => NoiseModel::Affine { scale, slope },
        }
    }
}

impl RunConfig {
    /// Loads a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.out, &mut cfg.input, &mut cfg.pairwise]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for name in cfg.presets.keys() {
            if name.parse::<Domain>().is_err() {
                return Err(CliError::Config(format!("unknown preset `{name}`")));
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn seed_or(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    /// Built-in preset for `domain` with config overrides applied.
    pub fn preset(&self, domain: Domain, seed: u64) -> Result<DomainPreset> {
        let mut p = DomainPreset::for_domain(domain).with_seed(seed);
        if let Some(o) = self.presets.get(domain.name()) {
            p.n_agents = o.n_agents.unwrap_or(p.n_agents);
            p.alpha_penalty = o.alpha_penalty.unwrap_or(p.alpha_penalty);
            p.beta_grid = BetaGrid {
                start: o.beta_start.unwrap_or(p.beta_grid.start),
                stop: o.beta_stop.unwrap_or(p.beta_grid.stop),
                steps: o.steps.unwrap_or(p.beta_grid.steps),
            };
            p.n_runs = o.n_runs.unwrap_or(p.n_runs);
            if let Some(n) = o.noise {
                p.noise = n.into();
            }
        }
        p.validate()
            .map_err(|e| CliError::Config(format!("preset `{}`: {e}", domain.name())))?;
        Ok(p)
    }
}

/// Mean-field solver settings after merging flags, config and defaults.
pub fn meanfield_options(
    cfg: Option<&MeanFieldConfig>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    damping: Option<f64>,
    schedule: Option<ScheduleName>,
) -> Result<MeanFieldOptions> {
    let d = MeanFieldOptions::default();
    let c = cfg.cloned().unwrap_or_default();
    let opts = MeanFieldOptions {
        tol: tol.or(c.tol).unwrap_or(d.tol),
        max_iter: max_iter.or(c.max_iter).unwrap_or(d.max_iter),
        damping: damping.or(c.damping).unwrap_or(d.damping),
        init: None,
        schedule: schedule.or(c.schedule).map_or(d.schedule, Into::into),
    };
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(CliError::Config("meanfield tol must be positive".into()));
    }
    if opts.max_iter == 0 {
        return Err(CliError::Config(
            "meanfield max_iter must be at least 1".into(),
        ));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(CliError::Config(
            "meanfield damping must lie in (0, 1]".into(),
        ));
    }
    Ok(opts)
}

pub fn check_beta(beta: f64) -> Result<f64> {
    if beta > 0.0 && beta.is_finite() {
        Ok(beta)
    } else {
        Err(CliError::Config(format!(
            "beta must be positive and finite, got {beta}"
        )))
    }
}
