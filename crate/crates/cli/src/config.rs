//! Command options, presets and TOML configuration files.
//!
//! Every option can come from a flag or from the matching key of the
//! command's table in the `--config` file; flags win.

use std::path::{Path, PathBuf};

use clap::Args;
use lccd::{LockMode, Topology};
use serde::Deserialize;

use crate::CliError;

/// Synthetic quadratic parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticPreset {
    pub blocks: usize,
    pub dim: usize,
    pub rows: usize,
    pub target_f0: f64,
    pub seed: u64,
}

pub fn quadratic_preset(name: &str) -> Result<QuadraticPreset, CliError> {
    let (blocks, dim, rows) = match name {
        "synth-small" => (100, 10, 5),
        "synth-paper" => (1000, 50, 10),
        "async-small" => (500, 20, 20),
        "async-paper" => (10_000, 100, 100),
        "synth-tiny" => (12, 4, 2),
        _ => {
            return Err(CliError::Config(format!(
                "unknown quadratic preset '{name}' (synth-tiny, synth-small, synth-paper, async-small, async-paper)"
            )))
        }
    };
    Ok(QuadraticPreset { blocks, dim, rows, target_f0: 1000.0, seed: 1 })
}

pub fn parse_topology(name: &str) -> Result<Topology, CliError> {
    Topology::ALL
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| CliError::Config(format!("unknown topology '{name}' (ring, clique, star-ring, tree-ring)")))
}

pub fn parse_lock_mode(name: &str) -> Result<LockMode, CliError> {
    LockMode::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| CliError::Config(format!("unknown lock mode '{name}' (double, single, free)")))
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyOpts {
    /// Quadratic preset
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated topologies to compare
    #[arg(long, value_delimiter = ',')]
    pub topologies: Option<Vec<String>>,
    /// Iterations per run
    #[arg(long)]
    pub iters: Option<u64>,
    /// Number of seeds per topology, counted up from the base seed
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Gap fraction that defines iters_to_target
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub trace_every: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyConfig {
    pub preset: QuadraticPreset,
    pub topologies: Vec<Topology>,
    pub iters: u64,
    pub seeds: u64,
    pub theta: f64,
    pub trace_every: u64,
}

impl TopologyOpts {
    pub fn resolve(&self, file: &TopologyOpts) -> Result<TopologyConfig, CliError> {
        let names = pick(&self.topologies, &file.topologies, Topology::ALL.iter().map(|t| t.name().to_string()).collect());
        let cfg = TopologyConfig {
            preset: quadratic_preset(&pick(&self.preset, &file.preset, "synth-small".into()))?,
            topologies: names.iter().map(|n| parse_topology(n.trim())).collect::<Result<_, _>>()?,
            iters: pick(&self.iters, &file.iters, 10_000),
            seeds: pick(&self.seeds, &file.seeds, 1),
            theta: pick(&self.theta, &file.theta, 0.99),
            trace_every: pick(&self.trace_every, &file.trace_every, 100),
        };
        if cfg.topologies.is_empty() || cfg.seeds == 0 {
            return Err(CliError::Config("need at least one topology and one seed".into()));
        }
        check_theta(cfg.theta)?;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsyncOpts {
    /// Quadratic preset
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated thread counts
    #[arg(long, value_delimiter = ',')]
    pub threads: Option<Vec<usize>>,
    /// Comma-separated lock modes (double, single, free)
    #[arg(long, value_delimiter = ',')]
    pub lock_modes: Option<Vec<String>>,
    /// Artificial delay per update step in microseconds
    #[arg(long)]
    pub delay_us: Option<u64>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Stop once f0 - f > theta (f0 - f*)
    #[arg(long)]
    pub theta: Option<f64>,
    /// Wall-time limit per run in seconds
    #[arg(long)]
    pub max_wall_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsyncRunConfig {
    pub preset: QuadraticPreset,
    pub threads: Vec<usize>,
    pub lock_modes: Vec<LockMode>,
    pub delay_us: u64,
    pub topology: Topology,
    pub theta: f64,
    pub max_wall_s: f64,
}

impl AsyncOpts {
    pub fn resolve(&self, file: &AsyncOpts) -> Result<AsyncRunConfig, CliError> {
        let modes = pick(&self.lock_modes, &file.lock_modes, LockMode::ALL.iter().map(|m| m.name().to_string()).collect());
        let cfg = AsyncRunConfig {
            preset: quadratic_preset(&pick(&self.preset, &file.preset, "async-small".into()))?,
            threads: pick(&self.threads, &file.threads, vec![1, 2, 4, 8]),
            lock_modes: modes.iter().map(|n| parse_lock_mode(n.trim())).collect::<Result<_, _>>()?,
            delay_us: pick(&self.delay_us, &file.delay_us, 50),
            topology: parse_topology(&pick(&self.topology, &file.topology, "star-ring".into()))?,
            theta: pick(&self.theta, &file.theta, 0.99),
            max_wall_s: pick(&self.max_wall_s, &file.max_wall_s, 600.0),
        };
        if cfg.threads.is_empty() || cfg.threads.contains(&0) || cfg.lock_modes.is_empty() {
            return Err(CliError::Config("thread counts must be positive and at least one lock mode is needed".into()));
        }
        if !(cfg.max_wall_s > 0.0) {
            return Err(CliError::Config("max_wall_s must be positive".into()));
        }
        check_theta(cfg.theta)?;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmOpts {
    /// Dataset in sparse text format, optionally gzip-compressed
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Built-in dataset instead of --data (svm-toy, census-like)
    #[arg(long)]
    pub preset: Option<String>,
    /// Use only the first N examples
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Box bound C
    #[arg(long)]
    pub svm_c: Option<f64>,
    /// Reference optimum; computed by a long sequential run when absent
    #[arg(long)]
    pub f_star: Option<f64>,
    /// Iterations of the reference run
    #[arg(long)]
    pub ref_iters: Option<u64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub iters: Option<u64>,
    /// Worker threads; 1 runs the sequential engine
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub lock_mode: Option<String>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Warn when the mean support overlap exceeds this value
    #[arg(long)]
    pub overlap_threshold: Option<f64>,
    #[arg(long)]
    pub trace_every: Option<u64>,
    #[arg(long)]
    pub max_wall_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SvmSource {
    File(PathBuf),
    Toy,
    CensusLike,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmConfig {
    pub source: SvmSource,
    pub subsample: Option<usize>,
    pub feature_dim: Option<usize>,
    pub c: f64,
    pub f_star: Option<f64>,
    pub ref_iters: u64,
    pub theta: f64,
    pub iters: u64,
    pub threads: usize,
    pub lock_mode: LockMode,
    pub topology: Topology,
    pub overlap_threshold: f64,
    pub trace_every: u64,
    pub max_wall_s: f64,
}

impl SvmOpts {
    pub fn resolve(&self, file: &SvmOpts, base: &Path) -> Result<SvmConfig, CliError> {
        let data = self.data.clone().or_else(|| file.data.as_ref().map(|p| base.join(p)));
        let preset = self.preset.clone().or_else(|| file.preset.clone());
        let source = match (data, preset.as_deref()) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either --data or --preset, not both".into())),
            (Some(p), None) => SvmSource::File(p),
            (None, Some("svm-toy")) => SvmSource::Toy,
            (None, Some("census-like")) => SvmSource::CensusLike,
            (None, Some(other)) => {
                return Err(CliError::Config(format!("unknown svm preset '{other}' (svm-toy, census-like)")))
            }
            (None, None) => return Err(CliError::Config("svm needs --data <path> or --preset".into())),
        };
        let cfg = SvmConfig {
            source,
            subsample: self.subsample.or(file.subsample),
            feature_dim: self.feature_dim.or(file.feature_dim),
            c: pick(&self.svm_c, &file.svm_c, 1.0),
            f_star: self.f_star.or(file.f_star),
            ref_iters: pick(&self.ref_iters, &file.ref_iters, 10_000_000),
            theta: pick(&self.theta, &file.theta, 0.9999),
            iters: pick(&self.iters, &file.iters, 10_000_000),
            threads: pick(&self.threads, &file.threads, 1),
            lock_mode: parse_lock_mode(&pick(&self.lock_mode, &file.lock_mode, "double".into()))?,
            topology: parse_topology(&pick(&self.topology, &file.topology, "clique".into()))?,
            overlap_threshold: pick(&self.overlap_threshold, &file.overlap_threshold, 0.1),
            trace_every: pick(&self.trace_every, &file.trace_every, 1000),
            max_wall_s: pick(&self.max_wall_s, &file.max_wall_s, 600.0),
        };
        if !(cfg.c > 0.0 && cfg.c.is_finite()) {
            return Err(CliError::Config(format!("svm_c must be positive, got {}", cfg.c)));
        }
        if cfg.threads == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        check_theta(cfg.theta)?;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticOpts {
    /// Finite-sum preset (stoch-toy)
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub topology: Option<String>,
    /// Multiplier on the step constant
    #[arg(long)]
    pub step_multiplier: Option<f64>,
    #[arg(long)]
    pub trace_every: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticConfig {
    pub blocks: usize,
    pub dim: usize,
    pub components: usize,
    pub problem_seed: u64,
    pub iters: u64,
    pub topology: Topology,
    pub step_multiplier: f64,
    pub trace_every: u64,
}

impl StochasticOpts {
    pub fn resolve(&self, file: &StochasticOpts) -> Result<StochasticConfig, CliError> {
        let preset = pick(&self.preset, &file.preset, "stoch-toy".into());
        if preset != "stoch-toy" {
            return Err(CliError::Config(format!("unknown stochastic preset '{preset}' (stoch-toy)")));
        }
        Ok(StochasticConfig {
            blocks: 4,
            dim: 2,
            components: 4,
            problem_seed: 100,
            iters: pick(&self.iters, &file.iters, 100_000),
            topology: parse_topology(&pick(&self.topology, &file.topology, "clique".into()))?,
            step_multiplier: pick(&self.step_multiplier, &file.step_multiplier, 1.0),
            trace_every: pick(&self.trace_every, &file.trace_every, 100),
        })
    }
}

fn check_theta(theta: f64) -> Result<(), CliError> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("theta must lie in (0, 1), got {theta}")))
    }
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub no_wall_clock: Option<bool>,
    pub topology: TopologyOpts,
    #[serde(rename = "async")]
    pub async_: AsyncOpts,
    pub svm: SvmOpts,
    pub stochastic: StochasticOpts,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
