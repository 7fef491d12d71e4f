use std::path::{Path, PathBuf};
use std::time::Duration;

use lccd::problems::{
    parse_libsvm, stochastic_toy, svm_dual_problem, synthetic_census_like, synthetic_quadratic,
    SeparableQuadratic, SvmDataset,
};
use lccd::{
    build_topology, run_algorithm1, run_algorithm2, run_async, AsyncConfig, AsyncStop, Error,
    Problem, SolverConfig, StochConfig, StopReason, StopRule, Weighting,
};
use log::{info, warn};

use crate::config::{
    AsyncRunConfig, FileConfig, QuadraticPreset, StochasticConfig, SvmConfig, SvmSource, TopologyConfig,
};
use crate::output::{fmt_g, write_model, write_trace, Outputs};
use crate::{Cli, CliError, Command};

/// Settings shared by all commands.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: PathBuf,
    pub seed: u64,
    pub wall_clock: bool,
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let base = cli
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let seed = match cli.seed.or(file.seed) {
        Some(s) => s,
        None => match std::env::var("LCCD_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("LCCD_SEED must be an unsigned integer, got '{v}'")))?,
            Err(_) => 0,
        },
    };
    let ctx = Context {
        out: cli.out.clone().or_else(|| file.out.as_ref().map(|p| base.join(p))).unwrap_or_else(|| "out".into()),
        seed,
        wall_clock: !(cli.no_wall_clock || file.no_wall_clock.unwrap_or(false)),
    };
    match &cli.command {
        Command::Topology(o) => cmd_topology(&ctx, &o.resolve(&file.topology)?),
        Command::Async(o) => cmd_async(&ctx, &o.resolve(&file.async_)?),
        Command::Svm(o) => cmd_svm(&ctx, &o.resolve(&file.svm, &base)?),
        Command::Stochastic(o) => cmd_stochastic(&ctx, &o.resolve(&file.stochastic)?),
    }
}

fn quadratic(preset: &QuadraticPreset) -> Result<(Problem<SeparableQuadratic>, f64), CliError> {
    let p = synthetic_quadratic(preset.blocks, preset.dim, preset.rows, preset.target_f0, preset.seed)?;
    let (_, f_star) = p.objective.constrained_minimum(&p.constraints)?;
    info!("quadratic {}x{} with {} rows, f* = {f_star}", preset.blocks, preset.dim, preset.rows);
    Ok((p, f_star))
}

fn wall(ctx: &Context, s: f64) -> String {
    if ctx.wall_clock {
        fmt_g(s)
    } else {
        "0".into()
    }
}

pub fn cmd_topology(ctx: &Context, cfg: &TopologyConfig) -> Result<Vec<PathBuf>, CliError> {
    let (p, f_star) = quadratic(&cfg.preset)?;
    let mut out = Outputs::new(&ctx.out)?;
    let mut rows = Vec::new();
    for &kind in &cfg.topologies {
        let g = build_topology(kind, cfg.preset.blocks, Weighting::Uniform)?;
        for s in 0..cfg.seeds {
            let seed = ctx.seed + s;
            let solver = SolverConfig {
                max_iters: cfg.iters,
                seed,
                trace_every: cfg.trace_every,
                wall_clock: ctx.wall_clock,
                ..SolverConfig::default()
            };
            let (it, trace) = run_algorithm1(&p, &g, &solver)?;
            write_trace(&mut out, &format!("topology_{}_seed{seed}.csv", kind.name()), &trace, false)?;
            let hit = trace.iters_to_gap(cfg.theta, f_star);
            info!("{} seed {seed}: target at {hit:?}, final {}", kind.name(), it.objective);
            rows.push([
                kind.name().to_string(),
                seed.to_string(),
                hit.map(|k| k.to_string()).unwrap_or_default(),
                fmt_g(it.objective),
            ]);
        }
    }
    let mut w = out.csv("summary.csv", &["topology", "seed", "iters_to_target", "final_obj"])?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    out.keep();
    Ok(out.files().to_vec())
}

struct AsyncRow {
    threads: usize,
    mode: &'static str,
    wall_s: f64,
    final_obj: Option<f64>,
    tau_hat: Option<u64>,
}

pub fn cmd_async(ctx: &Context, cfg: &AsyncRunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (p, f_star) = quadratic(&cfg.preset)?;
    let g = build_topology(cfg.topology, cfg.preset.blocks, Weighting::Uniform)?;
    let mut out = Outputs::new(&ctx.out)?;
    let mut rows = Vec::new();
    for &mode in &cfg.lock_modes {
        for &threads in &cfg.threads {
            let run_cfg = AsyncConfig {
                threads,
                lock_mode: mode,
                artificial_delay: Duration::from_micros(cfg.delay_us),
                stop: AsyncStop::GapFraction { theta: cfg.theta, f_star },
                seed: ctx.seed,
                max_wall_time: Duration::from_secs_f64(cfg.max_wall_s),
                track_ledger: false,
                wall_clock: ctx.wall_clock,
                ..AsyncConfig::default()
            };
            let row = match run_async(&p, &g, &run_cfg) {
                Ok(o) => AsyncRow {
                    threads,
                    mode: mode.name(),
                    wall_s: o.wall_s,
                    final_obj: Some(o.iterate.objective),
                    tau_hat: Some(o.staleness.max),
                },
                Err(Error::MaxWallTime(s)) => {
                    warn!("{threads} threads, {}: no stop within {s} s", mode.name());
                    AsyncRow { threads, mode: mode.name(), wall_s: s, final_obj: None, tau_hat: None }
                }
                Err(e) => return Err(e.into()),
            };
            info!("{threads} threads, {}: {:.3} s", mode.name(), row.wall_s);
            rows.push(row);
        }
    }
    let mut w = out.csv("async.csv", &["threads", "lock_mode", "wall_s", "final_obj", "tau_hat", "speedup"])?;
    for r in &rows {
        let base = rows.iter().find(|b| b.mode == r.mode && b.threads == 1 && b.final_obj.is_some());
        let speedup = match (r.threads, base, r.final_obj) {
            (1, _, Some(_)) => "1".to_string(),
            (_, Some(b), Some(_)) => fmt_g(b.wall_s / r.wall_s),
            _ => String::new(),
        };
        w.write_record([
            r.threads.to_string(),
            r.mode.to_string(),
            wall(ctx, r.wall_s),
            r.final_obj.map(fmt_g).unwrap_or_default(),
            r.tau_hat.map(|t| t.to_string()).unwrap_or_default(),
            speedup,
        ])?;
    }
    w.flush()?;
    out.keep();
    let missed = rows.iter().filter(|r| r.final_obj.is_none()).count();
    if missed > 0 {
        return Err(CliError::NotConverged(format!("{missed} runs hit the wall-time limit")));
    }
    Ok(out.files().to_vec())
}

fn toy_dataset() -> SvmDataset {
    SvmDataset::from_dense(
        &[vec![1.0, 0.0], vec![2.0, 1.0], vec![-1.0, 0.0], vec![-2.0, -1.0]],
        vec![1.0, 1.0, -1.0, -1.0],
    )
    .expect("toy dataset is valid")
}

fn load_dataset(cfg: &SvmConfig) -> Result<SvmDataset, CliError> {
    let ds = match &cfg.source {
        SvmSource::File(path) => parse_libsvm(path, cfg.feature_dim).map_err(|e| match e {
            Error::Io(io) => CliError::Config(format!("cannot read {}: {io}", path.display())),
            Error::Parse { line, message } => CliError::Config(format!("{}:{line}: {message}", path.display())),
            other => other.into(),
        })?,
        SvmSource::Toy => toy_dataset(),
        SvmSource::CensusLike => synthetic_census_like(2000, 122, 14, 7)?,
    };
    Ok(match cfg.subsample {
        Some(n) => ds.head(n),
        None => ds,
    })
}

pub fn cmd_svm(ctx: &Context, cfg: &SvmConfig) -> Result<Vec<PathBuf>, CliError> {
    let ds = load_dataset(cfg)?;
    info!(
        "{} examples, {} features, {:.2} nonzeros per example",
        ds.len(),
        ds.feature_dim(),
        ds.average_nnz()
    );
    let p = svm_dual_problem(ds, cfg.c)?;
    let g = build_topology(cfg.topology, p.objective.dataset().len(), Weighting::Uniform)?;
    let f_star = match cfg.f_star {
        Some(f) => f,
        None => {
            // no coordinate moving over a whole trace window counts as converged
            let reference = SolverConfig {
                max_iters: cfg.ref_iters,
                seed: ctx.seed.wrapping_add(1),
                trace_every: cfg.trace_every,
                stop_rule: StopRule::ResidualNorm(f64::MIN_POSITIVE),
                wall_clock: false,
                ..SolverConfig::default()
            };
            let (it, _) = run_algorithm1(&p, &g, &reference)?;
            info!("reference f* = {} from a sequential run", it.objective);
            it.objective
        }
    };
    let mut out = Outputs::new(&ctx.out)?;
    let (alpha, reached) = if cfg.threads == 1 {
        let solver = SolverConfig {
            max_iters: cfg.iters,
            seed: ctx.seed,
            trace_every: cfg.trace_every,
            stop_rule: StopRule::GapFraction { theta: cfg.theta, f_star },
            wall_clock: ctx.wall_clock,
            ..SolverConfig::default()
        };
        let (it, trace) = run_algorithm1(&p, &g, &solver)?;
        write_trace(&mut out, "svm.csv", &trace, false)?;
        (it.x, trace.summary.stop_reason == StopReason::GapReached)
    } else {
        let overlap = p.objective.dataset().average_support_overlap(1000, ctx.seed);
        if overlap > cfg.overlap_threshold {
            warn!(
                "mean support overlap {overlap:.3} exceeds {}; asynchronous updates will contend on shared weights",
                cfg.overlap_threshold
            );
        }
        let run_cfg = AsyncConfig {
            threads: cfg.threads,
            lock_mode: cfg.lock_mode,
            stop: AsyncStop::GapFraction { theta: cfg.theta, f_star },
            seed: ctx.seed,
            max_wall_time: Duration::from_secs_f64(cfg.max_wall_s),
            track_ledger: false,
            wall_clock: ctx.wall_clock,
            ..AsyncConfig::default()
        };
        let o = run_async(&p, &g, &run_cfg)?;
        write_trace(&mut out, "svm.csv", &o.trace, false)?;
        (o.iterate.x, true)
    };
    let w = p.objective.weights(&alpha);
    write_model(&mut out, "svm_model.txt", &w)?;
    out.keep();
    if !reached {
        return Err(CliError::NotConverged(format!(
            "gap fraction {} not reached in {} iterations",
            cfg.theta, cfg.iters
        )));
    }
    Ok(out.files().to_vec())
}

pub fn cmd_stochastic(ctx: &Context, cfg: &StochasticConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = stochastic_toy(cfg.blocks, cfg.dim, cfg.components, cfg.problem_seed)?;
    let (_, f_star) = p.objective.constrained_minimum(&p.constraints)?;
    let g = build_topology(cfg.topology, cfg.blocks, Weighting::Uniform)?;
    let run_cfg = StochConfig {
        base: SolverConfig {
            max_iters: cfg.iters,
            seed: ctx.seed,
            trace_every: cfg.trace_every,
            wall_clock: ctx.wall_clock,
            ..SolverConfig::default()
        },
        f_star: Some(f_star),
        step_multiplier: cfg.step_multiplier,
        ..StochConfig::default()
    };
    let o = run_algorithm2(&p, &g, &run_cfg)?;
    info!("best objective {} against f* = {f_star}", o.best.objective);
    let mut out = Outputs::new(&ctx.out)?;
    write_trace(&mut out, "stochastic.csv", &o.trace, true)?;
    out.keep();
    Ok(out.files().to_vec())
}
