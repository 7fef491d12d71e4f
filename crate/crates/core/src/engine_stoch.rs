//! Stochastic pairwise coordinate descent for `f = (1/N) Σ_l f_l`.
//!
//! Each iteration samples an edge and a component `l` uniformly from `[N]`,
//! and takes the pair step of `f_l` with a decaying step
//! `α_k = s·sqrt(Δ₀ L) / (M sqrt(k + 1))`, capped at 1.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine_seq::{
    PairStepper, SolverConfig, StepSchedule, StopReason, StopRule, Trace, TraceRecord,
    TraceSummary,
};
use crate::error::{Error, Result};
use crate::graph::{CommGraph, EdgeSampler};
use crate::linalg::{sym_pinv, PINV_RCOND};
use crate::model::{feasibility_residual, Iterate, Objective, Problem};

/// `min(1, sqrt(Δ₀ L) / (M sqrt(k + 1)))`.
pub fn theorem4_schedule(delta0: f64, lipschitz: f64, grad_bound: f64, k: u64) -> f64 {
    StepSchedule::InverseSqrt((delta0 * lipschitz).sqrt() / grad_bound).alpha(k)
}

#[derive(Clone, Debug)]
pub struct StochConfig {
    /// Iteration budget, seed, stop rule and cadences. The step schedule field is ignored.
    pub base: SolverConfig,
    /// Known optimal value, used for `Δ₀ = F(x⁰) - f*`.
    pub f_star: Option<f64>,
    /// Fallback `Δ₀` when `f*` is unknown.
    pub delta0_guess: Option<f64>,
    /// Bound `M ≥ ‖∇f_l‖`; estimated by sampling when neither this nor the objective provides one.
    pub grad_bound: Option<f64>,
    /// Multiplier `s` on the step constant.
    pub step_multiplier: f64,
    pub bound_samples: usize,
}

impl Default for StochConfig {
    fn default() -> Self {
        StochConfig {
            base: SolverConfig::default(),
            f_star: None,
            delta0_guess: None,
            grad_bound: None,
            step_multiplier: 1.0,
            bound_samples: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StochOutcome {
    pub last: Iterate,
    /// Best iterate among those evaluated at trace cadence.
    pub best: Iterate,
    pub trace: Trace,
    /// Step constant `s·sqrt(Δ₀ L)/M` actually used.
    pub step_constant: f64,
    pub grad_bound: f64,
}

/// `1.5 · max ‖∇f_l(x)‖` over random points of `{x : Ax = 0}` around `x⁰`.
pub fn estimate_grad_bound<O: Objective>(problem: &Problem<O>, samples: usize, seed: u64) -> Result<f64> {
    let obj = &problem.objective;
    let p = problem.partition();
    let n = p.dim();
    let a = problem.constraints.dense();
    let proj = sym_pinv(&(&a * a.transpose()), PINV_RCOND);
    let scale = 1.0 + problem.x0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut best = 0.0_f64;
    let mut g = vec![0.0; p.max_block_size()];
    for _ in 0..samples.max(1) {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        let z = &z - a.transpose() * (&proj * (&a * &z));
        let x: Vec<f64> = problem.x0.iter().zip(z.iter()).map(|(a, b)| a + b).collect();
        let aux = obj.build_aux(&x);
        let l = rng.gen_range(0..obj.component_count());
        let mut sq = 0.0;
        for i in 0..p.num_blocks() {
            let gi = &mut g[..p.size(i)];
            obj.component_partial_grad(l, i, x.as_slice(), aux.as_slice(), gi);
            sq += gi.iter().map(|v| v * v).sum::<f64>();
        }
        best = best.max(sq.sqrt());
    }
    let m = 1.5 * best;
    if m > 0.0 && m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Numerics(format!("estimated gradient bound is {m}")))
    }
}

/// Stochastic pairwise coordinate descent with best-iterate tracking.
pub fn run_algorithm2<O: Objective>(
    problem: &Problem<O>,
    graph: &CommGraph,
    config: &StochConfig,
) -> Result<StochOutcome> {
    let cfg = &config.base;
    cfg.validate()?;
    let components = problem.objective.component_count();
    if components < 2 {
        return Err(Error::Config(
            "the stochastic engine needs at least two components; use the sequential engine".into(),
        ));
    }
    if !(config.step_multiplier > 0.0) {
        return Err(Error::Config("step multiplier must be positive".into()));
    }
    let mut st = PairStepper::new(problem, graph)?;
    let f0 = st.objective()?;
    let delta0 = match (config.f_star, config.delta0_guess) {
        (Some(f_star), _) => f0 - f_star,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(Error::Config("either f* or an initial gap guess is required".into()))
        }
    };
    if !(delta0 > 0.0) {
        return Err(Error::Config(format!("initial gap must be positive, got {delta0}")));
    }
    let lipschitz = problem
        .objective
        .block_lipschitz()
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let grad_bound = match config.grad_bound.or_else(|| problem.objective.grad_bound()) {
        Some(m) => m,
        None => estimate_grad_bound(problem, config.bound_samples, cfg.seed)?,
    };
    let step_constant = config.step_multiplier * (delta0 * lipschitz).sqrt() / grad_bound;
    let schedule = StepSchedule::InverseSqrt(step_constant);
    log::debug!("stochastic schedule: Δ0 = {delta0}, L = {lipschitz}, M = {grad_bound}, c = {step_constant}");

    let mut sampler = EdgeSampler::new(graph, cfg.seed);
    let mut picker = ChaCha8Rng::seed_from_u64(cfg.seed);
    picker.set_stream(1);

    let clock = Instant::now();
    let wall = |on: bool| if on { clock.elapsed().as_secs_f64() } else { 0.0 };
    let mut best_x = st.x.clone();
    let mut best_f = f0;
    let mut records = vec![TraceRecord {
        k: 0,
        wall_s: wall(cfg.wall_clock),
        objective: f0,
        feas_residual: st.residual()?,
        edge: None,
        best_objective: Some(f0),
    }];

    let mut reason = StopReason::MaxIters;
    let mut k = 0;
    while k < cfg.max_iters {
        let e = sampler.next_index();
        let edge = graph.edge(e);
        let l = picker.gen_range(0..components);
        st.step(e, edge, schedule.alpha(k), Some(l))?;
        k += 1;
        if k % cfg.recompute_every == 0 {
            st.audit()?;
        }
        if k % cfg.trace_every == 0 || k == cfg.max_iters {
            let objective = st.objective()?;
            if objective < best_f {
                best_f = objective;
                best_x.copy_from_slice(&st.x);
            }
            records.push(TraceRecord {
                k,
                wall_s: wall(cfg.wall_clock),
                objective,
                feas_residual: st.residual()?,
                edge: Some(edge),
                best_objective: Some(best_f),
            });
            match cfg.stop_rule {
                StopRule::GapFraction { theta, f_star } if f0 - best_f > theta * (f0 - f_star) => {
                    reason = StopReason::GapReached;
                    break;
                }
                StopRule::ResidualNorm(eps) if st.window_move <= eps => {
                    reason = StopReason::ResidualReached;
                    break;
                }
                _ => {}
            }
            st.window_move = 0.0;
        }
    }

    let best_feas = feasibility_residual(&problem.constraints, &best_x)?;
    let last = st.into_iterate()?;
    let trace = Trace {
        records,
        summary: TraceSummary {
            iters: k,
            final_objective: last.objective,
            stop_reason: reason,
        },
    };
    Ok(StochOutcome {
        last,
        best: Iterate {
            x: best_x,
            objective: best_f,
            feasibility: best_feas,
        },
        trace,
        step_constant,
        grad_bound,
    })
}
