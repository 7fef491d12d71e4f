//! Sequential randomized pairwise coordinate descent.
//!
//! Each iteration samples an edge `(i, j)` of the communication graph, solves
//! the pair subproblem with step `α_k / (L_i + L_j)` and moves only blocks `i`
//! and `j`. Every iterate satisfies `Ax = 0` up to round-off.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::{CommGraph, EdgeSampler};
use crate::linalg::norm_inf;
use crate::model::{
    feasibility_residual, feasibility_tolerance, Iterate, LinearConstraints, Objective, Problem,
};
use crate::pairsolve::PairSolver;

/// Step multiplier `α_k` applied on top of the `1/L_ij` scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `min(1, c / sqrt(k + 1))`.
    InverseSqrt(f64),
}

impl StepSchedule {
    pub fn alpha(&self, k: u64) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::InverseSqrt(c) => (c / ((k + 1) as f64).sqrt()).min(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::InverseSqrt(c) => c,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("step size must be positive, got {v}")))
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Run the full iteration budget.
    MaxIters,
    /// Stop once `f_0 - f_k > θ (f_0 - f*)`.
    GapFraction { theta: f64, f_star: f64 },
    /// Stop once the largest coordinate move over the last trace window is at most `ε`.
    ResidualNorm(f64),
}

impl StopRule {
    fn validate(&self) -> Result<()> {
        match *self {
            StopRule::GapFraction { theta, f_star } => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::Config(format!("gap fraction must lie in (0, 1), got {theta}")));
                }
                if !f_star.is_finite() {
                    return Err(Error::Config("f* must be finite".into()));
                }
            }
            StopRule::ResidualNorm(eps) if !(eps > 0.0) => {
                return Err(Error::Config(format!("residual tolerance must be positive, got {eps}")));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    GapReached,
    ResidualReached,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max-iters",
            StopReason::GapReached => "gap-reached",
            StopReason::ResidualReached => "residual-reached",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iters: u64,
    pub alpha_schedule: StepSchedule,
    pub seed: u64,
    pub stop_rule: StopRule,
    /// Record cadence in iterations; the final iterate is always recorded.
    pub trace_every: u64,
    /// Cadence of the from-scratch objective check.
    pub recompute_every: u64,
    /// When false, `wall_s` is written as zero so traces are byte-reproducible.
    pub wall_clock: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100_000,
            alpha_schedule: StepSchedule::Constant(1.0),
            seed: 0,
            stop_rule: StopRule::MaxIters,
            trace_every: 100,
            recompute_every: 10_000,
            wall_clock: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.alpha_schedule.validate()?;
        self.stop_rule.validate()?;
        if self.trace_every == 0 || self.recompute_every == 0 {
            return Err(Error::Config("trace and recompute cadences must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub wall_s: f64,
    pub objective: f64,
    pub feas_residual: f64,
    /// Edge sampled at iteration `k - 1`.
    pub edge: Option<(usize, usize)>,
    /// Best objective seen so far (stochastic engine only).
    pub best_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSummary {
    pub iters: u64,
    pub final_objective: f64,
    pub stop_reason: StopReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    /// First recorded iteration at which `f_0 - f_k > θ (f_0 - f*)`.
    pub fn iters_to_gap(&self, theta: f64, f_star: f64) -> Option<u64> {
        let f0 = self.records.first()?.objective;
        self.records
            .iter()
            .find(|r| f0 - r.objective > theta * (f0 - f_star))
            .map(|r| r.k)
    }

    /// Records with the wall-clock column dropped, for determinism checks.
    pub fn without_wall_clock(&self) -> Vec<TraceRecord> {
        self.records
            .iter()
            .map(|r| TraceRecord { wall_s: 0.0, ..r.clone() })
            .collect()
    }
}

/// The origin, which satisfies `Ax = 0` for every constraint set.
pub fn feasible_start(constraints: &LinearConstraints) -> Vec<f64> {
    vec![0.0; constraints.partition().dim()]
}

pub(crate) fn check_start<O: Objective>(problem: &Problem<O>, graph: &CommGraph) -> Result<()> {
    if graph.num_nodes() != problem.constraints.num_blocks() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, problem has {} blocks",
            graph.num_nodes(),
            problem.constraints.num_blocks()
        )));
    }
    let r = feasibility_residual(&problem.constraints, &problem.x0)?;
    if r > feasibility_tolerance(&problem.x0) {
        return Err(Error::Feasibility(format!("starting point has residual {r:e}")));
    }
    let p = problem.partition();
    for i in 0..p.num_blocks() {
        let (lo, hi) = problem.nonsmooth.term(i).domain();
        if problem.x0[p.range(i)].iter().any(|&v| v < lo || v > hi) {
            return Err(Error::Feasibility(format!(
                "starting point leaves the domain of h on block {i}"
            )));
        }
    }
    Ok(())
}

/// Shared inner loop state for the sequential and stochastic engines.
pub(crate) struct PairStepper<'p, O: Objective> {
    pub problem: &'p Problem<O>,
    pub solver: PairSolver,
    pub x: Vec<f64>,
    pub aux: Vec<f64>,
    pub f: f64,
    /// False while `f` lacks an incremental update and must be recomputed.
    pub f_fresh: bool,
    g_i: Vec<f64>,
    g_j: Vec<f64>,
    d_i: Vec<f64>,
    d_j: Vec<f64>,
    pub window_move: f64,
}

impl<'p, O: Objective> PairStepper<'p, O> {
    pub fn new(problem: &'p Problem<O>, graph: &CommGraph) -> Result<Self> {
        check_start(problem, graph)?;
        let solver = PairSolver::new(&problem.constraints, graph, &problem.nonsmooth)?;
        let x = problem.x0.clone();
        let aux = problem.objective.build_aux(&x);
        let f = problem.composite_value(&x);
        if !f.is_finite() {
            return Err(Error::Numerics(format!("objective at the starting point is {f}")));
        }
        let nmax = problem.partition().max_block_size();
        Ok(PairStepper {
            problem,
            solver,
            x,
            aux,
            f,
            f_fresh: true,
            g_i: vec![0.0; nmax],
            g_j: vec![0.0; nmax],
            d_i: vec![0.0; nmax],
            d_j: vec![0.0; nmax],
            window_move: 0.0,
        })
    }

    /// One pair step; `component` selects `f_l` for the gradient.
    pub fn step(
        &mut self,
        e: usize,
        (i, j): (usize, usize),
        alpha: f64,
        component: Option<usize>,
    ) -> Result<()> {
        let problem = self.problem;
        let obj = &problem.objective;
        let p = problem.partition();
        let (ri, rj) = (p.range(i), p.range(j));
        let (ni, nj) = (ri.len(), rj.len());
        let lip = obj.block_lipschitz();
        let alpha_eff = alpha / (lip[i] + lip[j]);

        let (x, aux) = (self.x.as_slice(), self.aux.as_slice());
        match component {
            None => {
                obj.partial_grad(i, x, aux, &mut self.g_i[..ni]);
                obj.partial_grad(j, x, aux, &mut self.g_j[..nj]);
            }
            Some(l) => {
                obj.component_partial_grad(l, i, x, aux, &mut self.g_i[..ni]);
                obj.component_partial_grad(l, j, x, aux, &mut self.g_j[..nj]);
            }
        }
        self.solver.solve(
            e,
            (i, j),
            &self.g_i[..ni],
            &self.g_j[..nj],
            &x[ri.clone()],
            &x[rj.clone()],
            alpha_eff,
            &mut self.d_i[..ni],
            &mut self.d_j[..nj],
        )?;

        // Clamp to the box where one exists and keep the move actually taken.
        for (block, range, d) in [(i, ri.clone(), &mut self.d_i), (j, rj.clone(), &mut self.d_j)] {
            let bounds = self.solver.box_of(block);
            for (k, c) in range.enumerate() {
                let old = self.x[c];
                let mut new = old + d[k];
                if let Some((lo, hi)) = bounds {
                    new = new.clamp(lo, hi);
                }
                d[k] = new - old;
            }
        }
        let (di, dj) = (&self.d_i[..ni], &self.d_j[..nj]);
        let moved = norm_inf(di).max(norm_inf(dj));
        if !moved.is_finite() {
            return Err(Error::Numerics(format!("non-finite update on edge ({i}, {j})")));
        }
        self.window_move = self.window_move.max(moved);

        let smooth_delta = if self.f_fresh {
            obj.pair_delta(i, j, &self.x, &self.aux, di, dj)
        } else {
            None
        };
        let h = &problem.nonsmooth;
        let h_before = if h.is_zero() {
            0.0
        } else {
            h.block_value(i, &self.x[ri.clone()]) + h.block_value(j, &self.x[rj.clone()])
        };

        for (k, c) in ri.clone().enumerate() {
            self.x[c] += di[k];
        }
        for (k, c) in rj.clone().enumerate() {
            self.x[c] += dj[k];
        }
        let aux = &mut self.aux;
        obj.aux_increment(i, di, &mut |c, v| aux[c] += v);
        obj.aux_increment(j, dj, &mut |c, v| aux[c] += v);

        match smooth_delta {
            Some(delta) => {
                let h_after = if h.is_zero() {
                    0.0
                } else {
                    h.block_value(i, &self.x[ri]) + h.block_value(j, &self.x[rj])
                };
                self.f += delta + (h_after - h_before);
                if !self.f.is_finite() {
                    return Err(Error::Numerics(format!("objective became {}", self.f)));
                }
            }
            None => self.f_fresh = false,
        }
        Ok(())
    }

    /// Current objective, recomputing it when the incremental value is stale.
    pub fn objective(&mut self) -> Result<f64> {
        if !self.f_fresh {
            self.f = self.fresh_objective()?;
            self.f_fresh = true;
        }
        Ok(self.f)
    }

    fn fresh_objective(&self) -> Result<f64> {
        let problem = self.problem;
        let smooth = if problem.objective.aux_len() > 0 {
            problem.objective.value_with_aux(&self.x, &self.aux)
        } else {
            problem.objective.value(&self.x)
        };
        let h = if problem.nonsmooth.is_zero() {
            0.0
        } else {
            problem.nonsmooth.value(&self.x, problem.partition())
        };
        let f = smooth + h;
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::Numerics(format!("objective became {f}")))
        }
    }

    /// From-scratch check of the tracked objective and auxiliary state.
    pub fn audit(&mut self) -> Result<()> {
        let obj = &self.problem.objective;
        if obj.aux_len() > 0 {
            let fresh = obj.build_aux(&self.x);
            let drift = fresh
                .iter()
                .zip(&self.aux)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if drift > 1e-8 * (1.0 + norm_inf(&fresh)) {
                return Err(Error::Numerics(format!(
                    "auxiliary state drifted by {drift:e} from its recomputed value"
                )));
            }
        }
        if self.f_fresh {
            let smooth = obj.value(&self.x);
            let h = if self.problem.nonsmooth.is_zero() {
                0.0
            } else {
                self.problem.nonsmooth.value(&self.x, self.problem.partition())
            };
            let fresh = smooth + h;
            if (fresh - self.f).abs() > 1e-6 * (1.0 + fresh.abs()) {
                return Err(Error::Numerics(format!(
                    "tracked objective {} disagrees with recomputed {fresh}",
                    self.f
                )));
            }
            self.f = fresh;
        }
        Ok(())
    }

    pub fn residual(&self) -> Result<f64> {
        let r = feasibility_residual(&self.problem.constraints, &self.x)?;
        if r > 1e-6 * (1.0 + norm_inf(&self.x)) {
            return Err(Error::Numerics(format!("feasibility residual grew to {r:e}")));
        }
        Ok(r)
    }

    pub fn into_iterate(mut self) -> Result<Iterate> {
        let objective = self.objective()?;
        let feasibility = feasibility_residual(&self.problem.constraints, &self.x)?;
        Ok(Iterate {
            x: self.x,
            objective,
            feasibility,
        })
    }
}

/// Sequential pairwise coordinate descent.
pub fn run_algorithm1<O: Objective>(
    problem: &Problem<O>,
    graph: &CommGraph,
    config: &SolverConfig,
) -> Result<(Iterate, Trace)> {
    config.validate()?;
    let mut st = PairStepper::new(problem, graph)?;
    let mut sampler = EdgeSampler::new(graph, config.seed);
    let clock = Instant::now();
    let wall = |on: bool| if on { clock.elapsed().as_secs_f64() } else { 0.0 };
    let gap_check = match config.stop_rule {
        StopRule::GapFraction { theta, f_star } => Some((theta, f_star)),
        _ => None,
    };
    let f0 = st.objective()?;
    let mut records = vec![TraceRecord {
        k: 0,
        wall_s: wall(config.wall_clock),
        objective: f0,
        feas_residual: st.residual()?,
        edge: None,
        best_objective: None,
    }];

    let mut reason = StopReason::MaxIters;
    let mut k = 0;
    let mut last_edge = None;
    while k < config.max_iters {
        let e = sampler.next_index();
        let edge = graph.edge(e);
        st.step(e, edge, config.alpha_schedule.alpha(k), None)?;
        k += 1;
        last_edge = Some(edge);
        if k % config.recompute_every == 0 {
            st.audit()?;
        }
        let recorded = k % config.trace_every == 0;
        if recorded {
            let objective = st.objective()?;
            records.push(TraceRecord {
                k,
                wall_s: wall(config.wall_clock),
                objective,
                feas_residual: st.residual()?,
                edge: last_edge,
                best_objective: None,
            });
        }
        if let Some((theta, f_star)) = gap_check {
            if st.f_fresh || recorded {
                let f = st.objective()?;
                if f0 - f > theta * (f0 - f_star) {
                    reason = StopReason::GapReached;
                    break;
                }
            }
        }
        if recorded {
            if let StopRule::ResidualNorm(eps) = config.stop_rule {
                if st.window_move <= eps {
                    reason = StopReason::ResidualReached;
                    break;
                }
            }
            st.window_move = 0.0;
        }
    }

    if records.last().map(|r| r.k) != Some(k) {
        let objective = st.objective()?;
        records.push(TraceRecord {
            k,
            wall_s: wall(config.wall_clock),
            objective,
            feas_residual: st.residual()?,
            edge: last_edge,
            best_objective: None,
        });
    }
    let iterate = st.into_iterate()?;
    log::debug!(
        "sequential run stopped after {k} iterations ({}), f = {}",
        reason.name(),
        iterate.objective
    );
    let trace = Trace {
        records,
        summary: TraceSummary {
            iters: k,
            final_objective: iterate.objective,
            stop_reason: reason,
        },
    };
    Ok((iterate, trace))
}
