//! Asynchronous shared-memory pairwise coordinate descent.
//!
//! Workers share one iterate whose coordinates are `f64` values stored in
//! `AtomicU64` cells and updated by compare-and-swap adds. Every worker loops
//! independently: sample an edge, elect a master and a slave, and run the
//! three-step master/slave update under the configured locking level. A
//! monitor in the calling thread watches the objective and stops the workers.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine_seq::{check_start, StopReason, Trace, TraceRecord, TraceSummary};
use crate::error::{Error, Result};
use crate::graph::{CommGraph, EdgeSampler};
use crate::model::{feasibility_residual, BlockPartition, Coords, Iterate, Objective, Problem};
use crate::pairsolve::PairSolver;

/// A slice of `f64` values held in atomic cells.
pub struct AtomicF64s {
    cells: Vec<AtomicU64>,
}

impl AtomicF64s {
    pub fn new(values: &[f64]) -> Self {
        AtomicF64s {
            cells: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn load(&self, k: usize) -> f64 {
        f64::from_bits(self.cells[k].load(Ordering::Relaxed))
    }

    /// Atomic `x[k] += v` through a compare-and-swap loop.
    #[inline]
    pub fn add(&self, k: usize, v: f64) {
        let cell = &self.cells[k];
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let new = (f64::from_bits(cur) + v).to_bits();
            match cell.compare_exchange_weak(cur, new, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }

    pub fn snapshot(&self) -> Vec<f64> {
        (0..self.cells.len()).map(|k| self.load(k)).collect()
    }
}

impl Coords for AtomicF64s {
    #[inline]
    fn coord(&self, k: usize) -> f64 {
        self.load(k)
    }
}

/// Test-and-test-and-set spinlock that yields after a bounded number of spins.
#[derive(Default)]
pub struct SpinLock {
    held: AtomicBool,
}

const SPINS_BEFORE_YIELD: u32 = 64;

impl SpinLock {
    pub fn new() -> Self {
        SpinLock::default()
    }

    pub fn lock(&self) -> SpinGuard<'_> {
        let mut spins = 0;
        loop {
            if !self.held.load(Ordering::Relaxed)
                && self
                    .held
                    .compare_exchange_weak(false, true, Ordering::Acquire, Ordering::Relaxed)
                    .is_ok()
            {
                return SpinGuard { lock: self };
            }
            if spins < SPINS_BEFORE_YIELD {
                spins += 1;
                std::hint::spin_loop();
            } else {
                thread::yield_now();
            }
        }
    }

    pub fn try_lock(&self) -> Option<SpinGuard<'_>> {
        self.held
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .ok()
            .map(|_| SpinGuard { lock: self })
    }
}

pub struct SpinGuard<'a> {
    lock: &'a SpinLock,
}

impl Drop for SpinGuard<'_> {
    fn drop(&mut self) {
        self.lock.held.store(false, Ordering::Release);
    }
}

/// The iterate shared by all workers: coordinates, optional auxiliary state
/// and one lock per block.
pub struct SharedIterate {
    pub x: AtomicF64s,
    pub aux: AtomicF64s,
    locks: Vec<SpinLock>,
    partition: BlockPartition,
}

impl SharedIterate {
    pub fn new(x: &[f64], aux: &[f64], partition: &BlockPartition) -> Result<Self> {
        if x.len() != partition.dim() {
            return Err(Error::Dimension(format!(
                "iterate has length {}, partition has dimension {}",
                x.len(),
                partition.dim()
            )));
        }
        Ok(SharedIterate {
            x: AtomicF64s::new(x),
            aux: AtomicF64s::new(aux),
            locks: (0..partition.num_blocks()).map(|_| SpinLock::new()).collect(),
            partition: partition.clone(),
        })
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn lock(&self, i: usize) -> SpinGuard<'_> {
        self.locks[i].lock()
    }

    /// Locks two blocks in index order.
    pub fn lock_pair(&self, i: usize, j: usize) -> (SpinGuard<'_>, SpinGuard<'_>) {
        let (a, b) = (i.min(j), i.max(j));
        let ga = self.locks[a].lock();
        let gb = self.locks[b].lock();
        (ga, gb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockMode {
    /// Both block locks held across all three steps.
    DoubleLock,
    /// Master lock for steps 1 and 3, slave lock for step 2.
    SingleLock,
    /// Atomic adds only.
    LockFree,
}

impl LockMode {
    pub const ALL: [LockMode; 3] = [LockMode::DoubleLock, LockMode::SingleLock, LockMode::LockFree];

    pub fn name(self) -> &'static str {
        match self {
            LockMode::DoubleLock => "double",
            LockMode::SingleLock => "single",
            LockMode::LockFree => "free",
        }
    }
}

impl fmt::Display for LockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(LockMode::DoubleLock),
            "single" => Ok(LockMode::SingleLock),
            "free" => Ok(LockMode::LockFree),
            _ => Err(Error::Config(format!(
                "unknown lock mode '{s}' (expected double, single or free)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AsyncStop {
    /// Stop once `f_0 - f > θ (f_0 - f*)`.
    GapFraction { theta: f64, f_star: f64 },
    /// Stop after exactly this many pair updates.
    MaxUpdates(u64),
}

#[derive(Clone, Debug)]
pub struct AsyncConfig {
    pub threads: usize,
    pub lock_mode: LockMode,
    /// Simulated latency added to steps 1 and 2 of every update.
    pub artificial_delay: Duration,
    /// Constant step multiplier `α`; the pair step is `α / (L_i + L_j)`.
    pub alpha: f64,
    /// Staleness bound used only to report the admissible step size.
    pub staleness_cap: Option<usize>,
    pub stop: AsyncStop,
    pub seed: u64,
    pub max_wall_time: Duration,
    /// How often the monitor inspects the objective.
    pub monitor_interval: Duration,
    /// How often a paused snapshot is written to the trace.
    pub trace_interval: Duration,
    /// Keep per-worker sums of every applied increment.
    pub track_ledger: bool,
    pub wall_clock: bool,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            threads: 1,
            lock_mode: LockMode::LockFree,
            artificial_delay: Duration::ZERO,
            alpha: 1.0,
            staleness_cap: None,
            stop: AsyncStop::MaxUpdates(10_000),
            seed: 0,
            max_wall_time: Duration::from_secs(600),
            monitor_interval: Duration::from_millis(1),
            trace_interval: Duration::from_millis(100),
            track_ledger: true,
            wall_clock: true,
        }
    }
}

impl AsyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("at least one worker thread is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.alpha)));
        }
        if let AsyncStop::GapFraction { theta, f_star } = self.stop {
            if !(theta > 0.0 && theta < 1.0) || !f_star.is_finite() {
                return Err(Error::Config(format!(
                    "gap fraction must lie in (0, 1) with finite f*, got θ = {theta}, f* = {f_star}"
                )));
            }
        }
        if self.monitor_interval.is_zero() || self.trace_interval.is_zero() {
            return Err(Error::Config("monitor and trace intervals must be positive".into()));
        }
        Ok(())
    }
}

/// Largest step multiplier admitted by the asynchronous convergence analysis
/// for staleness `τ` and growth parameter `ρ > 1`:
/// `min(2/(1+τ+τρ^τ), (ρ-1)/(√2(τ+2)(ρ^{τ+1}+ρ)))`.
pub fn max_async_step(tau: usize, rho: f64) -> Result<f64> {
    if !(rho > 1.0) {
        return Err(Error::Config(format!("ρ must exceed 1, got {rho}")));
    }
    let t = tau as f64;
    let first = 2.0 / (1.0 + t + t * rho.powf(t));
    let second = (rho - 1.0) / (2f64.sqrt() * (t + 2.0) * (rho.powf(t + 1.0) + rho));
    Ok(first.min(second))
}

/// Empirical distribution of `apply_counter - read_counter` over all updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StalenessStats {
    /// `histogram[s]` counts updates with staleness `s`.
    pub histogram: Vec<u64>,
    pub max: u64,
    pub mean: f64,
    pub samples: u64,
}

/// Summarizes a staleness histogram.
pub fn staleness_stats(histogram: &[u64]) -> StalenessStats {
    if histogram.is_empty() {
        return StalenessStats::default();
    }
    let samples: u64 = histogram.iter().sum();
    let max = histogram.iter().rposition(|&c| c > 0).unwrap_or(0) as u64;
    let total: f64 = histogram
        .iter()
        .enumerate()
        .map(|(s, &c)| s as f64 * c as f64)
        .sum();
    StalenessStats {
        histogram: histogram[..=max as usize].to_vec(),
        max,
        mean: if samples > 0 { total / samples as f64 } else { 0.0 },
        samples,
    }
}

#[derive(Clone, Debug)]
pub struct AsyncOutcome {
    pub iterate: Iterate,
    pub trace: Trace,
    pub staleness: StalenessStats,
    /// Coordinatewise sum of all applied increments, when tracked.
    pub ledger: Option<Vec<f64>>,
    pub updates: u64,
    pub wall_s: f64,
}

/// Per-worker scratch space for [`master_slave_update`].
pub struct Workspace {
    g_i: Vec<f64>,
    g_j: Vec<f64>,
    x_i: Vec<f64>,
    x_j: Vec<f64>,
    d_i: Vec<f64>,
    d_j: Vec<f64>,
    ledger: Option<Vec<f64>>,
}

impl Workspace {
    pub fn new(partition: &BlockPartition, track_ledger: bool) -> Self {
        let n = partition.max_block_size();
        Workspace {
            g_i: vec![0.0; n],
            g_j: vec![0.0; n],
            x_i: vec![0.0; n],
            x_j: vec![0.0; n],
            d_i: vec![0.0; n],
            d_j: vec![0.0; n],
            ledger: track_ledger.then(|| vec![0.0; partition.dim()]),
        }
    }

    pub fn ledger(&self) -> Option<&[f64]> {
        self.ledger.as_deref()
    }
}

/// Increments applied by one master/slave update, in edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedIncrement {
    pub d_i: Vec<f64>,
    pub d_j: Vec<f64>,
    pub staleness: u64,
}

/// Hooks used by the update; tests use them to force interleavings.
pub trait UpdateHooks {
    fn after_step1(&self) {}
    fn after_step2(&self) {}
}

pub struct NoHooks;
impl UpdateHooks for NoHooks {}

/// Context shared by every update of a run.
pub struct UpdateContext<'a, O: Objective> {
    pub objective: &'a O,
    pub solver: &'a PairSolver,
    pub shared: &'a SharedIterate,
    pub lock_mode: LockMode,
    pub alpha: f64,
    pub delay: Duration,
    /// Global count of applied updates, used to measure staleness.
    pub counter: &'a AtomicU64,
}

fn pause(delay: Duration) {
    if !delay.is_zero() {
        thread::sleep(delay);
    }
}

/// One master/slave pair update on edge `e = (i, j)`.
///
/// 1. read the master's gradient inputs;
/// 2. read the slave, solve the pair problem and apply the slave increment;
/// 3. apply the master increment computed in step 2.
///
/// Returns the increments actually applied.
pub fn master_slave_update<O: Objective, H: UpdateHooks>(
    ctx: &UpdateContext<'_, O>,
    e: usize,
    (i, j): (usize, usize),
    master_is_i: bool,
    ws: &mut Workspace,
    hooks: &H,
) -> Result<AppliedIncrement> {
    let shared = ctx.shared;
    let p = shared.partition();
    let (m, s) = if master_is_i { (i, j) } else { (j, i) };
    let lip = ctx.objective.block_lipschitz();
    let alpha_eff = ctx.alpha / (lip[i] + lip[j]);
    let (ni, nj) = (p.size(i), p.size(j));

    let _both = match ctx.lock_mode {
        LockMode::DoubleLock => Some(shared.lock_pair(i, j)),
        _ => None,
    };

    // Step 1: master-side reads.
    let read_counter;
    {
        let _g = (ctx.lock_mode == LockMode::SingleLock).then(|| shared.lock(m));
        read_counter = ctx.counter.load(Ordering::SeqCst);
        read_block(ctx, m, master_is_i, ws);
        pause(ctx.delay);
    }
    hooks.after_step1();

    // Step 2: slave-side reads, the pair solve, and the slave write.
    {
        let _g = (ctx.lock_mode == LockMode::SingleLock).then(|| shared.lock(s));
        read_block(ctx, s, !master_is_i, ws);
        ctx.solver.solve(
            e,
            (i, j),
            &ws.g_i[..ni],
            &ws.g_j[..nj],
            &ws.x_i[..ni],
            &ws.x_j[..nj],
            alpha_eff,
            &mut ws.d_i[..ni],
            &mut ws.d_j[..nj],
        )?;
        pause(ctx.delay);
        apply_block(ctx, s, !master_is_i, ws)?;
    }
    hooks.after_step2();

    // Step 3: master write, using nothing read after step 1 except for clamping.
    {
        let _g = (ctx.lock_mode == LockMode::SingleLock).then(|| shared.lock(m));
        apply_block(ctx, m, master_is_i, ws)?;
    }
    let apply_counter = ctx.counter.fetch_add(1, Ordering::SeqCst);
    Ok(AppliedIncrement {
        d_i: ws.d_i[..ni].to_vec(),
        d_j: ws.d_j[..nj].to_vec(),
        staleness: apply_counter.saturating_sub(read_counter),
    })
}

fn read_block<O: Objective>(ctx: &UpdateContext<'_, O>, b: usize, first: bool, ws: &mut Workspace) {
    let shared = ctx.shared;
    let range = shared.partition().range(b);
    let n = range.len();
    let (g, x) = if first {
        (&mut ws.g_i[..n], &mut ws.x_i[..n])
    } else {
        (&mut ws.g_j[..n], &mut ws.x_j[..n])
    };
    ctx.objective.partial_grad(b, &shared.x, &shared.aux, g);
    for (k, c) in range.enumerate() {
        x[k] = shared.x.load(c);
    }
}

fn apply_block<O: Objective>(
    ctx: &UpdateContext<'_, O>,
    b: usize,
    first: bool,
    ws: &mut Workspace,
) -> Result<()> {
    let shared = ctx.shared;
    let range = shared.partition().range(b);
    let n = range.len();
    let d = if first { &mut ws.d_i[..n] } else { &mut ws.d_j[..n] };
    let bounds = ctx.solver.box_of(b);
    for (k, c) in range.clone().enumerate() {
        if let Some((lo, hi)) = bounds {
            // Only reached under DoubleLock, so the block value is stable here.
            let old = shared.x.load(c);
            d[k] = (old + d[k]).clamp(lo, hi) - old;
        }
        if !d[k].is_finite() {
            return Err(Error::Numerics(format!("non-finite increment on block {b}")));
        }
        if d[k] != 0.0 {
            shared.x.add(c, d[k]);
        }
    }
    if let Some(ledger) = ws.ledger.as_mut() {
        for (k, c) in range.enumerate() {
            ledger[c] += d[k];
        }
    }
    ctx.objective
        .aux_increment(b, d, &mut |c, v| shared.aux.add(c, v));
    Ok(())
}

/// Coordination flags between the workers and the monitor.
struct Control {
    stop: AtomicBool,
    paused: AtomicBool,
    in_flight: AtomicUsize,
    claimed: AtomicU64,
    completed: AtomicU64,
}

impl Control {
    /// Registers an update unless the monitor has paused or stopped the run.
    fn enter(&self) -> bool {
        loop {
            if self.stop.load(Ordering::SeqCst) {
                return false;
            }
            self.in_flight.fetch_add(1, Ordering::SeqCst);
            if !self.paused.load(Ordering::SeqCst) {
                return true;
            }
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            while self.paused.load(Ordering::SeqCst) && !self.stop.load(Ordering::SeqCst) {
                thread::yield_now();
            }
        }
    }

    fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    /// Blocks new updates and waits until in-flight ones have finished.
    /// Returns false if the run was stopped meanwhile (a worker that unwinds
    /// mid-update never leaves).
    fn pause(&self) -> bool {
        self.paused.store(true, Ordering::SeqCst);
        while self.in_flight.load(Ordering::SeqCst) != 0 {
            if self.stop.load(Ordering::SeqCst) {
                return false;
            }
            thread::yield_now();
        }
        true
    }

    fn resume(&self) {
        self.paused.store(false, Ordering::SeqCst);
    }
}

/// Sets the stop flag if the worker unwinds.
struct PanicFlag<'a>(&'a AtomicBool);

impl Drop for PanicFlag<'_> {
    fn drop(&mut self) {
        if thread::panicking() {
            self.0.store(true, Ordering::SeqCst);
        }
    }
}

struct WorkerResult {
    histogram: Vec<u64>,
    ledger: Option<Vec<f64>>,
}

/// Worker `w` draws edges from stream `2w` and master coins from stream `2w + 1`
/// of the base seed, so worker 0 sees the same edge sequence as the sequential engine.
fn worker<O: Objective>(
    w: usize,
    ctx: &UpdateContext<'_, O>,
    graph: &CommGraph,
    control: &Control,
    config: &AsyncConfig,
) -> Result<WorkerResult> {
    let _flag = PanicFlag(&control.stop);
    let mut sampler = EdgeSampler::with_stream(graph, config.seed, 2 * w as u64);
    let mut coin = ChaCha8Rng::seed_from_u64(config.seed);
    coin.set_stream(2 * w as u64 + 1);
    let mut ws = Workspace::new(ctx.shared.partition(), config.track_ledger);
    let mut histogram = Vec::new();
    let limit = match config.stop {
        AsyncStop::MaxUpdates(n) => Some(n),
        AsyncStop::GapFraction { .. } => None,
    };
    while control.enter() {
        if let Some(n) = limit {
            if control.claimed.fetch_add(1, Ordering::SeqCst) >= n {
                control.leave();
                break;
            }
        }
        let e = sampler.next_index();
        let edge = graph.edge(e);
        let master_is_i = coin.gen::<bool>();
        let out = master_slave_update(ctx, e, edge, master_is_i, &mut ws, &NoHooks);
        control.completed.fetch_add(1, Ordering::SeqCst);
        control.leave();
        let inc = match out {
            Ok(inc) => inc,
            Err(err) => {
                control.stop.store(true, Ordering::SeqCst);
                return Err(err);
            }
        };
        let s = inc.staleness as usize;
        if histogram.len() <= s {
            histogram.resize(s + 1, 0);
        }
        histogram[s] += 1;
    }
    Ok(WorkerResult {
        histogram,
        ledger: ws.ledger,
    })
}

fn check_async_problem<O: Objective>(problem: &Problem<O>, config: &AsyncConfig, solver: &PairSolver) -> Result<()> {
    if problem.nonsmooth.is_zero() {
        return Ok(());
    }
    let boxed = (0..problem.constraints.num_blocks()).all(|i| solver.box_of(i).is_some());
    if boxed
        && config.lock_mode == LockMode::DoubleLock
        && problem.constraints.kind() == crate::model::ConstraintKind::SingleRow
    {
        return Ok(());
    }
    Err(Error::Config(
        "the asynchronous engine handles a nonsmooth term only for single-row box problems under double locking".into(),
    ))
}

fn composite_from<O: Objective>(problem: &Problem<O>, x: &[f64], aux: &[f64]) -> f64 {
    let f = if problem.objective.aux_len() > 0 {
        problem.objective.value_with_aux(x, aux)
    } else {
        problem.objective.value(x)
    };
    if problem.nonsmooth.is_zero() {
        f
    } else {
        f + problem.nonsmooth.value(x, problem.partition())
    }
}

/// Runs `config.threads` workers on the shared iterate until the stop rule holds.
pub fn run_async<O: Objective>(
    problem: &Problem<O>,
    graph: &CommGraph,
    config: &AsyncConfig,
) -> Result<AsyncOutcome> {
    config.validate()?;
    check_start(problem, graph)?;
    let solver = PairSolver::new(&problem.constraints, graph, &problem.nonsmooth)?;
    check_async_problem(problem, config, &solver)?;
    if let Some(tau) = config.staleness_cap {
        let bound = max_async_step(tau, 1.2)?;
        if config.alpha > bound {
            log::warn!("step {} exceeds the asynchronous bound {bound:.3e} for τ = {tau}", config.alpha);
        } else {
            log::info!("step {} within the asynchronous bound {bound:.3e} for τ = {tau}", config.alpha);
        }
    }

    let aux0 = problem.objective.build_aux(&problem.x0);
    let shared = SharedIterate::new(&problem.x0, &aux0, problem.partition())?;
    let counter = AtomicU64::new(0);
    let control = Control {
        stop: AtomicBool::new(false),
        paused: AtomicBool::new(false),
        in_flight: AtomicUsize::new(0),
        claimed: AtomicU64::new(0),
        completed: AtomicU64::new(0),
    };
    let ctx = UpdateContext {
        objective: &problem.objective,
        solver: &solver,
        shared: &shared,
        lock_mode: config.lock_mode,
        alpha: config.alpha,
        delay: config.artificial_delay,
        counter: &counter,
    };
    let f0 = problem.composite_value(&problem.x0);
    if !f0.is_finite() {
        return Err(Error::Numerics(format!("objective at the starting point is {f0}")));
    }
    let target = match config.stop {
        AsyncStop::GapFraction { theta, f_star } => Some(f0 - theta * (f0 - f_star)),
        AsyncStop::MaxUpdates(_) => None,
    };
    let reached = |f: f64| target.is_some_and(|t| f < t);

    let clock = Instant::now();
    let wall = |on: bool| if on { clock.elapsed().as_secs_f64() } else { 0.0 };
    let mut records = vec![TraceRecord {
        k: 0,
        wall_s: wall(config.wall_clock),
        objective: f0,
        feas_residual: feasibility_residual(&problem.constraints, &problem.x0)?,
        edge: None,
        best_objective: None,
    }];
    let monitor_error: Mutex<Option<Error>> = Mutex::new(None);

    let results: Vec<thread::Result<Result<WorkerResult>>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..config.threads)
            .map(|w| {
                let ctx = &ctx;
                let control = &control;
                scope.spawn(move || worker(w, ctx, graph, control, config))
            })
            .collect();

        let mut last_trace = Instant::now();
        loop {
            let finished = handles.iter().all(|h| h.is_finished());
            if finished || control.stop.load(Ordering::SeqCst) {
                break;
            }
            thread::sleep(config.monitor_interval);
            if clock.elapsed() > config.max_wall_time {
                *monitor_error.lock().unwrap() =
                    Some(Error::MaxWallTime(config.max_wall_time.as_secs_f64()));
                control.stop.store(true, Ordering::SeqCst);
                break;
            }
            let want_trace = last_trace.elapsed() >= config.trace_interval;
            let racy_hit = target.is_some() && {
                let x = shared.x.snapshot();
                let aux = shared.aux.snapshot();
                reached(composite_from(problem, &x, &aux))
            };
            if !(want_trace || racy_hit) {
                continue;
            }
            if !control.pause() {
                control.resume();
                break;
            }
            let x = shared.x.snapshot();
            let f = problem.composite_value(&x);
            let k = control.completed.load(Ordering::SeqCst);
            if want_trace {
                last_trace = Instant::now();
                let feas = feasibility_residual(&problem.constraints, &x).unwrap_or(f64::NAN);
                records.push(TraceRecord {
                    k,
                    wall_s: wall(config.wall_clock),
                    objective: f,
                    feas_residual: feas,
                    edge: None,
                    best_objective: None,
                });
            }
            if !f.is_finite() {
                *monitor_error.lock().unwrap() = Some(Error::Numerics(format!("objective became {f}")));
                control.stop.store(true, Ordering::SeqCst);
            } else if reached(f) {
                control.stop.store(true, Ordering::SeqCst);
            }
            control.resume();
        }
        handles.into_iter().map(|h| h.join()).collect()
    });
    let wall_s = clock.elapsed().as_secs_f64();

    let mut histogram: Vec<u64> = Vec::new();
    let mut ledger: Option<Vec<f64>> = config.track_ledger.then(|| vec![0.0; problem.partition().dim()]);
    let mut first_error = None;
    for r in results {
        match r {
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                first_error.get_or_insert(Error::Engine(format!("worker panicked: {msg}")));
            }
            Ok(Err(e)) => {
                first_error.get_or_insert(e);
            }
            Ok(Ok(w)) => {
                if histogram.len() < w.histogram.len() {
                    histogram.resize(w.histogram.len(), 0);
                }
                for (s, c) in w.histogram.iter().enumerate() {
                    histogram[s] += c;
                }
                if let (Some(total), Some(part)) = (ledger.as_mut(), w.ledger) {
                    for (t, p) in total.iter_mut().zip(part) {
                        *t += p;
                    }
                }
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    if let Some(e) = monitor_error.into_inner().unwrap() {
        return Err(e);
    }

    let x = shared.x.snapshot();
    let objective = problem.composite_value(&x);
    let feasibility = feasibility_residual(&problem.constraints, &x)?;
    let updates = control.completed.load(Ordering::SeqCst);
    let stop_reason = if reached(objective) {
        StopReason::GapReached
    } else {
        StopReason::MaxIters
    };
    records.push(TraceRecord {
        k: updates,
        wall_s: wall(config.wall_clock),
        objective,
        feas_residual: feasibility,
        edge: None,
        best_objective: None,
    });
    let staleness = staleness_stats(&histogram);
    log::debug!(
        "async run: {} threads, {} locking, {updates} updates in {wall_s:.3} s, τ̂ = {}",
        config.threads,
        config.lock_mode,
        staleness.max
    );
    Ok(AsyncOutcome {
        iterate: Iterate {
            x,
            objective,
            feasibility,
        },
        trace: Trace {
            records,
            summary: TraceSummary {
                iters: updates,
                final_objective: objective,
                stop_reason,
            },
        },
        staleness,
        ledger,
        updates,
        wall_s,
    })
}
