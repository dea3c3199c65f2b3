//! Deterministic discrete-event simulator of the asynchronous server/worker
//! protocol.
//!
//! At time zero every worker starts a gradient at `x₀`. The earliest finish
//! event is popped (ties broken by worker id), the gradient is formed at the
//! iterate the worker was given using that worker's own sample stream, the
//! method decides whether to use it, and the worker is immediately
//! re-dispatched at the server's current iterate. Communication is free.
//!
//! Iterate snapshots are reference counted by in-flight workers. Under a
//! threshold rule a snapshot that has fallen `R_k` or more updates behind can
//! never be accepted (thresholds never decrease), so it is released early and
//! the arriving gradient is discarded without being evaluated.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmo::{NormSpec, ParamVector};
use crate::optimizer::{MomentumRule, ServerState, StepCoefficients};
use crate::problems::{measure, Problem, SampleRng};
use crate::schedules::Schedule;

/// Measured mean NanoChat gradient times (seconds) on seven GPUs.
pub const GPU_TABLE_SECONDS: [f64; 7] = [0.01418, 0.02274, 0.02653, 0.03842, 0.06415, 0.12860, 0.21520];

/// Default half-normal runtime noise, as a fraction of the base runtime.
pub const DEFAULT_NOISE_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// `g_i = 1`.
    Similar,
    /// `g_i = 1 + √i`.
    Sublinear,
    /// `g_i = √(i + 1)`.
    Sqrt,
    /// `g_i = 1 + i`.
    Linear,
    /// The seven measured GPU means in cycle; `base_scale` is ignored.
    GpuTable,
    /// Explicit per-worker base times (seconds), scaled by `base_scale`.
    Explicit,
}

/// Worker runtime model: base times from a profile, plus half-normal noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerProfile {
    pub kind: ProfileKind,
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_base_scale")]
    pub base_scale: f64,
    #[serde(default = "default_noise_frac")]
    pub noise_frac: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
}

fn default_base_scale() -> f64 {
    1.0
}

fn default_noise_frac() -> f64 {
    DEFAULT_NOISE_FRAC
}

impl WorkerProfile {
    pub fn new(kind: ProfileKind, n: usize, base_scale: f64, noise_frac: f64) -> Self {
        Self { kind, n, base_scale, noise_frac, times: Vec::new() }
    }

    pub fn explicit(times: Vec<f64>, noise_frac: f64) -> Self {
        Self { kind: ProfileKind::Explicit, n: times.len(), base_scale: 1.0, noise_frac, times }
    }

    /// Sorted base runtimes, one per worker.
    pub fn base_times(&self) -> Result<Vec<f64>> {
        if !(self.noise_frac >= 0.0 && self.noise_frac.is_finite()) {
            return Err(Error::invalid(format!("noise_frac must be nonnegative, got {}", self.noise_frac)));
        }
        if self.kind == ProfileKind::Explicit {
            if self.n != 0 && self.n != self.times.len() {
                return Err(Error::invalid(format!(
                    "explicit profile lists {} times but n = {}",
                    self.times.len(),
                    self.n
                )));
            }
            let mut times: Vec<f64> = self.times.iter().map(|t| t * self.base_scale).collect();
            if times.is_empty() || times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::invalid("explicit times must be non-empty, positive and finite"));
            }
            times.sort_by(f64::total_cmp);
            return Ok(times);
        }
        make_profile(self.kind, self.n, self.base_scale)
    }
}

/// Base runtimes for worker `i = 0..n−1`, sorted ascending.
pub fn make_profile(kind: ProfileKind, n: usize, base_scale: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("profile needs at least one worker"));
    }
    if !(base_scale > 0.0 && base_scale.is_finite()) {
        return Err(Error::invalid(format!("base_scale must be positive, got {base_scale}")));
    }
    let mut times: Vec<f64> = (0..n)
        .map(|i| {
            let i_f = i as f64;
            match kind {
                ProfileKind::Similar => base_scale,
                ProfileKind::Sublinear => base_scale * (1.0 + i_f.sqrt()),
                ProfileKind::Sqrt => base_scale * (i_f + 1.0).sqrt(),
                ProfileKind::Linear => base_scale * (1.0 + i_f),
                ProfileKind::GpuTable => GPU_TABLE_SECONDS[i % GPU_TABLE_SECONDS.len()],
                ProfileKind::Explicit => f64::NAN,
            }
        })
        .collect();
    if kind == ProfileKind::Explicit {
        return Err(Error::invalid("explicit profiles carry their own times"));
    }
    times.sort_by(f64::total_cmp);
    Ok(times)
}

/// `base + |Z|·noise_frac·base`; no draw when `noise_frac` is zero.
pub fn sample_runtime(base: f64, noise_frac: f64, rng: &mut SampleRng) -> f64 {
    if noise_frac == 0.0 {
        return base;
    }
    let z: f64 = StandardNormal.sample(rng);
    base + z.abs() * noise_frac * base
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    /// Accept iff `δ < R_k`, with `R_k` from the schedule.
    Ringmaster,
    /// Accept only fresh gradients (`δ = 0`).
    Synchronous,
    /// Average `batch` fresh gradients per update; stale ones are dropped and
    /// do not count toward the batch.
    Rennala { batch: usize },
    /// Accept everything with stepsize `η/(1 + δ)`.
    DelayAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Process arrivals with finish time ≤ horizon (seconds).
    Horizon(f64),
    /// Stop once this many updates have been applied.
    MaxUpdates(u64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub method: Method,
    pub schedule: Schedule,
    pub momentum: MomentumRule,
    pub norm: NormSpec,
    pub profile: WorkerProfile,
    pub stop: StopCondition,
    pub seed: u64,
}

/// One row per arrival event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub sim_time_s: f64,
    pub event_index: u64,
    pub worker: usize,
    pub delay: u64,
    pub accepted: bool,
    /// Server iteration after processing the arrival.
    pub iteration: u64,
    /// `f(x) − f*` at the server's iterate after processing.
    pub loss: f64,
    pub grad_dual_norm: f64,
    pub rejected_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InFlight {
    pub worker: usize,
    pub computed_at: u64,
    pub dispatch_time: f64,
    pub finish_time: f64,
    /// Released early: the gradient will be discarded on arrival.
    pub doomed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    finish_time: f64,
    worker: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest (time, worker)
    fn cmp(&self, other: &Self) -> Ordering {
        other.finish_time.total_cmp(&self.finish_time).then_with(|| other.worker.cmp(&self.worker))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Snapshot {
    x: Vec<f64>,
    refs: usize,
}

pub struct Simulation<'p> {
    problem: &'p dyn Problem,
    cfg: SimConfig,
    base_times: Vec<f64>,
    state: ServerState,
    queue: BinaryHeap<Event>,
    in_flight: Vec<InFlight>,
    snapshots: BTreeMap<u64, Snapshot>,
    grad_rngs: Vec<SampleRng>,
    time_rngs: Vec<SampleRng>,
    batch: Vec<(u64, ParamVector)>,
    accepted_log: Option<Vec<ParamVector>>,
    now: f64,
    events: u64,
    max_snapshots: usize,
}

impl<'p> Simulation<'p> {
    pub fn new(problem: &'p dyn Problem, cfg: SimConfig) -> Result<Self> {
        let base_times = cfg.profile.base_times()?;
        cfg.schedule.validate()?;
        cfg.momentum.validate()?;
        cfg.norm.check_layout(problem.layout())?;
        match cfg.stop {
            StopCondition::Horizon(h) if !(h > 0.0 && h.is_finite()) => {
                return Err(Error::invalid(format!("horizon must be positive, got {h}")));
            }
            StopCondition::MaxUpdates(0) => return Err(Error::invalid("max updates must be positive")),
            _ => {}
        }
        if let Method::Rennala { batch: 0 } = cfg.method {
            return Err(Error::invalid("batch size must be positive"));
        }
        let n = base_times.len();
        let stream = |s: u64| {
            let mut rng = SampleRng::seed_from_u64(cfg.seed);
            rng.set_stream(s);
            rng
        };
        let grad_rngs = (0..n as u64).map(|w| stream(2 * w)).collect();
        let time_rngs = (0..n as u64).map(|w| stream(2 * w + 1)).collect();
        let mut sim = Self {
            problem,
            state: ServerState::new(problem.initial_point()),
            cfg,
            base_times,
            queue: BinaryHeap::with_capacity(n),
            in_flight: Vec::with_capacity(n),
            snapshots: BTreeMap::new(),
            grad_rngs,
            time_rngs,
            batch: Vec::new(),
            accepted_log: None,
            now: 0.0,
            events: 0,
            max_snapshots: 0,
        };
        for w in 0..n {
            let record = sim.dispatch(w);
            sim.in_flight.push(record);
        }
        Ok(sim)
    }

    /// Keeps a copy of every gradient that produced an update, in order.
    pub fn record_accepted(&mut self) {
        self.accepted_log.get_or_insert_with(Vec::new);
    }

    pub fn accepted_gradients(&self) -> Option<&[ParamVector]> {
        self.accepted_log.as_deref()
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn base_times(&self) -> &[f64] {
        &self.base_times
    }

    pub fn in_flight(&self) -> &[InFlight] {
        &self.in_flight
    }

    pub fn queued_events(&self) -> usize {
        self.queue.len()
    }

    pub fn retained_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn max_retained_snapshots(&self) -> usize {
        self.max_snapshots
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn dispatch(&mut self, worker: usize) -> InFlight {
        let k = self.state.k();
        let x = self.state.x();
        self.snapshots.entry(k).or_insert_with(|| Snapshot { x: x.as_slice().to_vec(), refs: 0 }).refs += 1;
        self.max_snapshots = self.max_snapshots.max(self.snapshots.len());
        let runtime = sample_runtime(self.base_times[worker], self.cfg.profile.noise_frac, &mut self.time_rngs[worker]);
        let finish_time = self.now + runtime;
        self.queue.push(Event { finish_time, worker });
        InFlight { worker, computed_at: k, dispatch_time: self.now, finish_time, doomed: false }
    }

    fn release(&mut self, computed_at: u64) {
        if let Some(snap) = self.snapshots.get_mut(&computed_at) {
            snap.refs -= 1;
            if snap.refs == 0 {
                self.snapshots.remove(&computed_at);
            }
        }
    }

    /// Largest delay that can still be used at the current `k`, if any.
    fn usable_delay(&self) -> Option<u64> {
        match self.cfg.method {
            Method::Ringmaster => Some(self.cfg.schedule.threshold(self.state.k()) - 1),
            Method::Synchronous | Method::Rennala { .. } => Some(0),
            Method::DelayAdaptive => None,
        }
    }

    fn prune_stale(&mut self) {
        let Some(max_delay) = self.usable_delay() else { return };
        let k = self.state.k();
        for i in 0..self.in_flight.len() {
            let f = self.in_flight[i];
            if !f.doomed && k - f.computed_at > max_delay {
                self.in_flight[i].doomed = true;
                self.release(f.computed_at);
            }
        }
    }

    fn stop_reached(&self) -> bool {
        match self.cfg.stop {
            StopCondition::MaxUpdates(k) => self.state.k() >= k,
            StopCondition::Horizon(h) => self.queue.peek().is_none_or(|e| e.finish_time > h),
        }
    }

    fn gradient_for(&mut self, flight: &InFlight) -> Result<ParamVector> {
        let snap = self
            .snapshots
            .get(&flight.computed_at)
            .ok_or_else(|| Error::ProtocolViolation(format!("missing snapshot for iterate {}", flight.computed_at)))?;
        let g = self.problem.stochastic_gradient(&snap.x, &mut self.grad_rngs[flight.worker]);
        ParamVector::new(g, self.problem.layout().clone())
    }

    fn log_update(&mut self, g: &ParamVector) {
        if let Some(log) = self.accepted_log.as_mut() {
            log.push(g.clone());
        }
    }

    /// Processes the next arrival; `None` once the stop condition holds.
    pub fn step(&mut self) -> Option<Result<TraceRow>> {
        if self.stop_reached() {
            return None;
        }
        Some(self.process_next())
    }

    fn process_next(&mut self) -> Result<TraceRow> {
        let event = self.queue.pop().expect("one event per worker");
        self.now = event.finish_time;
        let flight = self.in_flight[event.worker];
        let k = self.state.k();
        let decision = self.state.accept_gradient(flight.computed_at, self.acceptance_threshold(k))?;
        let sched = self.cfg.schedule;
        let coeffs = StepCoefficients::at(&sched, k);

        let accepted = if decision.accepted && !flight.doomed {
            let g = self.gradient_for(&flight)?;
            self.release(flight.computed_at);
            match self.cfg.method {
                Method::Ringmaster | Method::Synchronous => {
                    self.state.apply_accepted(&g, &self.cfg.momentum, coeffs, &self.cfg.norm)?;
                    self.log_update(&g);
                }
                Method::DelayAdaptive => {
                    self.state.baseline_delay_adaptive_step(
                        &g,
                        decision.delay,
                        &self.cfg.momentum,
                        coeffs,
                        &self.cfg.norm,
                    )?;
                    self.log_update(&g);
                }
                Method::Rennala { batch } => {
                    self.batch.push((flight.computed_at, g));
                    if self.batch.len() == batch {
                        let grads = std::mem::take(&mut self.batch);
                        self.state.baseline_rennala_step(&grads, batch, &self.cfg.momentum, coeffs, &self.cfg.norm)?;
                        if let Some(log) = self.accepted_log.as_mut() {
                            log.extend(grads.into_iter().map(|(_, g)| g));
                        }
                    }
                }
            }
            true
        } else {
            if !flight.doomed {
                self.release(flight.computed_at);
            }
            self.state.reject_gradient();
            false
        };

        if self.state.k() > k {
            self.prune_stale();
        }
        let record = self.dispatch(event.worker);
        self.in_flight[event.worker] = record;

        let (loss, grad_dual_norm) = measure(self.problem, self.state.x(), &self.cfg.norm)?;
        let row = TraceRow {
            sim_time_s: self.now,
            event_index: self.events,
            worker: event.worker,
            delay: decision.delay,
            accepted,
            iteration: self.state.k(),
            loss,
            grad_dual_norm,
            rejected_total: self.state.total_rejected(),
        };
        self.events += 1;
        Ok(row)
    }

    /// Threshold used for the accept test at server iteration `k`.
    pub fn acceptance_threshold(&self, k: u64) -> u64 {
        match self.cfg.method {
            Method::Ringmaster => self.cfg.schedule.threshold(k),
            Method::Synchronous | Method::Rennala { .. } => 1,
            Method::DelayAdaptive => u64::MAX,
        }
    }

    /// Runs to the stop condition and returns the full trace.
    pub fn run_to_end(&mut self) -> Result<Vec<TraceRow>> {
        let mut rows = Vec::new();
        while let Some(row) = self.step() {
            rows.push(row?);
        }
        Ok(rows)
    }
}

/// Runs one simulation and returns its trace.
pub fn run(problem: &dyn Problem, cfg: SimConfig) -> Result<Vec<TraceRow>> {
    Simulation::new(problem, cfg)?.run_to_end()
}
