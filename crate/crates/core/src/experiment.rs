//! Experiment configuration, grid expansion and run summaries.
//!
//! A config is one TOML document. Every field except `momentum` and `stop`
//! has a default; unknown keys are rejected. Schedule parameters may be a
//! single value or a list, and lists expand into a Cartesian grid:
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! kind = "quadratic"   # or "matrix_toy" with rows, cols, noise_std, target_seed
//! d = 64
//! noise_std = 0.01
//!
//! [method]
//! kind = "ringmaster_fixed"   # ringmaster_agnostic | synchronous | rennala | delay_adaptive
//!
//! [momentum]
//! kind = "muon_ema"           # or "theory_averaging"
//! beta = 0.95
//! nesterov = true
//!
//! [schedule]
//! eta = [0.008, 0.04, 0.2]
//! threshold = [1, 2, 4, 8]
//!
//! [profile]
//! kind = "linear"
//! n = 8
//!
//! [stop]
//! horizon_s = 200.0           # or max_k = 1000
//! ```

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmo::{NormKind, NormSpec, SpectralBackend};
use crate::optimizer::MomentumRule;
use crate::problems::{measure, MatrixToy, Problem, Quadratic};
use crate::schedules::{
    fixed_schedule, iteration_complexity_fixed, AgnosticSchedule, AgnosticVariant, FixedSchedule, ProblemConstants,
    Schedule,
};
use crate::sim::{self, Method, ProfileKind, SimConfig, StopCondition, TraceRow, WorkerProfile};
use crate::timebounds::{
    harmonic_prefix, recursion_fixed_universal, recursion_sqrt_universal, sqrt_blocks, sqrt_time_bound, t_fixed,
    t_universal, total_time_fixed, verify_window_bound, FixedTimes, RateFunctions, ThresholdLevel, WindowReport,
};

pub const DEFAULT_ETA: f64 = 0.04;
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_NOISE_STD: f64 = 0.01;
pub const DEFAULT_WORKERS: usize = 8;
pub const DEFAULT_BOUND_ITERATIONS: u64 = 1000;

/// A single value or a list of values to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(vs) => vs.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::One(_) => 1,
            Axis::Many(vs) => vs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ProblemConfig {
    Quadratic {
        #[serde(default = "default_dim")]
        d: usize,
        #[serde(default = "default_noise_std")]
        noise_std: f64,
    },
    MatrixToy {
        rows: usize,
        cols: usize,
        #[serde(default = "default_noise_std")]
        noise_std: f64,
        /// Seed of the random target matrix.
        #[serde(default)]
        target_seed: u64,
    },
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Quadratic { d: DEFAULT_DIM, noise_std: DEFAULT_NOISE_STD }
    }
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_noise_std() -> f64 {
    DEFAULT_NOISE_STD
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match *self {
            ProblemConfig::Quadratic { d, noise_std } => Box::new(Quadratic::new(d, noise_std)?),
            ProblemConfig::MatrixToy { rows, cols, noise_std, target_seed } => {
                Box::new(MatrixToy::new(rows, cols, noise_std, target_seed)?)
            }
        })
    }
}

// Field-less variants use `{}` so unknown keys next to `kind` are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MethodConfig {
    /// Constant `(η, R)`, tuned by grid, or the theory schedule when
    /// `schedule.theory_k` is set.
    RingmasterFixed {},
    /// `η_k` decaying from the scale `schedule.eta`, `R_k = max{1, ⌊√k⌋}`.
    RingmasterAgnostic {
        #[serde(default)]
        variant: AgnosticVariant,
    },
    Synchronous {},
    Rennala { batch: Axis<usize> },
    DelayAdaptive {},
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig::RingmasterFixed {}
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    Euclidean,
    MaxAbs,
    /// Spectral on matrix blocks, Euclidean on vector blocks.
    Spectral,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(default)]
    pub kind: NormChoice,
    #[serde(default)]
    pub spectral_backend: SpectralBackend,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Stepsize, or the scale of the agnostic stepsize. Default `0.04`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Axis<f64>>,
    /// Delay threshold `R` for the fixed Ringmaster schedule. Default `1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Axis<u64>>,
    /// Derive `(α, R, η)` from the problem constants for this many
    /// iterations instead of using `eta` and `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_k: Option<u64>,
}

/// Exactly one of the two fields must be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_k: Option<u64>,
}

impl StopConfig {
    pub fn condition(&self) -> Result<StopCondition> {
        match (self.horizon_s, self.max_k) {
            (Some(h), None) => Ok(StopCondition::Horizon(h)),
            (None, Some(k)) => Ok(StopCondition::MaxUpdates(k)),
            _ => Err(Error::invalid("stop needs exactly one of horizon_s and max_k")),
        }
    }
}

/// Settings for the `bounds` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// `K`. Default 1000.
    #[serde(default = "default_bound_iterations")]
    pub iterations: u64,
    /// `R`; defaults to the single configured threshold (or 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    /// Universal-model rates, one list of `[start_time, rate]` per worker.
    /// Defaults to `p_i ≡ 1/τ_i` from the profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateFunctions>,
    /// Target accuracy for the iteration-complexity estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Simulate `K` noise-free updates and check every window of `R`.
    #[serde(default = "default_true")]
    pub verify_window: bool,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { iterations: DEFAULT_BOUND_ITERATIONS, threshold: None, rates: None, eps: None, verify_window: true }
    }
}

fn default_bound_iterations() -> u64 {
    DEFAULT_BOUND_ITERATIONS
}

fn default_true() -> bool {
    true
}

fn default_profile() -> WorkerProfile {
    WorkerProfile::new(ProfileKind::Similar, DEFAULT_WORKERS, 1.0, sim::DEFAULT_NOISE_FRAC)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory for traces and summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub method: MethodConfig,
    pub momentum: MomentumRule,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_profile")]
    pub profile: WorkerProfile,
    pub stop: StopConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
}

/// One point of the grid. Fields a method does not use are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(eta) = self.eta {
            parts.push(format!("eta={eta}"));
        }
        if let Some(r) = self.threshold {
            parts.push(format!("R={r}"));
        }
        if let Some(b) = self.batch {
            parts.push(format!("B={b}"));
        }
        if parts.is_empty() {
            parts.push("theory".to_owned());
        }
        f.write_str(&parts.join(","))
    }
}

impl Cell {
    /// File-name friendly label.
    pub fn slug(&self) -> String {
        self.to_string().replace(',', "_").replace('=', "")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub cell: Cell,
    pub final_loss: f64,
    pub min_grad_dual_norm: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub arrivals: u64,
    pub iterations: u64,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub trace: Vec<TraceRow>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: Cell,
    pub final_loss: f64,
    pub min_grad_dual_norm: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub cell: Cell,
    pub error: String,
}

/// Completed cells sorted by final loss (ascending), plus failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub rows: Vec<GridRow>,
    pub failures: Vec<GridFailure>,
}

impl GridTable {
    pub fn from_runs(runs: &[(Cell, Result<CellRun>)]) -> Self {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (cell, run) in runs {
            match run {
                Ok(r) => rows.push(GridRow {
                    cell: *cell,
                    final_loss: r.summary.final_loss,
                    min_grad_dual_norm: r.summary.min_grad_dual_norm,
                    accepted: r.summary.accepted,
                    rejected: r.summary.rejected,
                    best: false,
                }),
                Err(e) => failures.push(GridFailure { cell: *cell, error: e.to_string() }),
            }
        }
        // NaN losses sort last
        rows.sort_by(|a, b| nan_last(a.final_loss).total_cmp(&nan_last(b.final_loss)));
        if let Some(first) = rows.first_mut().filter(|r| r.final_loss.is_finite()) {
            first.best = true;
        }
        Self { rows, failures }
    }

    pub fn best(&self) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.best)
    }
}

fn nan_last(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.stop.condition()?;
        self.momentum.validate()?;
        self.cells()?;
        Ok(())
    }

    fn eta_axis(&self) -> Axis<f64> {
        self.schedule.eta.clone().unwrap_or(Axis::One(DEFAULT_ETA))
    }

    fn threshold_axis(&self) -> Axis<u64> {
        self.schedule.threshold.clone().unwrap_or(Axis::One(1))
    }

    /// Expands the grid. Axes the method does not use must hold a single value.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let eta = self.eta_axis();
        let threshold = self.threshold_axis();
        for (name, len) in [("schedule.eta", eta.len()), ("schedule.threshold", threshold.len())] {
            if len == 0 {
                return Err(Error::invalid(format!("{name} grid is empty")));
            }
        }
        let unused = |name: &str, len: usize| -> Result<()> {
            if len > 1 {
                Err(Error::invalid(format!("{name} is swept but not used by this method")))
            } else {
                Ok(())
            }
        };
        let theory = self.schedule.theory_k.is_some();
        if theory && !matches!(self.method, MethodConfig::RingmasterFixed {}) {
            return Err(Error::invalid("schedule.theory_k applies only to ringmaster_fixed"));
        }
        let cell = |eta, threshold, batch| Cell { eta, threshold, batch };
        Ok(match &self.method {
            MethodConfig::RingmasterFixed {} if theory => {
                if self.schedule.eta.is_some() || self.schedule.threshold.is_some() {
                    return Err(Error::invalid("schedule.theory_k derives eta and threshold; remove them"));
                }
                vec![cell(None, None, None)]
            }
            MethodConfig::RingmasterFixed {} => {
                let mut cells = Vec::new();
                for e in eta.values() {
                    for r in threshold.values() {
                        cells.push(cell(Some(e), Some(r), None));
                    }
                }
                cells
            }
            MethodConfig::Rennala { batch } => {
                unused("schedule.threshold", threshold.len())?;
                if batch.is_empty() {
                    return Err(Error::invalid("method.batch grid is empty"));
                }
                let mut cells = Vec::new();
                for e in eta.values() {
                    for b in batch.values() {
                        cells.push(cell(Some(e), None, Some(b)));
                    }
                }
                cells
            }
            MethodConfig::RingmasterAgnostic { .. } | MethodConfig::Synchronous {} | MethodConfig::DelayAdaptive {} => {
                unused("schedule.threshold", threshold.len())?;
                eta.values().into_iter().map(|e| cell(Some(e), None, None)).collect()
            }
        })
    }

    pub fn norm_spec(&self, problem: &dyn Problem) -> Result<NormSpec> {
        let layout = problem.layout();
        let backend = self.norm.spectral_backend;
        match self.norm.kind {
            NormChoice::Euclidean => NormSpec::uniform(NormKind::Euclidean, layout, backend),
            NormChoice::MaxAbs => NormSpec::uniform(NormKind::MaxAbs, layout, backend),
            NormChoice::Spectral => NormSpec::spectral_on_matrices(layout, backend),
        }
    }

    pub fn constants(&self, problem: &dyn Problem) -> Result<ProblemConstants> {
        problem.constants(&self.norm_spec(problem)?)
    }

    /// Theory schedule when `schedule.theory_k` is set.
    pub fn theory_schedule(&self, problem: &dyn Problem) -> Result<Option<FixedSchedule>> {
        match self.schedule.theory_k {
            Some(k) => Ok(Some(fixed_schedule(&self.constants(problem)?, k)?)),
            None => Ok(None),
        }
    }

    pub fn sim_config(&self, problem: &dyn Problem, cell: &Cell) -> Result<SimConfig> {
        let eta = cell.eta.unwrap_or(DEFAULT_ETA);
        let (method, schedule) = match &self.method {
            MethodConfig::RingmasterFixed {} => match self.theory_schedule(problem)? {
                Some(fixed) => (Method::Ringmaster, Schedule::Fixed(fixed)),
                None => (Method::Ringmaster, Schedule::constant(eta, cell.threshold.unwrap_or(1))),
            },
            MethodConfig::RingmasterAgnostic { variant } => {
                (Method::Ringmaster, Schedule::Agnostic(AgnosticSchedule::new(eta, *variant)?))
            }
            MethodConfig::Synchronous {} => (Method::Synchronous, Schedule::constant(eta, 1)),
            MethodConfig::Rennala { .. } => {
                let batch = cell.batch.ok_or_else(|| Error::invalid("rennala cell without batch size"))?;
                (Method::Rennala { batch }, Schedule::constant(eta, 1))
            }
            MethodConfig::DelayAdaptive {} => (Method::DelayAdaptive, Schedule::constant(eta, 1)),
        };
        Ok(SimConfig {
            method,
            schedule,
            momentum: self.momentum,
            norm: self.norm_spec(problem)?,
            profile: self.profile.clone(),
            stop: self.stop.condition()?,
            seed: self.seed,
        })
    }

    pub fn run_cell(&self, problem: &dyn Problem, cell: &Cell) -> Result<CellRun> {
        let cfg = self.sim_config(problem, cell)?;
        let (loss0, grad0) = measure(problem, &problem.initial_point(), &cfg.norm)?;
        let mut sim = sim::Simulation::new(problem, cfg)?;
        let trace = sim.run_to_end()?;
        let state = sim.state();
        let last = trace.last();
        let summary = RunSummary {
            config: self.clone(),
            cell: *cell,
            final_loss: last.map_or(loss0, |r| r.loss),
            min_grad_dual_norm: trace.iter().map(|r| r.grad_dual_norm).fold(grad0, f64::min),
            accepted: trace.iter().filter(|r| r.accepted).count() as u64,
            rejected: state.total_rejected(),
            arrivals: trace.len() as u64,
            iterations: state.k(),
            sim_time_s: last.map_or(0.0, |r| r.sim_time_s),
        };
        Ok(CellRun { trace, summary })
    }

    /// Runs the first grid cell; for single-valued configs this is the run.
    pub fn run_single(&self) -> Result<CellRun> {
        let cells = self.cells()?;
        if cells.len() != 1 {
            return Err(Error::invalid(format!("config describes a grid of {} cells; use grid", cells.len())));
        }
        let problem = self.problem.build()?;
        self.run_cell(problem.as_ref(), &cells[0])
    }

    /// Runs every cell in parallel. Each run owns its state.
    pub fn run_grid(&self) -> Result<Vec<(Cell, Result<CellRun>)>> {
        let cells = self.cells()?;
        let problem = self.problem.build()?;
        let problem = problem.as_ref();
        Ok(cells.into_par_iter().map(|cell| (cell, self.run_cell(problem, &cell))).collect())
    }

    pub fn bounds_report(&self) -> Result<BoundsReport> {
        let bc = self.bounds.clone().unwrap_or_default();
        let k = bc.iterations;
        let threshold = match bc.threshold {
            Some(r) => r,
            None => match self.threshold_axis() {
                Axis::One(r) => r,
                Axis::Many(_) => return Err(Error::invalid("bounds.threshold must be set when sweeping thresholds")),
            },
        };
        let ft = FixedTimes::new(self.profile.base_times()?)?;
        let rates = bc.rates.clone().unwrap_or_else(|| RateFunctions::from_fixed(&ft));
        let problem = self.problem.build()?;
        let constants = self.constants(problem.as_ref())?;
        let universal = UniversalReport {
            t_universal: t_universal(threshold, 0.0, &rates)?,
            recursion_fixed: recursion_fixed_universal(k, threshold, &rates)?,
            recursion_sqrt: recursion_sqrt_universal(k, &rates)?,
        };
        let window = if bc.verify_window {
            let mut cfg = self.sim_config(problem.as_ref(), &Cell { eta: None, threshold: None, batch: None })?;
            cfg.method = Method::Ringmaster;
            cfg.schedule = Schedule::constant(cfg.schedule.eta(0), threshold);
            cfg.profile = WorkerProfile::explicit(ft.taus().to_vec(), 0.0);
            cfg.stop = StopCondition::MaxUpdates(k);
            let trace = sim::run(problem.as_ref(), cfg)?;
            Some(verify_window_bound(&trace, threshold, &ft)?)
        } else {
            None
        };
        Ok(BoundsReport {
            iterations: k,
            threshold,
            taus: ft.taus().to_vec(),
            harmonic_prefix: harmonic_prefix(&ft),
            t_fixed: t_fixed(threshold, &ft),
            total_time_fixed: total_time_fixed(k, threshold, &ft)?,
            sqrt_blocks: sqrt_blocks(k)?,
            sqrt_time_bound: sqrt_time_bound(k, &ft)?,
            universal,
            constants,
            theory_schedule: fixed_schedule(&constants, k).ok(),
            iteration_complexity_estimate: bc.eps.map(|e| iteration_complexity_fixed(&constants, e)).transpose()?,
            window,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalReport {
    pub t_universal: f64,
    pub recursion_fixed: f64,
    pub recursion_sqrt: f64,
}

/// Bound calculators evaluated on a config's profile and problem. Complexity
/// estimates use constant 1 in every order term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub iterations: u64,
    pub threshold: u64,
    pub taus: Vec<f64>,
    pub harmonic_prefix: Vec<f64>,
    pub t_fixed: f64,
    pub total_time_fixed: f64,
    pub sqrt_blocks: Vec<ThresholdLevel>,
    pub sqrt_time_bound: f64,
    pub universal: UniversalReport,
    pub constants: ProblemConstants,
    pub theory_schedule: Option<FixedSchedule>,
    pub iteration_complexity_estimate: Option<f64>,
    pub window: Option<WindowReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[momentum]
kind = "theory_averaging"
[stop]
max_k = 20
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.problem, ProblemConfig::Quadratic { d: 64, noise_std: 0.01 });
        assert_eq!(cfg.method, MethodConfig::RingmasterFixed {});
        assert_eq!(cfg.profile.n, 8);
        assert_eq!(cfg.cells().unwrap(), vec![Cell { eta: Some(DEFAULT_ETA), threshold: Some(1), batch: None }]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str(&format!("{BASE}\nsede = 1\n")).is_err());
        let typo = BASE.replace("[stop]", "[stop]\nhorizon = 3.0");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
        let method = format!("{BASE}\n[method]\nkind = \"synchronous\"\nbatch = 3\n");
        assert!(ExperimentConfig::from_toml_str(&method).is_err());
    }

    #[test]
    fn stop_needs_exactly_one() {
        let both = BASE.replace("max_k = 20", "max_k = 20\nhorizon_s = 1.0");
        assert!(ExperimentConfig::from_toml_str(&both).is_err());
        let none = BASE.replace("max_k = 20", "");
        assert!(ExperimentConfig::from_toml_str(&none).is_err());
    }

    #[test]
    fn grid_expansion() {
        let two_by_two = format!("{BASE}\n[schedule]\neta = [0.1, 0.2]\nthreshold = [1, 4]\n");
        assert_eq!(ExperimentConfig::from_toml_str(&two_by_two).unwrap().cells().unwrap().len(), 4);
        let agnostic = format!("{BASE}\n[method]\nkind = \"ringmaster_agnostic\"\n[schedule]\neta = [0.1, 0.2, 0.3]\n");
        let cells = ExperimentConfig::from_toml_str(&agnostic).unwrap().cells().unwrap();
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|c| c.threshold.is_none() && c.batch.is_none()));
        let swept = format!("{BASE}\n[method]\nkind = \"synchronous\"\n[schedule]\nthreshold = [1, 2]\n");
        assert!(ExperimentConfig::from_toml_str(&swept).is_err());
        let empty = format!("{BASE}\n[schedule]\neta = []\n");
        assert!(ExperimentConfig::from_toml_str(&empty).is_err());
        let rennala = format!("{BASE}\n[method]\nkind = \"rennala\"\nbatch = [2, 4]\n");
        assert_eq!(ExperimentConfig::from_toml_str(&rennala).unwrap().cells().unwrap().len(), 2);
    }

    #[test]
    fn toml_and_json_round_trip() {
        let text = format!(
            "{BASE}\n[method]\nkind = \"rennala\"\nbatch = [2, 4]\n[schedule]\neta = 1\n[norm]\nkind = \"euclidean\"\nspectral_backend = {{ kind = \"exact\" }}\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json_like(&cfg);
        assert_eq!(json, cfg);
    }

    // serde round trip through the TOML value model, independent of file layout
    fn serde_json_like(cfg: &ExperimentConfig) -> ExperimentConfig {
        let value = toml::Value::try_from(cfg).unwrap();
        value.try_into().unwrap()
    }

    #[test]
    fn grid_table_sorts_and_flags_best() {
        let text = format!("{BASE}\n[schedule]\neta = [0.001, 0.1]\nthreshold = [1, 2]\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let runs = cfg.run_grid().unwrap();
        let table = GridTable::from_runs(&runs);
        assert_eq!(table.rows.len(), 4);
        assert!(table.failures.is_empty());
        assert!(table.rows.windows(2).all(|w| w[0].final_loss <= w[1].final_loss));
        assert_eq!(table.rows.iter().filter(|r| r.best).count(), 1);
        assert!(table.rows[0].best);
    }

    #[test]
    fn theory_schedule_cell() {
        let text = format!("{BASE}\n[schedule]\ntheory_k = 100\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let problem = cfg.problem.build().unwrap();
        let sim_cfg = cfg.sim_config(problem.as_ref(), &cfg.cells().unwrap()[0]).unwrap();
        assert!(matches!(sim_cfg.schedule, Schedule::Fixed(_)));
        let bad = format!("{BASE}\n[schedule]\ntheory_k = 100\neta = 0.1\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn bounds_report_runs() {
        let text = format!(
            "{BASE}\n[schedule]\nthreshold = 4\n[profile]\nkind = \"linear\"\nn = 4\n[bounds]\niterations = 50\neps = 0.1\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let rep = cfg.bounds_report().unwrap();
        assert_eq!(rep.threshold, 4);
        assert_eq!(rep.taus, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(rep.window.unwrap().passed);
        assert!(rep.iteration_complexity_estimate.unwrap() > 0.0);
    }
}
