//! Time-complexity calculators.
//!
//! Fixed computation model: worker `i` always needs `τ_i` seconds, and any
//! `R` consecutive updates under threshold `R` finish within
//! `t(R) = 2·min_m H_m(1 + R/m)`, where `H_m` is the harmonic mean of the `m`
//! fastest times.
//!
//! Universal computation model: worker `i` completes `⌊∫p_i⌋` gradients over
//! any interval, for a piecewise-constant rate `p_i`. The duration bound for
//! `R` updates starting at `T₀` is
//! `t(R; T₀) = min{t : Σ_i ⌊¼∫_{T₀}^{T₀+t} p_i⌋ ≥ R}`, and the fixed and
//! square-root threshold schedules chain it through recursions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::agnostic_threshold;
use crate::sim::TraceRow;

/// Worker computation times, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTimes {
    taus: Vec<f64>,
}

impl FixedTimes {
    pub fn new(mut taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::invalid("need at least one computation time"));
        }
        if taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("computation times must be positive and finite"));
        }
        taus.sort_by(f64::total_cmp);
        Ok(Self { taus })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }
}

/// `H_m = (1/m · Σ_{i≤m} 1/τ_i)^{-1}` for `m = 1..n`.
pub fn harmonic_prefix(ft: &FixedTimes) -> Vec<f64> {
    let mut inv_sum = 0.0;
    ft.taus
        .iter()
        .enumerate()
        .map(|(i, tau)| {
            inv_sum += 1.0 / tau;
            (i + 1) as f64 / inv_sum
        })
        .collect()
}

/// `t(R) = 2·min_m H_m(1 + R/m)`.
pub fn t_fixed(threshold: u64, ft: &FixedTimes) -> f64 {
    let r = threshold as f64;
    harmonic_prefix(ft)
        .iter()
        .enumerate()
        .map(|(i, h)| 2.0 * h * (1.0 + r / (i + 1) as f64))
        .fold(f64::INFINITY, f64::min)
}

/// `⌈K/R⌉·t(R)`: `K` updates split into blocks of at most `R`.
pub fn total_time_fixed(iterations: u64, threshold: u64, ft: &FixedTimes) -> Result<f64> {
    if iterations == 0 || threshold == 0 {
        return Err(Error::invalid("K and R must be at least 1"));
    }
    Ok(iterations.div_ceil(threshold) as f64 * t_fixed(threshold, ft))
}

/// Iterations sharing the integer threshold level `r` and the number of
/// sub-blocks of at most `r` updates they split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdLevel {
    pub r: u64,
    /// `|𝒦_r|`
    pub size: u64,
    /// `N_r = ⌈|𝒦_r|/r⌉`
    pub sub_blocks: u64,
}

/// Levels `𝒦_r = {k < K : ⌊R_k⌋ = r}` of the square-root schedule
/// `R_0 = 1`, `R_k = √k`. Level `r` covers `[r², (r+1)²)`, and level 1 also
/// holds `k = 0`.
pub fn sqrt_blocks(iterations: u64) -> Result<Vec<ThresholdLevel>> {
    if iterations == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let r_max = agnostic_threshold(iterations - 1);
    Ok((1..=r_max)
        .map(|r| {
            let lo = if r == 1 { 0 } else { r * r };
            let hi = ((r + 1) * (r + 1)).min(iterations);
            let size = hi - lo;
            ThresholdLevel { r, size, sub_blocks: size.div_ceil(r) }
        })
        .collect())
}

/// `Σ_r N_r·t(r)` over the square-root levels of the first `K` iterations.
pub fn sqrt_time_bound(iterations: u64, ft: &FixedTimes) -> Result<f64> {
    Ok(sqrt_blocks(iterations)?.iter().map(|l| l.sub_blocks as f64 * t_fixed(l.r, ft)).sum())
}

/// Piecewise-constant rate: `(start_time, rate)` pairs with strictly
/// increasing start times beginning at 0; the last rate holds forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct RateFunction {
    segments: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for RateFunction {
    type Error = Error;

    fn try_from(segments: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<RateFunction> for Vec<(f64, f64)> {
    fn from(p: RateFunction) -> Self {
        p.segments
    }
}

impl RateFunction {
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        let Some(first) = segments.first() else {
            return Err(Error::invalid("rate function needs at least one segment"));
        };
        if first.0 != 0.0 {
            return Err(Error::invalid("first rate segment must start at time 0"));
        }
        if segments.iter().any(|(t, r)| !t.is_finite() || !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("rates must be finite and nonnegative"));
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        Ok(Self { segments })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![(0.0, rate)])
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    fn segment_end(&self, i: usize) -> f64 {
        self.segments.get(i + 1).map_or(f64::INFINITY, |s| s.0)
    }

    /// Rate at time `t` (right-continuous).
    pub fn rate_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|s| s.0 <= t).saturating_sub(1);
        self.segments[idx].1
    }

    /// `∫_a^b p(s) ds` for `a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, &(start, rate))| {
                let lo = start.max(a);
                let hi = self.segment_end(i).min(b);
                if hi > lo {
                    rate * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Earliest time `t ≥ from` with `∫_from^t p = amount`, if ever reached.
    pub fn time_to_accumulate(&self, from: f64, amount: f64) -> Option<f64> {
        let mut remaining = amount;
        let first = self.segments.partition_point(|s| s.0 <= from).saturating_sub(1);
        for i in first..self.segments.len() {
            let rate = self.segments[i].1;
            let lo = self.segments[i].0.max(from);
            let hi = self.segment_end(i);
            let gain = rate * (hi - lo);
            if rate > 0.0 && gain >= remaining {
                return Some(lo + remaining / rate);
            }
            if hi.is_finite() {
                remaining -= gain;
            }
        }
        None
    }
}

/// One rate function per worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateFunctions {
    workers: Vec<RateFunction>,
}

impl RateFunctions {
    pub fn new(workers: Vec<RateFunction>) -> Result<Self> {
        if workers.is_empty() {
            return Err(Error::invalid("need at least one worker"));
        }
        Ok(Self { workers })
    }

    /// `p_i ≡ 1/τ_i`.
    pub fn from_fixed(ft: &FixedTimes) -> Self {
        Self { workers: ft.taus().iter().map(|t| RateFunction { segments: vec![(0.0, 1.0 / t)] }).collect() }
    }

    pub fn workers(&self) -> &[RateFunction] {
        &self.workers
    }

    /// `N_i(T₁, T₂) = ⌊∫_{T₁}^{T₂} p_i⌋`.
    pub fn completed(&self, worker: usize, t1: f64, t2: f64) -> u64 {
        self.workers[worker].integral(t1, t2).floor() as u64
    }
}

/// Gradients per credited unit inside the floor of `t(R; T₀)`.
const UNIVERSAL_CREDIT: f64 = 4.0;

/// `t(R; T₀)`: the `R`-th earliest time at which some worker's quarter-count
/// `⌊¼∫_{T₀} p_i⌋` ticks up, measured from `T₀`.
pub fn t_universal(threshold: u64, t0: f64, rf: &RateFunctions) -> Result<f64> {
    if threshold == 0 {
        return Err(Error::invalid("R must be at least 1"));
    }
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(Error::invalid(format!("start time must be finite and nonnegative, got {t0}")));
    }
    // (crossing time, worker, level): level j is reached when ∫ = 4j
    let crossing = |w: usize, j: u64| rf.workers[w].time_to_accumulate(t0, UNIVERSAL_CREDIT * j as f64);
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize, u64)>> = (0..rf.workers.len())
        .filter_map(|w| crossing(w, 1).map(|t| Reverse((OrdF64(t), w, 1))))
        .collect();
    let mut count = 0;
    while let Some(Reverse((OrdF64(t), w, j))) = heap.pop() {
        count += 1;
        if count == threshold {
            return Ok(t - t0);
        }
        if let Some(next) = crossing(w, j + 1) {
            heap.push(Reverse((OrdF64(next), w, j + 1)));
        }
    }
    Err(Error::Unreachable(format!("only {count} of {threshold} credited gradients are ever completed after t = {t0}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// `T_{⌈K/R⌉}` with `T_0 = 0`, `T_k = T_{k−1} + t(R; T_{k−1})`.
pub fn recursion_fixed_universal(iterations: u64, threshold: u64, rf: &RateFunctions) -> Result<f64> {
    if iterations == 0 || threshold == 0 {
        return Err(Error::invalid("K and R must be at least 1"));
    }
    (0..iterations.div_ceil(threshold)).try_fold(0.0, |t, _| Ok(t + t_universal(threshold, t, rf)?))
}

/// Thresholds `max{1, ⌈(j−1)/3⌉}` for `j = 1..3⌊√K⌋+1`.
pub fn sqrt_recursion_thresholds(iterations: u64) -> Vec<u64> {
    let steps = 3 * iterations.isqrt() + 1;
    (1..=steps).map(|j| (j - 1).div_ceil(3).max(1)).collect()
}

/// `S_{3⌊√K⌋+1}` with `S_0 = 0`, `S_j = S_{j−1} + t(max{1, ⌈(j−1)/3⌉}; S_{j−1})`.
pub fn recursion_sqrt_universal(iterations: u64, rf: &RateFunctions) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    sqrt_recursion_thresholds(iterations).into_iter().try_fold(0.0, |s, r| Ok(s + t_universal(r, s, rf)?))
}

/// A window of `R` consecutive accepted updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Index (0-based) of the first update in the window.
    pub first_update: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub duration_s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub threshold: u64,
    pub bound_s: f64,
    pub windows: u64,
    pub max_ratio: f64,
    /// The window attaining `max_ratio`.
    pub worst: Option<Window>,
    pub passed: bool,
}

/// Checks every window of `R` consecutive accepted updates against `t(R)`.
///
/// A window of updates `j..j+R−1` starts when update `j − 1` was applied
/// (time 0 for `j = 0`) and ends when update `j + R − 1` is applied.
pub fn verify_window_bound(trace: &[TraceRow], threshold: u64, ft: &FixedTimes) -> Result<WindowReport> {
    if threshold == 0 {
        return Err(Error::invalid("R must be at least 1"));
    }
    if trace.windows(2).any(|w| w[1].sim_time_s < w[0].sim_time_s) {
        return Err(Error::invalid("trace times are not monotone"));
    }
    if let Some(row) = trace.iter().find(|r| r.accepted && r.delay >= threshold) {
        return Err(Error::invalid(format!(
            "event {} accepted delay {} under threshold {threshold}: not a fixed-threshold trace",
            row.event_index, row.delay
        )));
    }
    let bound = t_fixed(threshold, ft);
    let mut times = vec![0.0];
    times.extend(trace.iter().filter(|r| r.accepted).map(|r| r.sim_time_s));
    let r = threshold as usize;
    let mut worst: Option<Window> = None;
    let mut windows = 0;
    for j in 0..times.len().saturating_sub(r) {
        let (start_s, end_s) = (times[j], times[j + r]);
        let duration_s = end_s - start_s;
        let ratio = duration_s / bound;
        windows += 1;
        if worst.is_none_or(|w| ratio > w.ratio) {
            worst = Some(Window { first_update: j as u64, start_s, end_s, duration_s, ratio });
        }
    }
    let max_ratio = worst.map_or(0.0, |w| w.ratio);
    Ok(WindowReport { threshold, bound_s: bound, windows, max_ratio, worst, passed: max_ratio <= 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ft(t: &[f64]) -> FixedTimes {
        FixedTimes::new(t.to_vec()).unwrap()
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_prefix(&ft(&[1.0, 1.0])), vec![1.0, 1.0]);
        let h = harmonic_prefix(&ft(&[1.0, 2.0, 4.0]));
        assert!((h[0] - 1.0).abs() < 1e-15 && (h[1] - 4.0 / 3.0).abs() < 1e-15 && (h[2] - 12.0 / 7.0).abs() < 1e-15);
        assert_eq!(harmonic_prefix(&ft(&[2.0])), vec![2.0]);
        assert_eq!(ft(&[4.0, 1.0]).taus(), &[1.0, 4.0]);
        assert!(FixedTimes::new(vec![]).is_err());
        assert!(FixedTimes::new(vec![0.0]).is_err());
    }

    #[test]
    fn t_fixed_examples() {
        assert_eq!(t_fixed(2, &ft(&[1.0, 1.0])), 4.0);
        assert_eq!(t_fixed(1, &ft(&[1.0])), 4.0);
        assert_eq!(t_fixed(1, &ft(&[1.0, 100.0])), 4.0);
        assert_eq!(total_time_fixed(10, 2, &ft(&[1.0, 1.0])).unwrap(), 20.0);
        assert_eq!(total_time_fixed(1, 1, &ft(&[1.0])).unwrap(), 4.0);
        assert_eq!(total_time_fixed(7, 7, &ft(&[1.0, 3.0])).unwrap(), t_fixed(7, &ft(&[1.0, 3.0])));
        assert!(total_time_fixed(0, 1, &ft(&[1.0])).is_err());
    }

    #[test]
    fn sqrt_block_examples() {
        assert_eq!(sqrt_blocks(1).unwrap(), vec![ThresholdLevel { r: 1, size: 1, sub_blocks: 1 }]);
        let ten = sqrt_blocks(10).unwrap();
        let sizes: Vec<(u64, u64, u64)> = ten.iter().map(|l| (l.r, l.size, l.sub_blocks)).collect();
        assert_eq!(sizes, vec![(1, 4, 4), (2, 5, 3), (3, 1, 1)]);
        assert_eq!(sqrt_time_bound(1, &ft(&[1.0])).unwrap(), 4.0);
        assert_eq!(sqrt_time_bound(10, &ft(&[1.0, 1.0])).unwrap(), 29.0);
    }

    #[test]
    fn universal_examples() {
        let one = RateFunctions::new(vec![RateFunction::constant(1.0).unwrap()]).unwrap();
        assert_eq!(t_universal(1, 0.0, &one).unwrap(), 4.0);
        let two = RateFunctions::from_fixed(&ft(&[1.0, 1.0]));
        assert_eq!(t_universal(2, 0.0, &two).unwrap(), 4.0);
        assert_eq!(t_universal(3, 0.0, &two).unwrap(), 8.0);
        assert!(t_universal(0, 0.0, &two).is_err());
    }

    #[test]
    fn universal_unreachable() {
        let stops = RateFunction::new(vec![(0.0, 1.0), (6.0, 0.0)]).unwrap();
        let rf = RateFunctions::new(vec![stops]).unwrap();
        assert_eq!(t_universal(1, 0.0, &rf).unwrap(), 4.0);
        assert!(matches!(t_universal(2, 0.0, &rf), Err(Error::Unreachable(_))));
        assert!(matches!(recursion_fixed_universal(4, 1, &rf), Err(Error::Unreachable(_))));
    }

    #[test]
    fn rate_function_validation_and_integrals() {
        assert!(RateFunction::new(vec![]).is_err());
        assert!(RateFunction::new(vec![(1.0, 1.0)]).is_err());
        assert!(RateFunction::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(RateFunction::new(vec![(0.0, -1.0)]).is_err());
        let p = RateFunction::new(vec![(0.0, 1.0), (10.0, 0.5)]).unwrap();
        assert_eq!(p.integral(0.0, 10.0), 10.0);
        assert_eq!(p.integral(8.0, 14.0), 4.0);
        assert_eq!(p.rate_at(10.0), 0.5);
        assert_eq!(p.time_to_accumulate(8.0, 4.0), Some(14.0));
        assert_eq!(p.time_to_accumulate(12.0, 1.0), Some(14.0));
        let parsed: RateFunctions = toml::from_str::<toml::Value>("r = [[[0.0, 1.0], [10.0, 0.5]]]")
            .unwrap()
            .get("r")
            .cloned()
            .unwrap()
            .try_into()
            .unwrap();
        assert_eq!(parsed.workers()[0], p);
        let bad: std::result::Result<RateFunctions, _> =
            toml::from_str::<toml::Value>("r = [[[1.0, 1.0]]]").unwrap()["r"].clone().try_into();
        assert!(bad.is_err());
    }

    #[test]
    fn recursion_examples() {
        let rf = RateFunctions::from_fixed(&ft(&[1.0, 2.0]));
        let single = t_universal(3, 0.0, &rf).unwrap();
        assert_eq!(recursion_fixed_universal(3, 3, &rf).unwrap(), single);
        assert!((recursion_fixed_universal(10, 3, &rf).unwrap() - 4.0 * single).abs() < 1e-9);
        assert_eq!(sqrt_recursion_thresholds(1), vec![1, 1, 1, 1]);
        assert_eq!(sqrt_recursion_thresholds(16), vec![1, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
        let one = RateFunctions::from_fixed(&ft(&[1.0]));
        assert_eq!(recursion_sqrt_universal(1, &one).unwrap(), 16.0);
    }

    fn row(t: f64, accepted: bool, delay: u64) -> TraceRow {
        TraceRow {
            sim_time_s: t,
            event_index: 0,
            worker: 0,
            delay,
            accepted,
            iteration: 0,
            loss: 0.0,
            grad_dual_norm: 0.0,
            rejected_total: 0,
        }
    }

    #[test]
    fn window_report_surfaces_offender() {
        // τ = 1, R = 2: t(2) = 6; updates at 1, 2, 3 then a slow one at 9
        let trace = [row(1.0, true, 0), row(2.0, true, 0), row(3.0, true, 0), row(9.0, true, 0)];
        let rep = verify_window_bound(&trace, 2, &ft(&[1.0])).unwrap();
        assert_eq!(rep.windows, 3);
        assert!(!rep.passed);
        let w = rep.worst.unwrap();
        assert_eq!((w.first_update, w.start_s, w.end_s), (2, 2.0, 9.0));
        assert!((rep.max_ratio - 7.0 / 6.0).abs() < 1e-15);

        assert!(verify_window_bound(&[row(1.0, true, 2)], 2, &ft(&[1.0])).is_err());
        assert!(verify_window_bound(&[row(2.0, true, 0), row(1.0, true, 0)], 2, &ft(&[1.0])).is_err());
        let short = verify_window_bound(&[row(1.0, true, 0)], 4, &ft(&[1.0])).unwrap();
        assert!(short.passed && short.windows == 0);
    }
}
