//! Server-side update rule with delay-threshold acceptance.
//!
//! An arriving gradient computed at iterate `k − δ` is accepted only when
//! `δ < R_k`. Accepted gradients update the momentum and the iterate moves
//! along the blockwise LMO direction of the momentum; rejected gradients are
//! dropped without touching `(x, m, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmo::{blockwise_lmo, NormSpec, ParamVector};
use crate::schedules::Schedule;

/// Momentum convention. Configs always name one explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum MomentumRule {
    /// `m_{k+1} = (1 − α_k) m_k + α_k g_k`, with `m_1 = α_init g_0`;
    /// `α_k` comes from the schedule.
    TheoryAveraging,
    /// `m ← βm + g`; the direction is `lmo(g + βm)` with Nesterov lookahead,
    /// `lmo(m)` otherwise.
    MuonEma { beta: f64, nesterov: bool },
}

impl MomentumRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MomentumRule::MuonEma { beta, .. } if !(0.0..1.0).contains(&beta) => {
                Err(Error::invalid(format!("β must lie in [0, 1), got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Per-step coefficients read off a schedule at the server's current `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub eta: f64,
    pub alpha: f64,
    pub alpha_init: f64,
}

impl StepCoefficients {
    pub fn at(schedule: &Schedule, k: u64) -> Self {
        Self { eta: schedule.eta(k), alpha: schedule.alpha(k), alpha_init: schedule.alpha_init() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateDecision {
    pub accepted: bool,
    pub delay: u64,
    pub iteration_after: u64,
}

/// Iterate, momentum and counters held by the server.
///
/// For the threshold rule `k == total_received − total_rejected`. The
/// batch baseline consumes several gradients per update.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    k: u64,
    x: ParamVector,
    m: ParamVector,
    total_received: u64,
    total_rejected: u64,
}

impl ServerState {
    pub fn new(x0: ParamVector) -> Self {
        let m = ParamVector::zeros(x0.layout().clone());
        Self { k: 0, x: x0, m, total_received: 0, total_rejected: 0 }
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn x(&self) -> &ParamVector {
        &self.x
    }

    pub fn momentum(&self) -> &ParamVector {
        &self.m
    }

    pub fn total_received(&self) -> u64 {
        self.total_received
    }

    pub fn total_rejected(&self) -> u64 {
        self.total_rejected
    }

    /// Classifies a gradient computed at iterate `computed_at`. Does not
    /// modify the state.
    pub fn accept_gradient(&self, computed_at: u64, threshold: u64) -> Result<UpdateDecision> {
        if computed_at > self.k {
            return Err(Error::ProtocolViolation(format!(
                "gradient computed at iterate {computed_at} but server is at {}",
                self.k
            )));
        }
        let delay = self.k - computed_at;
        let accepted = delay < threshold;
        Ok(UpdateDecision { accepted, delay, iteration_after: self.k + accepted as u64 })
    }

    fn check_gradient(&self, g: &ParamVector) -> Result<()> {
        if g.layout() != self.x.layout() {
            return Err(Error::invalid("gradient layout does not match the iterate"));
        }
        if !g.is_finite() {
            return Err(Error::invalid("gradient has non-finite entries"));
        }
        Ok(())
    }

    fn step(&mut self, g: &ParamVector, rule: &MomentumRule, c: StepCoefficients, spec: &NormSpec) -> Result<()> {
        self.check_gradient(g)?;
        let direction = match *rule {
            MomentumRule::TheoryAveraging => {
                let (keep, take) = if self.k == 0 { (0.0, c.alpha_init) } else { (1.0 - c.alpha, c.alpha) };
                for (m, gi) in self.m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *m = keep * *m + take * gi;
                }
                blockwise_lmo(&self.m, spec)?
            }
            MomentumRule::MuonEma { beta, nesterov } => {
                for (m, gi) in self.m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *m = beta * *m + gi;
                }
                if nesterov {
                    let mut look = g.clone();
                    for (l, m) in look.as_mut_slice().iter_mut().zip(self.m.as_slice()) {
                        *l += beta * m;
                    }
                    blockwise_lmo(&look, spec)?
                } else {
                    blockwise_lmo(&self.m, spec)?
                }
            }
        };
        for (x, d) in self.x.as_mut_slice().iter_mut().zip(direction.as_slice()) {
            *x += c.eta * d;
        }
        self.k += 1;
        Ok(())
    }

    /// Momentum update followed by `x ← x + η lmo(·)`; increments `k`.
    pub fn apply_accepted(
        &mut self,
        g: &ParamVector,
        rule: &MomentumRule,
        coeffs: StepCoefficients,
        spec: &NormSpec,
    ) -> Result<()> {
        self.step(g, rule, coeffs, spec)?;
        self.total_received += 1;
        Ok(())
    }

    /// Drops a stale gradient: only the counters change.
    pub fn reject_gradient(&mut self) {
        self.total_received += 1;
        self.total_rejected += 1;
    }

    /// One batch step of the synchronous-batch baseline: the mean of `B`
    /// gradients, all computed at the current iterate.
    pub fn baseline_rennala_step(
        &mut self,
        grads: &[(u64, ParamVector)],
        batch: usize,
        rule: &MomentumRule,
        coeffs: StepCoefficients,
        spec: &NormSpec,
    ) -> Result<()> {
        if batch == 0 || grads.len() != batch {
            return Err(Error::invalid(format!("expected a batch of {batch} gradients, got {}", grads.len())));
        }
        if let Some((at, _)) = grads.iter().find(|(at, _)| *at != self.k) {
            return Err(Error::ProtocolViolation(format!(
                "batch gradient computed at iterate {at} but server is at {}",
                self.k
            )));
        }
        let mut mean = ParamVector::zeros(self.x.layout().clone());
        for (_, g) in grads {
            self.check_gradient(g)?;
            for (s, gi) in mean.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *s += gi;
            }
        }
        let inv = 1.0 / batch as f64;
        mean.as_mut_slice().iter_mut().for_each(|s| *s *= inv);
        self.step(&mean, rule, coeffs, spec)?;
        self.total_received += batch as u64;
        Ok(())
    }

    /// Accepts every gradient with stepsize `η / (1 + δ)`.
    pub fn baseline_delay_adaptive_step(
        &mut self,
        g: &ParamVector,
        delay: u64,
        rule: &MomentumRule,
        coeffs: StepCoefficients,
        spec: &NormSpec,
    ) -> Result<()> {
        let eta = delay_adaptive_eta(coeffs.eta, delay);
        self.apply_accepted(g, rule, StepCoefficients { eta, ..coeffs }, spec)
    }
}

pub fn delay_adaptive_eta(eta: f64, delay: u64) -> f64 {
    eta / (1.0 + delay as f64)
}
