//! Step-size, momentum and delay-threshold schedules.
//!
//! [`fixed_schedule`] derives constant `(α, R, η)` from problem constants and
//! an iteration budget. The parameter-agnostic schedule uses `α_k = k^{-1/2}`,
//! `R_k = max{1, ⌊√k⌋}` and `η_k ∝ (k+1)^{-3/4}` and needs no constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem constants: initial gap `Δ₀`, generalized smoothness `(L₀, L₁)`,
/// gradient noise `σ` (Euclidean) and norm-equivalence constant `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    pub delta0: f64,
    pub l0: f64,
    pub l1: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [("delta0", self.delta0), ("l0", self.l0), ("l1", self.l1), ("sigma", self.sigma)];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return Err(Error::invalid(format!("rho must be finite and positive, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn rho_sigma(&self) -> f64 {
        self.rho * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedSchedule {
    pub alpha: f64,
    pub threshold: u64,
    pub eta: f64,
    pub iterations: u64,
}

/// Constant parameters for a `K`-iteration run.
///
/// `α = min{1, √(Δ₀L₀)/(ρσ√K)}` (1 when `σ = 0`), `R = ⌈1/α⌉`, and `η` is the
/// minimum of `√(Δ₀/(L₀K))`, `Δ₀^{3/4}/(L₀^{1/4}(ρσ)^{1/2}K^{3/4})` and, when
/// `L₁ > 0`, `1/(8L₁)` and `√(Δ₀L₀)/(8L₁ρσ√K)`. Terms with `σ = 0` in a
/// denominator are absent.
pub fn fixed_schedule(c: &ProblemConstants, iterations: u64) -> Result<FixedSchedule> {
    c.validate()?;
    if iterations == 0 {
        return Err(Error::invalid("iteration budget K must be at least 1"));
    }
    let k = iterations as f64;
    let rs = c.rho_sigma();
    let alpha = if c.sigma == 0.0 { 1.0 } else { (c.delta0 * c.l0).sqrt() / (rs * k.sqrt()) }.min(1.0);
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::DegenerateProblem(format!(
            "momentum weight α = {alpha} (Δ₀ = {}, L₀ = {})",
            c.delta0, c.l0
        )));
    }

    let mut terms = vec![(c.delta0 / (c.l0 * k)).sqrt()];
    if rs > 0.0 {
        terms.push(c.delta0.powf(0.75) / (c.l0.powf(0.25) * rs.sqrt() * k.powf(0.75)));
    }
    if c.l1 > 0.0 {
        terms.push(1.0 / (8.0 * c.l1));
        if rs > 0.0 {
            // α/(8L₁) from the clamped α itself so η ≤ α/(8L₁) holds exactly
            terms.push(alpha / (8.0 * c.l1));
        }
    }
    let eta = terms.into_iter().fold(f64::INFINITY, f64::min);
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::DegenerateProblem(format!(
            "step size η = {eta} (Δ₀ = {}, L₀ = {}, L₁ = {})",
            c.delta0, c.l0, c.l1
        )));
    }
    Ok(FixedSchedule { alpha, threshold: (1.0 / alpha).ceil() as u64, eta, iterations })
}

/// `α_0 = 1`, `α_k = k^{-1/2}`.
pub fn agnostic_alpha(k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        1.0 / (k as f64).sqrt()
    }
}

/// `R_k = max{1, ⌊√k⌋}`, computed in exact integer arithmetic.
pub fn agnostic_threshold(k: u64) -> u64 {
    k.isqrt().max(1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AgnosticVariant {
    #[default]
    L1Zero,
    L1UnknownPositive,
    L1Known { l1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgnosticSchedule {
    pub eta_scale: f64,
    pub variant: AgnosticVariant,
}

impl AgnosticSchedule {
    pub fn new(eta_scale: f64, variant: AgnosticVariant) -> Result<Self> {
        if !(eta_scale > 0.0 && eta_scale.is_finite()) {
            return Err(Error::invalid(format!("η scale must be positive, got {eta_scale}")));
        }
        if let AgnosticVariant::L1Known { l1 } = variant {
            if !(l1 > 0.0 && l1.is_finite()) {
                return Err(Error::invalid(format!("known L₁ must be positive, got {l1}")));
            }
        }
        Ok(Self { eta_scale, variant })
    }
}

pub fn agnostic_eta(k: u64, s: &AgnosticSchedule) -> Result<f64> {
    let decay = ((k as f64) + 1.0).powf(0.75);
    match s.variant {
        AgnosticVariant::L1Zero => Ok(s.eta_scale / decay),
        AgnosticVariant::L1UnknownPositive => Ok(s.eta_scale / (17.0 * decay)),
        AgnosticVariant::L1Known { l1 } if l1 > 0.0 => Ok(1.0 / (17.0 * l1 * decay)),
        AgnosticVariant::L1Known { l1 } => Err(Error::invalid(format!("known L₁ must be positive, got {l1}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub value: f64,
    /// `e^{L₁²η²}` overflowed; `value` is `+∞`.
    pub overflowed: bool,
}

/// `Ψ = e^{L₁²η²}Δ₀/η + ρσ + e^{L₁²η²}L₀η`; the known-`L₁` variant returns
/// `L₁Δ₀ + ρσ + L₀/L₁`. The `L1Zero` variant evaluates with `L₁ = 0`.
pub fn psi_envelope(c: &ProblemConstants, eta: f64, variant: AgnosticVariant) -> Result<Envelope> {
    c.validate()?;
    let rs = c.rho_sigma();
    let l1 = match variant {
        AgnosticVariant::L1Known { l1 } => {
            if !(l1 > 0.0) {
                return Err(Error::invalid(format!("known L₁ must be positive, got {l1}")));
            }
            return Ok(Envelope { value: l1 * c.delta0 + rs + c.l0 / l1, overflowed: false });
        }
        AgnosticVariant::L1Zero => 0.0,
        AgnosticVariant::L1UnknownPositive => c.l1,
    };
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("η must be positive, got {eta}")));
    }
    let growth = (l1 * l1 * eta * eta).exp();
    if growth.is_infinite() {
        return Ok(Envelope { value: f64::INFINITY, overflowed: true });
    }
    Ok(Envelope { value: growth * c.delta0 / eta + rs + growth * c.l0 * eta, overflowed: false })
}

/// Order-of-magnitude iteration count for ε-stationarity under the fixed
/// schedule, with every hidden constant set to 1:
/// `L₀Δ₀/ε² + L₁Δ₀/ε + L₀Δ₀(ρσ)²/ε⁴ + L₁²Δ₀(ρσ)²/(L₀ε²) + (ρσ)²/ε²`.
/// The `L₁` terms are omitted when `L₁ = 0`.
pub fn iteration_complexity_fixed(c: &ProblemConstants, eps: f64) -> Result<f64> {
    c.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("ε must be positive, got {eps}")));
    }
    let rs2 = c.rho_sigma().powi(2);
    let mut total = c.l0 * c.delta0 / eps.powi(2) + c.l0 * c.delta0 * rs2 / eps.powi(4) + rs2 / eps.powi(2);
    if c.l1 > 0.0 {
        total += c.l1 * c.delta0 / eps;
        let num = c.l1 * c.l1 * c.delta0 * rs2;
        if num > 0.0 {
            total += num / (c.l0 * eps * eps);
        }
    }
    Ok(total)
}

/// Order-of-magnitude iteration count for the agnostic schedule,
/// `(Ψ/ε)⁴ · max{1, ln(1/ε)}⁴`, constants set to 1.
pub fn iteration_complexity_agnostic(psi: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) || !(psi > 0.0) {
        return Err(Error::invalid(format!("need ε > 0 and Ψ > 0, got ε = {eps}, Ψ = {psi}")));
    }
    Ok((psi / eps).powi(4) * (1.0 / eps).ln().max(1.0).powi(4))
}

/// Per-iteration `(η_k, α_k, R_k)` generator consumed by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Fixed(FixedSchedule),
    Agnostic(AgnosticSchedule),
    /// Hand-tuned constants, as used in grid searches.
    Constant { eta: f64, threshold: u64, alpha: f64 },
}

impl Schedule {
    pub fn constant(eta: f64, threshold: u64) -> Self {
        Schedule::Constant { eta, threshold, alpha: 1.0 / threshold.max(1) as f64 }
    }

    pub fn eta(&self, k: u64) -> f64 {
        match self {
            Schedule::Fixed(f) => f.eta,
            // variant validated by AgnosticSchedule::new
            Schedule::Agnostic(a) => agnostic_eta(k, a).unwrap_or(0.0),
            Schedule::Constant { eta, .. } => *eta,
        }
    }

    /// Momentum weight for `k ≥ 1`; `α_0 = 1` by convention.
    pub fn alpha(&self, k: u64) -> f64 {
        match self {
            Schedule::Agnostic(_) => agnostic_alpha(k),
            _ if k == 0 => 1.0,
            Schedule::Fixed(f) => f.alpha,
            Schedule::Constant { alpha, .. } => *alpha,
        }
    }

    /// Weight of the first gradient, `m_1 = α_init · g_0`.
    pub fn alpha_init(&self) -> f64 {
        match self {
            Schedule::Fixed(f) => f.alpha,
            Schedule::Agnostic(_) => 1.0,
            Schedule::Constant { alpha, .. } => *alpha,
        }
    }

    pub fn threshold(&self, k: u64) -> u64 {
        match self {
            Schedule::Fixed(f) => f.threshold,
            Schedule::Agnostic(_) => agnostic_threshold(k),
            Schedule::Constant { threshold, .. } => *threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |eta: f64, alpha: f64, r: u64| eta > 0.0 && eta.is_finite() && alpha > 0.0 && alpha <= 1.0 && r >= 1;
        let valid = match self {
            Schedule::Fixed(f) => ok(f.eta, f.alpha, f.threshold),
            Schedule::Agnostic(a) => AgnosticSchedule::new(a.eta_scale, a.variant).is_ok(),
            Schedule::Constant { eta, threshold, alpha } => ok(*eta, *alpha, *threshold),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid schedule {self:?}")))
        }
    }
}
