//! Stability margins and certified maximum sampling/delay budgets.
//!
//! Every budget here is the largest total lag `s` (sampling period plus
//! delays) for which a margin of the form
//!
//! ```text
//! μ - ε ω (1+1/α)(1+1/β) e^{2λ s}
//!   - ε ((1+α)(1+1/β) σ_A² + (1+β)(7/3) c²) s² e^{2λ s}
//! ```
//!
//! stays positive for some `α, β > 0`, where `c` is the coupling gain
//! (`σ_G σ_K` for the abstract network, `λ_n σ_BK` for relative-state
//! consensus). Minimising over `α` and then `β` gives the exact envelope
//! `μ - ε e^{2λs} (√ω + σ_A s + √(7/3) c s)²`, which is what the budget
//! searches bisect on. The witness `(α, β)` reported alongside is the
//! minimiser at a lag just inside the budget.

mod consensus;
pub mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::matan::LAMBDA_ZERO_TOL;
use crate::{Error, Result};

pub use consensus::{
    corollary1_consensus_budget, exp_norm_envelope, gamma_objective, gamma_supremum,
    theorem2_budget, theorem3_budget, theorem4_best_beta, theorem4_error_bound,
    theorem4_infimum, theorem4_report, theorem4_search, ExpNormEnvelope, GammaSupremum,
    Theorem4Inputs, Theorem4Setup, Theorem4Terms, ENVELOPE_SAMPLES,
};

/// Lags beyond this are reported as unbounded.
pub const UNBOUNDED_LAG: f64 = 1e3;
/// Resolution of the sign-change scan used when the margin may be
/// non-monotone in the lag.
pub const SCAN_STEP: f64 = 1e-4;
/// Relative offset inside the budget at which the witness is certified.
pub const CERTIFY_OFFSET: f64 = 1e-3;
/// Default `θ` for the consensus-error bound (an infimum over `θ > 1`).
pub const DEFAULT_THETA: f64 = 1.0 + 1e-9;

const WITNESS_MIN: f64 = 1e-12;
const WITNESS_MAX: f64 = 1e12;
const SEVEN_THIRDS: f64 = 7.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub mu: f64,
    pub eps: f64,
    /// Measurement-error ratio: `eᵀe ≤ ω ẑᵀẑ`.
    pub omega: f64,
    pub lambda_as: f64,
    pub sigma_a: f64,
    pub sigma_g: f64,
    pub sigma_k: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub tau_in: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mu", self.mu),
            ("eps", self.eps),
            ("omega", self.omega),
            ("lambda_as", self.lambda_as),
            ("sigma_a", self.sigma_a),
            ("sigma_g", self.sigma_g),
            ("sigma_k", self.sigma_k),
            ("h", self.h),
            ("tau", self.tau),
            ("tau_in", self.tau_in),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parameter(format!("{name} = {v} is not finite")));
        }
        if !(self.mu > 0.0 && self.eps > 0.0) {
            return Err(Error::Parameter(format!(
                "μ = {} and ε = {} must be positive",
                self.mu, self.eps
            )));
        }
        for (name, v) in &all[2..] {
            if *name != "lambda_as" && *v < 0.0 {
                return Err(Error::Parameter(format!("{name} = {v} must be ≥ 0")));
            }
        }
        Ok(())
    }

    /// `σ_G σ_K`.
    pub fn coupling(&self) -> f64 {
        self.sigma_g * self.sigma_k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub theta: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            eta: 1.0,
            theta: DEFAULT_THETA,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
        ]
        .iter()
        .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
        .map(|(n, v)| format!("{n} = {v} must be positive"))
        .chain((!(self.theta > 1.0)).then(|| format!("theta = {} must exceed 1", self.theta)))
        .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::SetMembership(bad))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub feasible: bool,
    /// Margin stays positive for every lag up to [`UNBOUNDED_LAG`].
    pub unbounded: bool,
    /// Certified maximum lag (or the consensus-error bound for the
    /// broadcast error theorem); `None` when infeasible or unbounded.
    pub budget: Option<f64>,
    /// Margin at the witness.
    pub margin: f64,
    pub witness: SearchParams,
    pub diagnostics: String,
    /// Named intermediate constants (σ, λ_PBK_s, optimal γ, …).
    pub details: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn infeasible(reason: impl Into<String>) -> Self {
        Self {
            feasible: false,
            unbounded: false,
            budget: None,
            margin: f64::NAN,
            witness: SearchParams::default(),
            diagnostics: reason.into(),
            details: BTreeMap::new(),
        }
    }

    pub(crate) fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

/// Margin at total lag `s` for the given `(α, β)`.
pub fn lag_margin(q: &BoundQuery, s: f64, alpha: f64, beta: f64) -> f64 {
    let growth = (2.0 * q.lambda_as * s).exp();
    let c = q.coupling();
    q.mu - q.eps * q.omega * (1.0 + 1.0 / alpha) * (1.0 + 1.0 / beta) * growth
        - q.eps
            * ((1.0 + alpha) * (1.0 + 1.0 / beta) * q.sigma_a.powi(2)
                + (1.0 + beta) * SEVEN_THIRDS * c * c)
            * s
            * s
            * growth
}

/// Margin at the lag `h + τ`.
pub fn theorem1_margin(q: &BoundQuery, p: &SearchParams) -> f64 {
    lag_margin(q, q.h + q.tau, p.alpha, p.beta)
}

/// Margin at the lag `h + τ + τ_in` (input delay counted as sampling delay).
pub fn theorem5_margin(q: &BoundQuery, p: &SearchParams) -> f64 {
    lag_margin(q, q.h + q.tau + q.tau_in, p.alpha, p.beta)
}

/// `sup_{α,β>0}` of [`lag_margin`] at lag `s`.
pub fn max_margin(q: &BoundQuery, s: f64) -> f64 {
    let root = q.omega.sqrt() + q.sigma_a * s + SEVEN_THIRDS.sqrt() * q.coupling() * s;
    q.mu - q.eps * (2.0 * q.lambda_as * s).exp() * root * root
}

/// The minimising `(α, β)` at lag `s`, clamped to `[1e-12, 1e12]` where the
/// optimum sits on the boundary of the open orthant.
pub fn optimal_split(q: &BoundQuery, s: f64) -> (f64, f64) {
    let clamp = |v: f64| {
        if v.is_nan() {
            1.0
        } else {
            v.clamp(WITNESS_MIN, WITNESS_MAX)
        }
    };
    let sw = q.omega.sqrt();
    let a = q.sigma_a * s;
    let alpha = clamp(sw / a);
    let x = sw + a;
    let y = SEVEN_THIRDS.sqrt() * q.coupling() * s;
    let beta = clamp(x / y);
    (alpha, beta)
}

/// Where the supremum margin first reaches zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagBudget {
    /// Non-positive already at zero lag.
    Infeasible,
    Bounded(f64),
    Unbounded,
}

pub fn lag_budget(q: &BoundQuery) -> LagBudget {
    let f = |s: f64| max_margin(q, s);
    if f(0.0) <= 0.0 {
        return LagBudget::Infeasible;
    }
    let (mut lo, mut hi);
    if q.lambda_as >= -LAMBDA_ZERO_TOL {
        // Envelope is non-increasing in s: expanding bracket.
        lo = 0.0;
        hi = SCAN_STEP;
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if lo > UNBOUNDED_LAG {
                return LagBudget::Unbounded;
            }
        }
    } else {
        // e^{2λs} may pull the margin back up: first sign change only.
        let steps = (UNBOUNDED_LAG / SCAN_STEP).ceil() as usize;
        lo = 0.0;
        hi = f64::NAN;
        for k in 1..=steps {
            let s = k as f64 * SCAN_STEP;
            if f(s) <= 0.0 {
                hi = s;
                break;
            }
            lo = s;
        }
        if hi.is_nan() {
            return LagBudget::Unbounded;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    LagBudget::Bounded(lo)
}

/// Shared report builder for every lag-type budget.
pub(crate) fn lag_report(q: &BoundQuery, what: &str) -> BoundReport {
    if q.eps * q.omega >= q.mu {
        return BoundReport::infeasible(format!(
            "εω = {:.6} ≥ μ = {:.6}: measurement errors too large for any lag",
            q.eps * q.omega,
            q.mu
        ))
        .detail("eps_omega", q.eps * q.omega);
    }
    match lag_budget(q) {
        LagBudget::Infeasible => {
            BoundReport::infeasible(format!("{what}: margin is non-positive at zero lag"))
        }
        LagBudget::Unbounded => {
            let (alpha, beta) = optimal_split(q, UNBOUNDED_LAG);
            BoundReport {
                feasible: true,
                unbounded: true,
                budget: None,
                margin: lag_margin(q, UNBOUNDED_LAG, alpha, beta),
                witness: SearchParams {
                    alpha,
                    beta,
                    ..SearchParams::default()
                },
                diagnostics: format!(
                    "{what}: margin stays positive for every lag up to {UNBOUNDED_LAG} (unbounded; any sampling period)"
                ),
                details: BTreeMap::new(),
            }
        }
        LagBudget::Bounded(s) => {
            let at = s * (1.0 - CERTIFY_OFFSET);
            let (alpha, beta) = optimal_split(q, at);
            let margin = lag_margin(q, at, alpha, beta);
            BoundReport {
                feasible: margin > 0.0,
                unbounded: false,
                budget: Some(s),
                margin,
                witness: SearchParams {
                    alpha,
                    beta,
                    ..SearchParams::default()
                },
                diagnostics: format!(
                    "{what}: certified total lag < {s:.6}; witness evaluated at {at:.6}"
                ),
                details: BTreeMap::new(),
            }
            .detail("certified_lag", at)
            .detail("max_margin_at_budget", max_margin(q, s))
        }
    }
}

/// Largest `h + τ` certified by the abstract-network condition.
pub fn theorem1_budget(q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    Ok(lag_report(q, "sampled network"))
}

/// `ω = (ε_q - 1)²` for a logarithmic quantizer of level `ε_q`.
pub fn quantizer_omega(quant_level: f64) -> Result<f64> {
    if !(quant_level > 1.0 && quant_level.is_finite()) {
        return Err(Error::Parameter(format!(
            "quantizing level {quant_level} must exceed 1"
        )));
    }
    Ok((quant_level - 1.0).powi(2))
}

/// Budget under logarithmic quantization of every sample.
pub fn corollary1_budget(q: &BoundQuery, quant_level: f64) -> Result<BoundReport> {
    let omega = quantizer_omega(quant_level)?;
    let q = BoundQuery { omega, ..*q };
    q.validate()?;
    Ok(lag_report(&q, "log-quantized sampling").detail("omega", omega))
}

/// Maximum dwell time for event-triggered updates (no delays).
pub fn corollary2_budget(q: &BoundQuery) -> Result<BoundReport> {
    let q = BoundQuery { tau: 0.0, ..*q };
    q.validate()?;
    let mut r = lag_report(&q, "event-triggered dwell time");
    if r.budget.is_some() {
        r.diagnostics.push_str("; budget is the maximum dwell time h");
    }
    Ok(r)
}

/// Budget with a fixed input delay `τ_in`: the certified total lag
/// `h + τ + τ_in`, reported as the residual budget for `h + τ`.
pub fn theorem5_budget(q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    let mut r = lag_report(q, "saturated control with input delay");
    r = r.detail("tau_in", q.tau_in);
    if let Some(total) = r.budget {
        r = r.detail("total_lag", total);
        if q.tau_in >= total {
            return Ok(BoundReport {
                feasible: false,
                budget: None,
                diagnostics: format!(
                    "input delay τ_in = {} consumes the whole certified lag {total:.6}",
                    q.tau_in
                ),
                ..r
            });
        }
        r.budget = Some(total - q.tau_in);
        r.diagnostics = format!(
            "certified h + τ + τ_in < {total:.6}; residual h + τ < {:.6}",
            total - q.tau_in
        );
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::search::{log_grid_coordinate_max, LogGridSearch};
    use super::*;

    fn unit_query() -> BoundQuery {
        BoundQuery {
            mu: 1.0,
            eps: 1.0,
            omega: 0.0,
            lambda_as: 0.0,
            sigma_a: 1.0,
            sigma_g: 1.0,
            sigma_k: 1.0,
            h: 0.1,
            tau: 0.0,
            tau_in: 0.0,
        }
    }

    #[test]
    fn margin_examples() {
        let q = BoundQuery { omega: 0.3, h: 0.0, ..unit_query() };
        let p = SearchParams { alpha: 1e6, beta: 1e6, ..Default::default() };
        let m = theorem1_margin(&q, &p);
        assert!((m - (q.mu - q.eps * q.omega)).abs() < 1e-4 * (q.mu - q.eps * q.omega));

        let m = theorem1_margin(&unit_query(), &SearchParams { alpha: 1.0, beta: 1.0, ..Default::default() });
        // (1+α)(1+1/β)σ_A² = 4 and (1+β)(7/3) = 14/3 at α = β = 1.
        assert!((m - (1.0 - (4.0 + 2.0 * 7.0 / 3.0) * 0.01)).abs() < 1e-14);
        assert!((m - 0.913_333_333).abs() < 1e-8);

        let q = BoundQuery { omega: 1.0, h: 0.0, ..unit_query() };
        for &a in &[1e-3, 0.1, 1.0, 10.0, 1e3] {
            for &b in &[1e-3, 0.1, 1.0, 10.0, 1e3] {
                assert!(lag_margin(&q, 0.0, a, b) <= 0.0);
            }
        }
    }

    #[test]
    fn closed_form_envelope_matches_numeric_search() {
        let q = BoundQuery { omega: 0.04, lambda_as: 0.3, sigma_a: 1.7, sigma_g: 2.0, sigma_k: 0.8, ..unit_query() };
        for &s in &[0.01, 0.03, 0.08] {
            let (_, v) = log_grid_coordinate_max(
                |p: &[f64]| lag_margin(&q, s, p[0], p[1]),
                2,
                &LogGridSearch::default(),
            );
            let exact = max_margin(&q, s);
            assert!(exact >= v - 1e-12);
            assert!((exact - v).abs() < 1e-6 * (1.0 + exact.abs()), "s={s}: {exact} vs {v}");
            let (a, b) = optimal_split(&q, s);
            assert!((lag_margin(&q, s, a, b) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_without_coupling_or_error() {
        let q = BoundQuery { sigma_a: 0.0, sigma_g: 0.0, sigma_k: 0.0, ..unit_query() };
        let r = theorem1_budget(&q).unwrap();
        assert!(r.feasible && r.unbounded && r.budget.is_none());
        assert!(r.diagnostics.contains("unbounded"));
    }

    #[test]
    fn budget_brackets_zero() {
        let q = BoundQuery { omega: 0.01, lambda_as: 0.5, ..unit_query() };
        let r = theorem1_budget(&q).unwrap();
        let s = r.budget.unwrap();
        assert!(max_margin(&q, s).abs() <= 1e-6);
        assert!(max_margin(&q, s * (1.0 - 1e-3)) > 0.0);
        assert!(max_margin(&q, s * (1.0 + 1e-3)) <= 0.0);
        assert!(r.feasible && r.margin > 0.0);
    }

    #[test]
    fn negative_lambda_uses_first_sign_change() {
        let q = BoundQuery { omega: 0.5, lambda_as: -3.0, sigma_a: 3.0, sigma_g: 2.0, ..unit_query() };
        let LagBudget::Bounded(s) = lag_budget(&q) else { panic!("expected a bound") };
        for k in 1..1000 {
            assert!(max_margin(&q, s * k as f64 / 1000.0) > 0.0);
        }
        assert!(max_margin(&q, s * 1.001) <= 0.0);
    }

    #[test]
    fn infeasible_when_errors_dominate() {
        let q = BoundQuery { omega: 2.0, ..unit_query() };
        assert!(!theorem1_budget(&q).unwrap().feasible);
        assert!(!corollary2_budget(&q).unwrap().feasible);
        assert!(!theorem5_budget(&q).unwrap().feasible);
    }

    #[test]
    fn corollaries_and_input_delay() {
        let q = BoundQuery { omega: 0.01, ..unit_query() };
        let c1 = corollary1_budget(&BoundQuery { omega: 0.0, ..q }, 1.1).unwrap();
        assert_eq!(c1.details["omega"], (1.1f64 - 1.0).powi(2));
        assert!((c1.budget.unwrap() - theorem1_budget(&q).unwrap().budget.unwrap()).abs() < 1e-9);

        let near = corollary1_budget(&q, 1.0 + 1e-6).unwrap().budget.unwrap();
        let zero = theorem1_budget(&BoundQuery { omega: 0.0, ..q }).unwrap().budget.unwrap();
        assert!((near - zero).abs() < 1e-4 * zero);
        assert!(corollary1_budget(&q, 1.0).is_err());

        let b1 = theorem1_budget(&q).unwrap().budget.unwrap();
        let c2 = corollary2_budget(&BoundQuery { tau: 0.3, ..q }).unwrap().budget.unwrap();
        assert_eq!(b1, c2);

        let t5 = theorem5_budget(&q).unwrap().budget.unwrap();
        assert_eq!(t5, b1);
        let t5c = theorem5_budget(&BoundQuery { tau_in: 0.01, ..q }).unwrap();
        assert!((t5c.budget.unwrap() - (b1 - 0.01)).abs() < 1e-12);
        let over = theorem5_budget(&BoundQuery { tau_in: 1.0, ..q }).unwrap();
        assert!(!over.feasible);
    }

    #[test]
    fn invalid_queries() {
        assert!(theorem1_budget(&BoundQuery { mu: 0.0, ..unit_query() }).is_err());
        assert!(theorem1_budget(&BoundQuery { omega: -1.0, ..unit_query() }).is_err());
        assert!(theorem1_budget(&BoundQuery { sigma_a: f64::NAN, ..unit_query() }).is_err());
    }
}
