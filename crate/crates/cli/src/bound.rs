//! `bound`: assemble the inputs each theorem needs from a scenario file.

use async_lab::bounds::{
    corollary1_budget, corollary1_consensus_budget, corollary2_budget, quantizer_omega,
    theorem1_budget, theorem2_budget, theorem3_budget, theorem4_report, theorem4_search,
    theorem5_budget, BoundQuery, BoundReport, SearchParams, Theorem4Inputs,
    DEFAULT_THETA,
};
use async_lab::bounds::search::LogGridSearch;
use async_lab::matan::max_singular_value;
use async_lab::model::matrix_from_rows;
use async_lab::sampling::ErrorModel;
use async_lab::sim::{Mode, ScheduleSpec};
use async_lab::{LtiModel, Vector};
use clap::ValueEnum;
use serde::Serialize;

use crate::scenario::{BoundSpec, ScenarioFile};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Theorem {
    #[value(name = "1")]
    T1,
    #[value(name = "2")]
    T2,
    #[value(name = "3")]
    T3,
    #[value(name = "4")]
    T4,
    #[value(name = "c1")]
    C1,
    #[value(name = "c2")]
    C2,
    #[value(name = "5")]
    T5,
}

impl Theorem {
    pub fn label(self) -> &'static str {
        match self {
            Theorem::T1 => "theorem 1",
            Theorem::T2 => "theorem 2",
            Theorem::T3 => "theorem 3",
            Theorem::T4 => "theorem 4",
            Theorem::C1 => "corollary 1",
            Theorem::C2 => "corollary 2",
            Theorem::T5 => "theorem 5",
        }
    }
}

/// `ω` implied by the error model, if it has one.
pub fn error_omega(e: &ErrorModel) -> Result<Option<f64>, CliError> {
    Ok(match *e {
        ErrorModel::None => Some(0.0),
        ErrorModel::Multiplicative { omega, .. } | ErrorModel::EventTrigger { omega, .. } => Some(omega),
        ErrorModel::LogQuantizer { level } => Some(quantizer_omega(level)?),
        ErrorModel::Additive { .. } => None,
    })
}

fn spec(f: &ScenarioFile) -> BoundSpec {
    f.bound.clone().unwrap_or_default()
}

fn omega(f: &ScenarioFile) -> Result<f64, CliError> {
    match spec(f).omega {
        Some(w) => Ok(w),
        None => error_omega(&f.error_model)?
            .ok_or_else(|| CliError::Input("additive errors have no ω; set bound.omega".into())),
    }
}

fn quant_level(f: &ScenarioFile) -> Result<f64, CliError> {
    match (spec(f).quant_level, f.error_model) {
        (Some(l), _) | (None, ErrorModel::LogQuantizer { level: l }) => Ok(l),
        _ => Err(CliError::Input("corollary 1 needs a log_quantizer error model or bound.quant_level".into())),
    }
}

/// Abstract-network query: `μ`, `ε` from the bound section, `σ_G`, `σ_K`
/// from it or from the coupling matrix and gain.
fn abstract_query(f: &ScenarioFile, omega: f64) -> Result<BoundQuery, CliError> {
    let b = spec(f);
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::Input(format!("abstract-network bounds need bound.{name}")))
    };
    let sigma_g = match (b.sigma_g, &f.coupling) {
        (Some(s), _) => s,
        (None, Some(g)) => max_singular_value(&matrix_from_rows(g, "coupling")?)?,
        (None, None) => return Err(CliError::Input("need bound.sigma_g or a coupling matrix".into())),
    };
    let sigma_k = match b.sigma_k {
        Some(s) => s,
        None => max_singular_value(&f.gain(Mode::AbstractCoupled)?.0)?,
    };
    let sc = f.model.spectral_constants();
    let q = BoundQuery {
        mu: need(b.mu, "mu")?,
        eps: need(b.eps, "eps")?,
        omega,
        lambda_as: sc.lambda_as,
        sigma_a: sc.sigma_a,
        sigma_g,
        sigma_k,
        h: 0.0,
        tau: 0.0,
        tau_in: f.input_delay,
    };
    q.validate()?;
    Ok(q)
}

/// `(h, τ)` from the bound section or the schedule generator limits.
fn sampling_limits(f: &ScenarioFile) -> Result<(f64, f64), CliError> {
    let b = spec(f);
    let (h, tau) = match &f.schedule {
        Some(ScheduleSpec::Generated { h_max, tau_max, .. }) => (Some(*h_max), Some(*tau_max)),
        _ => (None, None),
    };
    match (b.h.or(h), b.tau.or(tau)) {
        (Some(h), Some(t)) => Ok((h, t)),
        _ => Err(CliError::Input("need bound.h and bound.tau or a generated schedule".into())),
    }
}

fn delta_e(f: &ScenarioFile) -> Result<f64, CliError> {
    match (spec(f).delta_e, f.error_model) {
        (Some(d), _) => Ok(d),
        (None, ErrorModel::EventTrigger { cap: Some(c), .. }) => Ok(c),
        (None, ErrorModel::Additive { delta_e }) => Ok(delta_e),
        (None, ErrorModel::None) => Ok(0.0),
        _ => Err(CliError::Input("theorem 4 needs bound.delta_e, a capped trigger or additive errors".into())),
    }
}

fn is_single_integrator(m: &LtiModel) -> bool {
    m.state_dim() == 1 && m.input_dim() == 1 && m.a()[(0, 0)] == 0.0 && m.b()[(0, 0)] == 1.0
}

pub fn compute(f: &ScenarioFile, theorem: Theorem) -> Result<BoundReport, CliError> {
    let consensus = matches!(f.mode, Some(m) if m.is_consensus());
    Ok(match theorem {
        Theorem::T1 => theorem1_budget(&abstract_query(f, omega(f)?)?)?,
        Theorem::T2 => theorem2_budget(&f.model, &f.gain_design()?, &f.algebra()?, omega(f)?)?,
        Theorem::T3 => {
            if !is_single_integrator(&f.model) {
                return Err(CliError::Input("theorem 3 applies to single integrators (A = 0, B = 1)".into()));
            }
            theorem3_budget(&f.algebra()?)?
        }
        Theorem::C1 if consensus || (f.graph.is_some() && f.coupling.is_none()) => {
            corollary1_consensus_budget(&f.model, &f.gain_design()?, &f.algebra()?, quant_level(f)?)?
        }
        Theorem::C1 => corollary1_budget(&abstract_query(f, 0.0)?, quant_level(f)?)?,
        Theorem::C2 => corollary2_budget(&abstract_query(f, omega(f)?)?)?,
        Theorem::T5 => theorem5_budget(&abstract_query(f, omega(f)?)?)?,
        Theorem::T4 => {
            let (h, tau) = sampling_limits(f)?;
            let design = f.gain_design()?;
            let algebra = f.algebra()?;
            let x0_sum = match &f.x0 {
                Some(x) => {
                    let nn = f.model.state_dim();
                    let mut s = Vector::zeros(nn);
                    for chunk in x.chunks(nn) {
                        s += Vector::from_column_slice(chunk);
                    }
                    s
                }
                None => Vector::zeros(f.model.state_dim()),
            };
            let inputs = Theorem4Inputs {
                model: &f.model,
                design: &design,
                algebra: &algebra,
                h,
                tau,
                delta_e: delta_e(f)?,
                x0_sum,
            };
            let b = spec(f);
            let theta = b.theta.unwrap_or(DEFAULT_THETA);
            match (b.alpha, b.gamma, b.eta) {
                (Some(alpha), Some(gamma), Some(eta)) => {
                    let p = SearchParams { alpha, beta: b.beta.unwrap_or(1.0), gamma, eta, theta };
                    theorem4_report(&inputs, &p, b.beta.is_none())?
                }
                _ => match theorem4_search(&inputs, theta, &LogGridSearch::default())? {
                    Some((p, _)) => theorem4_report(&inputs, &p, false)?,
                    None => BoundReport::infeasible("no (α, γ, η) on the search grid satisfies the constraints"),
                },
            }
        }
    })
}
