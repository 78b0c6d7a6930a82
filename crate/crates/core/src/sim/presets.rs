//! Built-in scenarios for the three worked examples.
//!
//! All three use the 5-cycle. The topology figure is not machine-readable;
//! the cycle is inferred from the constants it must reproduce
//! (`λ₂ = 1.381966`, `λ_n = 3.618034`, `2/λ_n = 0.5528`).

use rand::Rng;

use super::{Mode, OutputConfig, Scenario, ScheduleSpec, StartupHold};
use crate::design::{riccati_design, GainDesign};
use crate::graphs::{algebraic_connectivity, build_algebra, GraphAlgebra, InteractionGraph};
use crate::sampling::{counter_rng, Domain, ErrorModel};
use crate::{LtiModel, Result, Vector};

pub const AGENTS: usize = 5;

pub fn cycle5() -> InteractionGraph {
    InteractionGraph::cycle(AGENTS).expect("5-cycle is valid")
}

pub fn cycle5_algebra() -> GraphAlgebra {
    build_algebra(&cycle5())
}

/// Initial states i.i.d. uniform in `[-scale, scale]`, keyed by the seed.
pub fn random_x0(len: usize, scale: f64, seed: u64) -> Vector {
    let mut rng = counter_rng(seed, Domain::Initial, 0, 0);
    Vector::from_fn(len, |_, _| rng.random_range(-scale..=scale))
}

/// Example 1 gain: harmonic oscillators, `λ = λ₂`, `μ = 1`.
pub fn example1_design() -> Result<GainDesign> {
    let l2 = algebraic_connectivity(&cycle5_algebra());
    riccati_design(&LtiModel::harmonic_oscillator(), l2, 1.0)
}

/// Example 3 gain: single integrators, `λ = μ = λ₂` so `P = K = 1`.
pub fn example3_design() -> Result<GainDesign> {
    let l2 = algebraic_connectivity(&cycle5_algebra());
    riccati_design(&LtiModel::single_integrator(), l2, l2)
}

/// Oscillators sampling relative states through a level-1.1 logarithmic
/// quantizer; gaps in `[0.005, 0.012]`, delays up to 0.005.
pub fn example1_scenario(seed: u64) -> Result<Scenario> {
    let design = example1_design()?;
    let model = LtiModel::harmonic_oscillator();
    Ok(Scenario {
        mode: Mode::RelativeEdges,
        gain: design.k.clone(),
        graph: Some(cycle5()),
        coupling: None,
        schedule: ScheduleSpec::Generated { h_min: 0.005, h_max: 0.012, tau_max: 0.005 },
        error_model: ErrorModel::LogQuantizer { level: 1.1 },
        saturation: None,
        input_delay: 0.0,
        x0: random_x0(AGENTS * model.state_dim(), 1.0, seed),
        horizon: 60.0,
        seed,
        startup: StartupHold::Zero,
        lyapunov_p: Some(design.p),
        output: OutputConfig::default(),
        model,
    })
}

/// Error-free broadcast single integrators inside the certified budget:
/// gaps in `[0.03, 0.04]`, delays up to 0.025 (`h + τ = 0.065 < 0.0691`).
pub fn example2_scenario(seed: u64) -> Result<Scenario> {
    let model = LtiModel::single_integrator();
    Ok(Scenario {
        mode: Mode::Broadcast,
        gain: crate::Matrix::from_element(1, 1, 1.0),
        graph: Some(cycle5()),
        coupling: None,
        schedule: ScheduleSpec::Generated { h_min: 0.03, h_max: 0.04, tau_max: 0.025 },
        error_model: ErrorModel::None,
        saturation: None,
        input_delay: 0.0,
        x0: random_x0(AGENTS, 1.0, seed),
        horizon: 20.0,
        seed,
        startup: StartupHold::Zero,
        lyapunov_p: None,
        output: OutputConfig::default(),
        model,
    })
}

/// Event-triggered broadcasting: gaps in `[0.02, 0.025]`, delays up to
/// 0.02, transmit when `|x - x̂| > min(0.3|x̂|, 0.08)` and the dwell time
/// 0.025 has elapsed since the last transmission.
pub fn example3_scenario(seed: u64) -> Result<Scenario> {
    let design = example3_design()?;
    let model = LtiModel::single_integrator();
    Ok(Scenario {
        mode: Mode::EventTriggered,
        gain: design.k.clone(),
        graph: Some(cycle5()),
        coupling: None,
        schedule: ScheduleSpec::Generated { h_min: 0.02, h_max: 0.025, tau_max: 0.02 },
        error_model: ErrorModel::EventTrigger {
            omega: 0.09,
            dwell: 0.025,
            cap: Some(0.08),
            rule: Default::default(),
        },
        saturation: None,
        input_delay: 0.0,
        x0: random_x0(AGENTS, 2.0, seed),
        horizon: 20.0,
        seed,
        startup: StartupHold::Zero,
        lyapunov_p: Some(design.p),
        output: OutputConfig::default(),
        model,
    })
}
