//! Exact event-driven simulation of agents coupled through sampled,
//! delayed, distorted, zero-order-held signals.
//!
//! Between consecutive events every hold is constant, so each agent obeys
//! `ẋᵢ = A xᵢ + wᵢ` with constant `wᵢ` and is advanced in closed form by
//! [`ExactFlow`]. A run is a single sequential loop over one totally
//! ordered queue; parallelism lives in [`sweep`].

mod engine;
mod flow;
pub mod presets;
mod queue;
pub mod sweep;
mod trace;

use serde::{Deserialize, Serialize};

use crate::graphs::{build_algebra, InteractionGraph};
use crate::sampling::{ChannelSchedule, ErrorModel, SaturationScaler};
use crate::{Error, LtiModel, Matrix, Result, Vector};

pub use engine::{run, run_event_triggered, run_with_flow, CHECKS_PER_DWELL, TRIGGER_BISECTION_TOL};
pub use flow::{ExactFlow, FlowMap};
pub use queue::EventKind;
pub use trace::{
    average_invariance_error, metrics, metrics_with_tol, write_csv, EventRecord, HoldRecord,
    Metrics, Trace, CONSENSUS_WINDOW, COUNT_WINDOW, DEFAULT_CONSENSUS_TOL,
};

/// Which signals are sampled and how they enter the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `ż = (I⊗A)z - (G⊗K)ẑ`: one channel per subsystem, `K` is `N×N`.
    AbstractCoupled,
    /// One channel per edge carrying the relative state, shared by both
    /// endpoints: `ẋ = (I⊗A)x - (D⊗BK)ẑ`.
    RelativeEdges,
    /// One channel per agent broadcasting its own state:
    /// `ẋ = (I⊗A)x - (DDᵀ⊗BK)x̂`.
    Broadcast,
    /// Broadcast channels updated by an event trigger.
    EventTriggered,
    /// Relative-edge channels whose holds are scaled by `ρ(·)`, usually
    /// with an input delay.
    Saturated,
}

impl Mode {
    pub fn uses_edges(self) -> bool {
        matches!(self, Mode::RelativeEdges | Mode::Saturated)
    }

    pub fn uses_broadcast(self) -> bool {
        matches!(self, Mode::Broadcast | Mode::EventTriggered)
    }

    pub fn is_consensus(self) -> bool {
        self != Mode::AbstractCoupled
    }
}

/// Where sample instants come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    /// Drawn per channel by [`crate::sampling::generate_schedule`].
    Generated { h_min: f64, h_max: f64, tau_max: f64 },
    Explicit { schedules: Vec<ChannelSchedule> },
    /// No sampling clock: event-triggered channels are watched
    /// continuously after each dwell period.
    Continuous,
}

/// Hold value of a channel before its first delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartupHold {
    /// The controller term is absent until the first delivery.
    #[default]
    Zero,
    /// The exact channel value at `t = 0`.
    InitialState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Uniform snapshot grid over `[0, horizon]` (in addition to events).
    pub grid_points: usize,
    /// Also snapshot at every sample/deliver/dwell event.
    pub snapshot_events: bool,
    pub max_events: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { grid_points: 1000, snapshot_events: true, max_events: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub model: LtiModel,
    /// `K`: `M×N` in consensus modes, `N×N` in the abstract mode.
    pub gain: Matrix,
    pub graph: Option<InteractionGraph>,
    /// `G` (abstract mode only).
    pub coupling: Option<Matrix>,
    pub schedule: ScheduleSpec,
    pub error_model: ErrorModel,
    pub saturation: Option<SaturationScaler>,
    /// Added to every delivery instant.
    pub input_delay: f64,
    /// Stacked initial state.
    pub x0: Vector,
    pub horizon: f64,
    pub seed: u64,
    pub startup: StartupHold,
    /// `P` for the edge Lyapunov function `½ zᵀ(I⊗P)z`.
    pub lyapunov_p: Option<Matrix>,
    pub output: OutputConfig,
}

/// Channel wiring: channel `c` samples `Σₐ sense[c,a] xₐ`; agent `a`
/// receives drift `-F Σ_c weights[a,c] ĥ_c`.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub agents: usize,
    pub channels: usize,
    pub sense: Matrix,
    pub weights: Matrix,
    pub feedback: Matrix,
}

impl Scenario {
    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    /// Number of agents (subsystems in the abstract mode).
    pub fn agent_count(&self) -> usize {
        match self.mode {
            Mode::AbstractCoupled => self.coupling.as_ref().map_or(0, |g| g.nrows()),
            _ => self.graph.as_ref().map_or(0, |g| g.vertex_count()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let nn = self.state_dim();
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be finite and ≥ 0", self.horizon));
        }
        if !(self.input_delay >= 0.0 && self.input_delay.is_finite()) {
            return bad(format!("input delay {} must be finite and ≥ 0", self.input_delay));
        }
        if self.gain.iter().any(|v| !v.is_finite()) {
            return bad("gain has non-finite entries".into());
        }
        match self.mode {
            Mode::AbstractCoupled => {
                let Some(g) = &self.coupling else {
                    return bad("abstract mode needs a coupling matrix G".into());
                };
                if g.nrows() != g.ncols() || g.nrows() == 0 {
                    return bad(format!("G must be square and non-empty, got {}×{}", g.nrows(), g.ncols()));
                }
                if self.gain.shape() != (nn, nn) {
                    return bad(format!("abstract mode needs K of shape {nn}×{nn}, got {:?}", self.gain.shape()));
                }
            }
            _ => {
                let Some(g) = &self.graph else {
                    return bad(format!("{:?} mode needs an interaction graph", self.mode));
                };
                if self.gain.shape() != (self.model.input_dim(), nn) {
                    return bad(format!(
                        "K must be {}×{nn}, got {:?}",
                        self.model.input_dim(),
                        self.gain.shape()
                    ));
                }
                if self.mode.uses_edges() && !g.is_connected() {
                    return bad("relative-state sampling needs a connected graph".into());
                }
                if self.mode.uses_edges() && g.edge_count() == 0 {
                    return bad("graph has no edges".into());
                }
            }
        }
        let n = self.agent_count();
        if self.x0.len() != n * nn {
            return bad(format!("x0 has length {}, expected {n}·{nn}", self.x0.len()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 has non-finite entries".into());
        }
        self.error_model.validate()?;
        if self.mode == Mode::EventTriggered && !self.error_model.is_event_triggered() {
            return bad("event_triggered mode needs an event_trigger error model".into());
        }
        if self.mode == Mode::Saturated && self.saturation.is_none() {
            return bad("saturated mode needs a saturation scaler".into());
        }
        match &self.schedule {
            ScheduleSpec::Continuous if !self.error_model.is_event_triggered() => {
                return bad("continuous schedules need an event_trigger error model".into());
            }
            ScheduleSpec::Explicit { schedules } if schedules.len() != self.channel_count() => {
                return bad(format!(
                    "{} explicit schedules for {} channels",
                    schedules.len(),
                    self.channel_count()
                ));
            }
            _ => {}
        }
        if self.output.grid_points == 1 {
            return bad("grid_points must be 0 or at least 2".into());
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        match self.mode {
            Mode::AbstractCoupled | Mode::Broadcast | Mode::EventTriggered => self.agent_count(),
            Mode::RelativeEdges | Mode::Saturated => self.graph.as_ref().map_or(0, |g| g.edge_count()),
        }
    }

    pub(crate) fn topology(&self) -> Topology {
        let n = self.agent_count();
        match self.mode {
            Mode::AbstractCoupled => Topology {
                agents: n,
                channels: n,
                sense: Matrix::identity(n, n),
                weights: self.coupling.clone().expect("validated"),
                feedback: self.gain.clone(),
            },
            _ => {
                let alg = build_algebra(self.graph.as_ref().expect("validated"));
                let feedback = self.model.b() * &self.gain;
                if self.mode.uses_edges() {
                    Topology {
                        agents: n,
                        channels: alg.edge_count(),
                        sense: alg.incidence.transpose(),
                        weights: alg.incidence,
                        feedback,
                    }
                } else {
                    Topology {
                        agents: n,
                        channels: n,
                        sense: Matrix::identity(n, n),
                        weights: alg.graph_laplacian,
                        feedback,
                    }
                }
            }
        }
    }
}
