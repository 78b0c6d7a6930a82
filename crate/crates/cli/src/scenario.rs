//! The JSON scenario file and its translation into a simulator scenario.

use std::path::Path;

use async_lab::design::{riccati_design, GainDesign};
use async_lab::graphs::{build_algebra, GraphAlgebra, InteractionGraph};
use async_lab::model::{matrix_from_rows, matrix_to_rows};
use async_lab::sampling::{ErrorModel, SaturationScaler};
use async_lab::sim::presets::random_x0;
use async_lab::sim::{Mode, OutputConfig, Scenario, ScheduleSpec, StartupHold};
use async_lab::{LtiModel, Matrix, Vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Riccati design request: `λ` and `μ` of the gain synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub lambda: f64,
    pub mu: f64,
}

/// Optional inputs for the bound commands. Anything left out is derived
/// from the rest of the file where possible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    /// Lyapunov decay `μ` of the abstract closed loop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// `λ_min(P)` lower constant `ε` of the abstract closed loop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quant_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

/// On-disk scenario. Only `model` is always required; each command checks
/// for the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: LtiModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<InteractionGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Explicit gain, rows of `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    /// `G` for the abstract mode, as rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default = "no_error")]
    pub error_model: ErrorModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationScaler>,
    #[serde(default)]
    pub input_delay: f64,
    /// Stacked initial state; drawn uniformly from `[-1, 1]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub startup: StartupHold,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSpec>,
}

fn no_error() -> ErrorModel {
    ErrorModel::None
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let f: Self = serde_json::from_str(text).map_err(|e| CliError::Input(format!("scenario file: {e}")))?;
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<(), CliError> {
        match (&self.gain, &self.design) {
            (Some(_), Some(_)) => Err(CliError::Input("give either `gain` or `design`, not both".into())),
            (None, None) => Err(CliError::Input("one of `gain` or `design` is required".into())),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn algebra(&self) -> Result<GraphAlgebra, CliError> {
        self.graph
            .as_ref()
            .map(build_algebra)
            .ok_or_else(|| CliError::Input("this command needs a `graph`".into()))
    }

    pub fn gain_design(&self) -> Result<GainDesign, CliError> {
        let d = self
            .design
            .ok_or_else(|| CliError::Input("this command needs a `design` section with lambda and mu".into()))?;
        Ok(riccati_design(&self.model, d.lambda, d.mu)?)
    }

    /// Gain in simulator form, together with the design when one was
    /// synthesised. The abstract mode absorbs `B` into the gain.
    pub fn gain(&self, mode: Mode) -> Result<(Matrix, Option<GainDesign>), CliError> {
        match &self.gain {
            Some(rows) => Ok((matrix_from_rows(rows, "gain")?, None)),
            None => {
                let d = self.gain_design()?;
                let k = if mode == Mode::AbstractCoupled { self.model.b() * &d.k } else { d.k.clone() };
                Ok((k, Some(d)))
            }
        }
    }

    pub fn to_scenario(&self) -> Result<(Scenario, Option<GainDesign>), CliError> {
        let mode = self.mode.ok_or_else(|| CliError::Input("`mode` is required to run".into()))?;
        let horizon = self.horizon.ok_or_else(|| CliError::Input("`horizon` is required to run".into()))?;
        let schedule = self
            .schedule
            .clone()
            .ok_or_else(|| CliError::Input("`schedule` is required to run".into()))?;
        let (gain, design) = self.gain(mode)?;
        let coupling = self.coupling.as_ref().map(|g| matrix_from_rows(g, "coupling")).transpose()?;
        let agents = match mode {
            Mode::AbstractCoupled => coupling.as_ref().map_or(0, |g| g.nrows()),
            _ => self.graph.as_ref().map_or(0, |g| g.vertex_count()),
        };
        let x0 = match &self.x0 {
            Some(v) => Vector::from_column_slice(v),
            None => random_x0(agents * self.model.state_dim(), 1.0, self.seed),
        };
        let lyapunov_p = design.as_ref().filter(|_| mode.uses_edges()).map(|d| d.p.clone());
        let s = Scenario {
            mode,
            model: self.model.clone(),
            gain,
            graph: self.graph.clone(),
            coupling,
            schedule,
            error_model: self.error_model,
            saturation: self.saturation,
            input_delay: self.input_delay,
            x0,
            horizon,
            seed: self.seed,
            startup: self.startup,
            lyapunov_p,
            output: self.outputs,
        };
        s.validate()?;
        Ok((s, design))
    }

    /// File form of a built-in scenario with an explicit gain.
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            model: s.model.clone(),
            graph: s.graph.clone(),
            mode: Some(s.mode),
            gain: Some(matrix_to_rows(&s.gain)),
            design: None,
            coupling: s.coupling.as_ref().map(matrix_to_rows),
            schedule: Some(s.schedule.clone()),
            error_model: s.error_model,
            saturation: s.saturation,
            input_delay: s.input_delay,
            x0: Some(s.x0.iter().copied().collect()),
            horizon: Some(s.horizon),
            seed: s.seed,
            startup: s.startup,
            outputs: s.output,
            bound: None,
        }
    }
}
