//! `run`: simulate a scenario, check it against the applicable budget and
//! write the trace files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use async_lab::bounds::{theorem2_budget, theorem3_budget, BoundReport};
use async_lab::design::GainDesign;
use async_lab::sim::{metrics_with_tol, run, write_csv, Metrics, Mode, Scenario, ScheduleSpec, Trace};
use serde::Serialize;

use crate::bound::{error_omega, Theorem};
use crate::scenario::ScenarioFile;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct NamedBound {
    pub theorem: &'static str,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario_digest: String,
    pub mode: Mode,
    pub seed: u64,
    pub horizon: f64,
    /// Worst `h + τ (+ τ_in)` the schedule can produce, when known.
    pub sampling_lag: Option<f64>,
    pub bounds: Vec<NamedBound>,
    pub consensus: bool,
    pub tol_consensus: f64,
    pub initial_delta_sq: f64,
    pub final_delta_sq: f64,
    pub transmissions: usize,
    pub events: usize,
    pub snapshots: usize,
    pub runtime_s: f64,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

fn sampling_lag(s: &Scenario) -> Option<f64> {
    let lag = match &s.schedule {
        ScheduleSpec::Generated { h_max, tau_max, .. } => h_max + tau_max,
        ScheduleSpec::Explicit { schedules } => {
            let gap = schedules
                .iter()
                .flat_map(|c| c.sample_instants.windows(2).map(|w| w[1] - w[0]))
                .fold(0.0, f64::max);
            let tau = schedules.iter().flat_map(|c| c.delays.iter().copied()).fold(0.0, f64::max);
            gap + tau
        }
        ScheduleSpec::Continuous => return None,
    };
    Some(lag + s.input_delay)
}

/// Budgets that apply to the scenario as configured.
fn applicable_bounds(f: &ScenarioFile, s: &Scenario, design: Option<&GainDesign>) -> (Vec<NamedBound>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let mut push = |t: Theorem, r: Result<BoundReport, CliError>| match r {
        Ok(report) => out.push(NamedBound { theorem: t.label(), report }),
        Err(e) => warnings.push(format!("{} not evaluated: {e}", t.label())),
    };
    let omega = || -> Result<f64, CliError> {
        error_omega(&s.error_model)?.ok_or_else(|| CliError::Input("error model has no ω".into()))
    };
    match s.mode {
        Mode::RelativeEdges if s.saturation.is_none() => {
            if let (Some(d), Some(g)) = (design, &s.graph) {
                let alg = async_lab::graphs::build_algebra(g);
                push(Theorem::T2, omega().and_then(|w| Ok(theorem2_budget(&s.model, d, &alg, w)?)));
            }
        }
        Mode::Broadcast => {
            let unit_gain = s.gain.shape() == (1, 1) && s.gain[(0, 0)] == 1.0;
            let integrator = s.model.state_dim() == 1 && s.model.a()[(0, 0)] == 0.0 && s.model.b()[(0, 0)] == 1.0;
            let error_free = matches!(s.error_model, async_lab::sampling::ErrorModel::None);
            if unit_gain && integrator && error_free && s.input_delay == 0.0 {
                let alg = async_lab::graphs::build_algebra(s.graph.as_ref().expect("validated"));
                push(Theorem::T3, theorem3_budget(&alg).map_err(Into::into));
            }
        }
        Mode::AbstractCoupled => {
            let b = f.bound.clone().unwrap_or_default();
            if b.mu.is_some() && b.eps.is_some() {
                let t = if s.input_delay > 0.0 { Theorem::T5 } else { Theorem::T1 };
                push(t, crate::bound::compute(f, t));
            }
        }
        _ => {}
    }
    (out, warnings)
}

fn write_outputs(out: &Path, trace: &Trace, m: &Metrics) -> Result<Vec<String>, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("writing to {}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(io)?;
    let csv = out.join("trace.csv");
    write_csv(trace, m, BufWriter::new(File::create(&csv).map_err(io)?)).map_err(io)?;
    let events = out.join("events.json");
    serde_json::to_writer(BufWriter::new(File::create(&events).map_err(io)?), &trace.events)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(vec![csv.display().to_string(), events.display().to_string()])
}

/// Runs an already-built scenario and writes its outputs under `out`.
pub fn simulate(
    s: &Scenario,
    digest: String,
    bounds: Vec<NamedBound>,
    mut warnings: Vec<String>,
    out: Option<&Path>,
    tol: f64,
) -> Result<(RunReport, Metrics), CliError> {
    let lag = sampling_lag(s);
    for b in &bounds {
        match (b.report.budget, lag) {
            (Some(budget), Some(lag)) if b.report.feasible && !b.report.unbounded && lag > budget => {
                warnings.push(format!(
                    "budget exceeded: h + τ = {lag:.6} > certified {budget:.6} ({})",
                    b.theorem
                ))
            }
            _ if !b.report.feasible => warnings.push(format!("{}: no certified budget ({})", b.theorem, b.report.diagnostics)),
            _ => {}
        }
    }
    let start = Instant::now();
    let trace = run(s).map_err(|e| CliError::Runtime(e.to_string()))?;
    let m = metrics_with_tol(&trace, s, tol).map_err(|e| CliError::Runtime(e.to_string()))?;
    let runtime_s = start.elapsed().as_secs_f64();
    warnings.extend(m.warnings.iter().cloned());
    let mut outputs = Vec::new();
    if let Some(dir) = out {
        outputs = write_outputs(dir, &trace, &m)?;
        outputs.push(dir.join("report.json").display().to_string());
    }
    let report = RunReport {
        scenario_digest: digest,
        mode: s.mode,
        seed: s.seed,
        horizon: s.horizon,
        sampling_lag: lag,
        bounds,
        consensus: m.consensus,
        tol_consensus: m.tol_consensus,
        initial_delta_sq: m.initial_delta_sq,
        final_delta_sq: m.final_delta_sq,
        transmissions: trace.transmissions(),
        events: trace.events.len(),
        snapshots: trace.times.len(),
        runtime_s,
        outputs,
        warnings,
    };
    if let Some(dir) = out {
        let path = dir.join("report.json");
        let file = File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &report).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok((report, m))
}

pub fn execute(f: &ScenarioFile, out: &Path, tol: f64) -> Result<RunReport, CliError> {
    let (s, design) = f.to_scenario()?;
    let (bounds, warnings) = applicable_bounds(f, &s, design.as_ref());
    Ok(simulate(&s, f.digest(), bounds, warnings, Some(out), tol)?.0)
}
