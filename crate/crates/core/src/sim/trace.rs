//! Run output and the metrics derived from it.

use std::io::Write;

use serde::Serialize;

use super::queue::EventKind;
use super::{Mode, Scenario};
use crate::graphs::build_algebra;
use crate::matan::expm;
use crate::{Result, Vector};

/// Trailing window over which the consensus flag is assessed.
pub const CONSENSUS_WINDOW: f64 = 1.0;
/// Bin width of the event-count series.
pub const COUNT_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub channel: usize,
    pub kind: EventKind,
    /// Sample: transmitted. Deliver: hold changed.
    pub update: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldRecord {
    pub time: f64,
    pub value: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub mode: Mode,
    pub agents: usize,
    pub state_dim: usize,
    pub horizon: f64,
    pub x0_sum: Vector,
    /// Strictly increasing snapshot times.
    pub times: Vec<f64>,
    /// Stacked states at `times`.
    pub states: Vec<Vector>,
    /// `δ̃ᵀδ̃` at `times` (broadcast modes).
    pub delta_tilde_sq: Option<Vec<f64>>,
    /// Per-channel zero-order-hold history.
    pub holds: Vec<Vec<HoldRecord>>,
    pub events: Vec<EventRecord>,
    /// Per-channel sample instants that were transmitted.
    pub update_times: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn new(s: &Scenario, channels: usize, x0_sum: Vector) -> Self {
        Self {
            mode: s.mode,
            agents: s.agent_count(),
            state_dim: s.state_dim(),
            horizon: s.horizon,
            x0_sum,
            times: Vec::new(),
            states: Vec::new(),
            delta_tilde_sq: s.mode.uses_broadcast().then(Vec::new),
            holds: vec![Vec::new(); channels],
            events: Vec::new(),
            update_times: vec![Vec::new(); channels],
        }
    }

    pub(crate) fn push_snapshot(&mut self, t: f64, x: Vector, tilde: Option<f64>) {
        if self.times.last() == Some(&t) {
            *self.states.last_mut().expect("same length") = x;
            if let (Some(v), Some(d)) = (self.delta_tilde_sq.as_mut(), tilde) {
                *v.last_mut().expect("same length") = d;
            }
            return;
        }
        self.times.push(t);
        self.states.push(x);
        if let (Some(v), Some(d)) = (self.delta_tilde_sq.as_mut(), tilde) {
            v.push(d);
        }
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("every trace has an initial snapshot")
    }

    /// Smallest gap between consecutive transmissions on any channel.
    pub fn min_update_gap(&self) -> Option<f64> {
        self.update_times
            .iter()
            .flat_map(|u| u.windows(2).map(|w| w[1] - w[0]))
            .min_by(f64::total_cmp)
    }

    pub fn transmissions(&self) -> usize {
        self.update_times.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub times: Vec<f64>,
    /// `δᵀδ` (in the abstract mode `zᵀz`).
    pub delta_sq: Vec<f64>,
    /// `½ zᵀ(I⊗P)z` in edge modes when `P` is known.
    pub lyapunov: Option<Vec<f64>>,
    pub delta_tilde_sq: Option<Vec<f64>>,
    /// Transmissions per [`COUNT_WINDOW`], starting at `t = 0`.
    pub event_counts: Vec<usize>,
    pub initial_delta_sq: f64,
    pub final_delta_sq: f64,
    pub tol_consensus: f64,
    /// `δᵀδ < tol_consensus` at every snapshot of the trailing window.
    pub consensus: bool,
    pub min_update_gap: Option<f64>,
    pub warnings: Vec<String>,
}

/// Relative consensus tolerance: `δᵀδ < 1e-8·(1 + δ(0)ᵀδ(0))`.
pub const DEFAULT_CONSENSUS_TOL: f64 = 1e-8;

pub fn metrics(trace: &Trace, s: &Scenario) -> Result<Metrics> {
    metrics_with_tol(trace, s, DEFAULT_CONSENSUS_TOL)
}

/// [`metrics`] with the consensus threshold `rel_tol·(1 + δ(0)ᵀδ(0))`.
pub fn metrics_with_tol(trace: &Trace, s: &Scenario, rel_tol: f64) -> Result<Metrics> {
    let nn = trace.state_dim;
    let n = trace.agents;
    let mut warnings = Vec::new();
    let mut delta_sq = Vec::with_capacity(trace.times.len());
    for (t, x) in trace.times.iter().zip(&trace.states) {
        if s.mode.is_consensus() {
            let kappa = expm(s.model.a(), *t)? * &trace.x0_sum / n as f64;
            let mut d = 0.0;
            for a in 0..n {
                d += (x.rows(a * nn, nn) - &kappa).norm_squared();
            }
            delta_sq.push(d);
        } else {
            delta_sq.push(x.norm_squared());
        }
    }
    let lyapunov = if s.mode.uses_edges() {
        match &s.lyapunov_p {
            Some(p) => {
                let d = build_algebra(s.graph.as_ref().expect("validated")).incidence;
                Some(
                    trace
                        .states
                        .iter()
                        .map(|x| {
                            (0..d.ncols())
                                .map(|e| {
                                    let mut z = Vector::zeros(nn);
                                    for a in 0..n {
                                        if d[(a, e)] != 0.0 {
                                            z.axpy(d[(a, e)], &x.rows(a * nn, nn), 1.0);
                                        }
                                    }
                                    0.5 * z.dot(&(p * &z))
                                })
                                .sum()
                        })
                        .collect(),
                )
            }
            None => {
                warnings.push("no P supplied: V(t) skipped".to_string());
                None
            }
        }
    } else {
        None
    };
    let bins = (trace.horizon / COUNT_WINDOW).ceil().max(1.0) as usize;
    let mut event_counts = vec![0usize; bins];
    for u in trace.update_times.iter().flatten() {
        let b = ((u / COUNT_WINDOW).floor() as usize).min(bins - 1);
        event_counts[b] += 1;
    }
    let initial_delta_sq = delta_sq.first().copied().unwrap_or(0.0);
    let final_delta_sq = delta_sq.last().copied().unwrap_or(0.0);
    let tol_consensus = rel_tol * (1.0 + initial_delta_sq);
    let t_end = trace.times.last().copied().unwrap_or(0.0);
    let consensus = trace.horizon >= CONSENSUS_WINDOW
        && trace
            .times
            .iter()
            .zip(&delta_sq)
            .filter(|(t, _)| **t >= t_end - CONSENSUS_WINDOW)
            .all(|(_, d)| *d < tol_consensus);
    Ok(Metrics {
        times: trace.times.clone(),
        delta_sq,
        lyapunov,
        delta_tilde_sq: trace.delta_tilde_sq.clone(),
        event_counts,
        initial_delta_sq,
        final_delta_sq,
        tol_consensus,
        consensus,
        min_update_gap: trace.min_update_gap(),
        warnings,
    })
}

/// Largest `‖Σᵢ xᵢ(t) - e^{At} Σᵢ xᵢ(0)‖`, relative to `1 + ‖Σᵢ xᵢ(0)‖`.
pub fn average_invariance_error(trace: &Trace, s: &Scenario) -> Result<f64> {
    let nn = trace.state_dim;
    let scale = 1.0 + trace.x0_sum.norm();
    let mut worst: f64 = 0.0;
    for (t, x) in trace.times.iter().zip(&trace.states) {
        let mut sum = Vector::zeros(nn);
        for a in 0..trace.agents {
            sum += x.rows(a * nn, nn);
        }
        let expected = expm(s.model.a(), *t)? * &trace.x0_sum;
        worst = worst.max((sum - expected).norm() / scale);
    }
    Ok(worst)
}

/// CSV with columns `t, x_1_1 … x_n_N, delta_sq[, V]`.
pub fn write_csv(trace: &Trace, m: &Metrics, mut w: impl Write) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    for a in 1..=trace.agents {
        for j in 1..=trace.state_dim {
            header.push(format!("x_{a}_{j}"));
        }
    }
    header.push("delta_sq".into());
    if m.lyapunov.is_some() {
        header.push("V".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, (t, x)) in trace.times.iter().zip(&trace.states).enumerate() {
        let mut row = vec![format!("{t}")];
        row.extend(x.iter().map(|v| format!("{v}")));
        row.push(format!("{}", m.delta_sq[i]));
        if let Some(v) = &m.lyapunov {
            row.push(format!("{}", v[i]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
