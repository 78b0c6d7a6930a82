//! `reproduce`: built-in examples with their published constants.

use std::path::Path;

use async_lab::bounds::{corollary1_consensus_budget, theorem3_budget, theorem4_report, SearchParams, Theorem4Inputs, DEFAULT_THETA};
use async_lab::sim::presets::{
    cycle5_algebra, example1_design, example1_scenario, example2_scenario, example3_design,
    example3_scenario,
};
use async_lab::sim::{Metrics, Scenario, CONSENSUS_WINDOW};
use async_lab::{LtiModel, Vector};

use crate::run::simulate;
use crate::scenario::ScenarioFile;
use crate::CliError;

struct Check {
    name: &'static str,
    expected: f64,
    tolerance: f64,
    actual: f64,
}

impl Check {
    fn pass(&self) -> bool {
        (self.actual - self.expected).abs() <= self.tolerance
    }
}

/// A simulated property rather than a published constant.
struct Property {
    name: String,
    holds: bool,
}

/// Published constants, plus a note on anything the optimiser chose.
fn constants(example: u8) -> Result<(Vec<Check>, Option<String>), CliError> {
    let alg = cycle5_algebra();
    let c = |name, expected, tolerance, actual| Check { name, expected, tolerance, actual };
    Ok(match example {
        1 => {
            let design = example1_design()?;
            let model = LtiModel::harmonic_oscillator();
            let r = corollary1_consensus_budget(&model, &design, &alg, 1.1)?;
            let checks = vec![
                c("K[1]", 0.5626, 1e-3, design.k[(0, 0)]),
                c("K[2]", 1.0633, 1e-3, design.k[(0, 1)]),
                c("h + τ budget", 0.017, 2e-3, r.budget.unwrap_or(f64::NAN)),
            ];
            (checks, None)
        }
        2 => {
            let r = theorem3_budget(&alg)?;
            let checks = vec![
                c("h + τ budget", 0.0691, 1e-3, r.budget.unwrap_or(f64::NAN)),
                c("γ*", 2.618034, 1e-4, r.details["gamma_star"]),
                c("inner objective", 0.145898, 1e-5, r.details["objective"]),
                c("2/λ_n", 0.5528, 1e-4, r.details["sync_comparison"]),
            ];
            (checks, None)
        }
        _ => {
            let design = example3_design()?;
            let model = LtiModel::single_integrator();
            let inputs = Theorem4Inputs {
                model: &model,
                design: &design,
                algebra: &alg,
                h: 0.025,
                tau: 0.02,
                delta_e: 0.08,
                x0_sum: Vector::zeros(1),
            };
            let p = SearchParams { alpha: 0.5, beta: 1.0, gamma: 3.188, eta: 1.6, theta: DEFAULT_THETA };
            let r = theorem4_report(&inputs, &p, true)?;
            let checks = vec![
                c("Δ(h)", 0.2894, 1e-3, r.details["delta"]),
                c("error bound", 0.4535, 1e-2, r.budget.unwrap_or(f64::NAN)),
            ];
            (checks, Some(format!("optimiser-selected β = {:.3e}", r.witness.beta)))
        }
    })
}

fn properties(example: u8, s: &Scenario, m: &Metrics) -> Vec<Property> {
    match example {
        1 | 2 => {
            let hit = m
                .times
                .iter()
                .zip(&m.delta_sq)
                .find(|(_, d)| **d < 1e-6 * m.initial_delta_sq)
                .map(|(t, _)| *t);
            vec![Property {
                name: format!(
                    "δᵀδ < 1e-6·δ(0)ᵀδ(0) before t = {} (reached at {})",
                    s.horizon,
                    hit.map_or("never".into(), |t| format!("{t:.3}"))
                ),
                holds: hit.is_some(),
            }]
        }
        _ => {
            let t_end = m.times.last().copied().unwrap_or(0.0);
            let min = m
                .delta_tilde_sq
                .iter()
                .flatten()
                .zip(&m.times)
                .filter(|(_, t)| **t >= t_end - CONSENSUS_WINDOW)
                .map(|(d, _)| *d)
                .fold(f64::INFINITY, f64::min);
            vec![Property {
                name: format!("trailing min δ̃ᵀδ̃ = {min:.3e} < 0.4535"),
                holds: min < 0.4535,
            }]
        }
    }
}

pub fn execute(example: u8, seed: u64, tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    let (checks, note) = constants(example)?;
    let s = match example {
        1 => example1_scenario(seed)?,
        2 => example2_scenario(seed)?,
        _ => example3_scenario(seed)?,
    };
    let digest = ScenarioFile::from_scenario(&s).digest();
    let (report, m) = simulate(&s, digest, Vec::new(), Vec::new(), out, tol)?;
    let props = properties(example, &s, &m);

    println!("example {example} (seed {seed})");
    println!("{:<20} {:>12} {:>10} {:>12}  result", "constant", "expected", "tol", "actual");
    for c in &checks {
        println!(
            "{:<20} {:>12} {:>10.0e} {:>12.6}  {}",
            c.name,
            c.expected,
            c.tolerance,
            c.actual,
            if c.pass() { "PASS" } else { "FAIL" }
        );
    }
    if let Some(n) = &note {
        println!("{n}");
    }
    for p in &props {
        println!("simulation: {}  {}", p.name, if p.holds { "PASS" } else { "FAIL" });
    }
    println!("consensus flag: {}; runtime {:.2} s", report.consensus, report.runtime_s);
    for o in &report.outputs {
        println!("wrote {o}");
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass())
        .map(|c| c.name)
        .chain(props.iter().filter(|p| !p.holds).map(|p| p.name.as_str()))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Golden(failed.join(", ")))
    }
}
