//! Propagation of `ẋ = A x + w` with `w` constant over a step.

use crate::matan::exp_and_integral;
use crate::{Matrix, Result, Vector};

/// Advances every agent state over `dt` with its drift held constant.
pub trait FlowMap {
    fn propagate(&mut self, states: &mut [Vector], drifts: &[Vector], dt: f64) -> Result<()>;
}

/// `x ← e^{AΔ}x + Φ(Δ)w` with `Φ(Δ) = ∫₀^Δ e^{As} ds`, from one augmented
/// block exponential per distinct step length.
#[derive(Debug, Clone)]
pub struct ExactFlow {
    a: Matrix,
    cached: Option<(f64, Matrix, Matrix)>,
}

impl ExactFlow {
    pub fn new(a: Matrix) -> Self {
        Self { a, cached: None }
    }

    fn step(&mut self, dt: f64) -> Result<(&Matrix, &Matrix)> {
        if self.cached.as_ref().is_none_or(|(t, _, _)| *t != dt) {
            let (e, phi) = exp_and_integral(&self.a, dt)?;
            self.cached = Some((dt, e, phi));
        }
        let (_, e, phi) = self.cached.as_ref().expect("just filled");
        Ok((e, phi))
    }
}

impl FlowMap for ExactFlow {
    fn propagate(&mut self, states: &mut [Vector], drifts: &[Vector], dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Ok(());
        }
        let (e, phi) = self.step(dt)?;
        for (x, w) in states.iter_mut().zip(drifts) {
            *x = e * &*x + phi * w;
        }
        Ok(())
    }
}
