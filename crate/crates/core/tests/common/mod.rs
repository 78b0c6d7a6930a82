//! Shared test support: a reference ODE integrator and random scenarios.
#![allow(dead_code)]

use async_lab::graphs::InteractionGraph;
use async_lab::sampling::ErrorModel;
use async_lab::sim::{FlowMap, Mode, OutputConfig, Scenario, ScheduleSpec, StartupHold};
use async_lab::{LtiModel, Matrix, Result, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adaptive Dormand–Prince 5(4) integration of `ẋ = A x + w`, restarted on
/// every call. Independent of the matrix exponential.
pub struct Dopri5 {
    pub a: Matrix,
    pub rtol: f64,
    pub atol: f64,
}

impl Dopri5 {
    pub fn new(a: Matrix) -> Self {
        Self { a, rtol: 1e-12, atol: 1e-14 }
    }

    fn integrate(&self, x0: &Vector, w: &Vector, dt: f64) -> Vector {
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let f = |x: &Vector| &self.a * x + w;
        let mut x = x0.clone();
        let mut t = 0.0;
        let mut h = (dt / 10.0).max(1e-6).min(dt);
        while t < dt {
            if t + h > dt {
                h = dt - t;
            }
            let mut k: Vec<Vector> = Vec::with_capacity(7);
            for i in 0..7 {
                let mut xi = x.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[i][j] != 0.0 {
                        xi.axpy(h * A[i][j], kj, 1.0);
                    }
                }
                k.push(f(&xi));
            }
            let mut x5 = x.clone();
            let mut x4 = x.clone();
            for i in 0..7 {
                x5.axpy(h * B5[i], &k[i], 1.0);
                x4.axpy(h * B4[i], &k[i], 1.0);
            }
            let err = (0..x.len())
                .map(|i| {
                    let sc = self.atol + self.rtol * x[i].abs().max(x5[i].abs());
                    ((x5[i] - x4[i]) / sc).powi(2)
                })
                .sum::<f64>()
                .sqrt()
                / (x.len() as f64).sqrt();
            if err <= 1.0 || h < 1e-12 {
                t += h;
                x = x5;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        }
        x
    }
}

impl FlowMap for Dopri5 {
    fn propagate(&mut self, states: &mut [Vector], drifts: &[Vector], dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Ok(());
        }
        for (x, w) in states.iter_mut().zip(drifts) {
            *x = self.integrate(x, w, dt);
        }
        Ok(())
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(lo..=hi))
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_graph(r: &mut impl Rng, n: usize) -> InteractionGraph {
    let mut edges = Vec::new();
    for v in 2..=n {
        edges.push((r.random_range(1..v), v));
    }
    for i in 1..=n {
        for j in i + 1..=n {
            if r.random_bool(0.3) && !edges.contains(&(i, j)) {
                edges.push((i, j));
            }
        }
    }
    InteractionGraph::new(n, edges).expect("valid random graph")
}

/// Random scenario with `n ≤ 6`, `N ≤ 3`, horizon ≤ 10 in one of the
/// abstract, relative-edge or broadcast modes, optionally with errors.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut r = rng(seed);
    let nn = r.random_range(1..=3);
    let mm = r.random_range(1..=nn);
    let n = r.random_range(2..=6);
    let a = random_matrix(&mut r, nn, nn, -1.0, 1.0);
    let b = random_matrix(&mut r, nn, mm, -1.0, 1.0);
    let model = LtiModel::new(a, b).expect("finite");
    let mode = [Mode::AbstractCoupled, Mode::RelativeEdges, Mode::Broadcast][r.random_range(0..3)];
    let graph = random_connected_graph(&mut r, n);
    let (gain, coupling) = match mode {
        Mode::AbstractCoupled => (
            random_matrix(&mut r, nn, nn, -0.5, 0.5),
            Some(random_matrix(&mut r, n, n, -1.0, 1.0)),
        ),
        _ => (random_matrix(&mut r, mm, nn, -0.5, 0.5), None),
    };
    let h_min = r.random_range(0.05..0.2);
    let h_max = h_min * r.random_range(1.0..2.0);
    let error_model = match r.random_range(0..3) {
        0 => ErrorModel::None,
        1 => ErrorModel::Multiplicative { omega: r.random_range(0.0..0.1), adversarial: false },
        _ => ErrorModel::LogQuantizer { level: 1.1 },
    };
    Scenario {
        mode,
        x0: Vector::from_fn(n * nn, |_, _| r.random_range(-1.0..=1.0)),
        model,
        gain,
        graph: Some(graph),
        coupling,
        schedule: ScheduleSpec::Generated { h_min, h_max, tau_max: h_min * r.random_range(0.0..1.0) },
        error_model,
        saturation: None,
        input_delay: 0.0,
        horizon: r.random_range(1.0..=10.0),
        seed,
        startup: StartupHold::Zero,
        lyapunov_p: None,
        output: OutputConfig { grid_points: 50, ..OutputConfig::default() },
    }
}

/// Relative final-state discrepancy.
pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}
