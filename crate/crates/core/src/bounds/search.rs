//! Derivative-free maximisers used by the parameter searches.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (hi - lo) > tol * (1.0 + x1.abs().max(x2.abs())) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Settings for [`log_grid_coordinate_max`].
#[derive(Debug, Clone, Copy)]
pub struct LogGridSearch {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    /// Relative tolerance of the golden-section refinement (in log space).
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LogGridSearch {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 1e3,
            grid_points: 20,
            tol: 1e-6,
            max_sweeps: 50,
        }
    }
}

/// Maximises `f` over the positive orthant, `dims` coordinates, in log
/// space: seeded by the best point of a `grid_points^dims` log-grid over
/// `[lo, hi]`, then refined by cyclic golden-section line searches, each
/// bracketed one grid step either side of the current coordinate.
///
/// Non-finite values of `f` are treated as `-∞`.
pub fn log_grid_coordinate_max(
    f: impl Fn(&[f64]) -> f64,
    dims: usize,
    cfg: &LogGridSearch,
) -> (Vec<f64>, f64) {
    let g = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let (llo, lhi) = (cfg.lo.ln(), cfg.hi.ln());
    let step = (lhi - llo) / (cfg.grid_points - 1) as f64;
    let axis: Vec<f64> = (0..cfg.grid_points).map(|i| (llo + step * i as f64).exp()).collect();

    let mut best = vec![axis[0]; dims];
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    'grid: loop {
        for (p, &i) in point.iter_mut().zip(&idx) {
            *p = axis[i];
        }
        let v = g(&point);
        if v > best_val {
            best_val = v;
            best.copy_from_slice(&point);
        }
        for d in 0..dims {
            idx[d] += 1;
            if idx[d] < cfg.grid_points {
                continue 'grid;
            }
            idx[d] = 0;
        }
        break;
    }
    if !best_val.is_finite() {
        return (best, best_val);
    }

    for _ in 0..cfg.max_sweeps {
        let before = best_val;
        for d in 0..dims {
            let centre = best[d].ln();
            let mut trial = best.clone();
            let (x, v) = golden_section_max(
                |lx| {
                    trial[d] = lx.exp();
                    g(&trial)
                },
                centre - step,
                centre + step,
                cfg.tol,
            );
            if v > best_val {
                best_val = v;
                best[d] = x.exp();
            }
        }
        if best_val - before <= cfg.tol * (1.0 + best_val.abs()) {
            break;
        }
    }
    (best, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, v) = golden_section_max(|x| -(x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_grid_finds_interior_maximum() {
        // Peak at (2, 0.05).
        let f = |p: &[f64]| -(p[0].ln() - 2f64.ln()).powi(2) - (p[1].ln() - 0.05f64.ln()).powi(2);
        let (x, v) = log_grid_coordinate_max(f, 2, &LogGridSearch::default());
        assert!((x[0] - 2.0).abs() < 1e-3 && (x[1] - 0.05).abs() < 1e-4, "{x:?}");
        assert!(v > -1e-8);
    }
}
