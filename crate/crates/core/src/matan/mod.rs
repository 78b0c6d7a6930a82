//! Dense real matrix analysis: exponentials, spectral constants and the
//! closed-form singular-value bounds every budget computation relies on.

mod expm;

use nalgebra::{SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

pub(crate) use expm::one_norm;

/// Below this magnitude `λ_As` is treated as zero and the limit forms of the
/// bounds are used.
pub const LAMBDA_ZERO_TOL: f64 = 1e-10;

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}×{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn symmetric_part_max_eig(m: &Matrix) -> Result<f64> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(sym_eigenvalues(&sym).into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of a symmetric matrix, sorted increasingly.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral norm `σ_max(M)`.
pub fn max_singular_value(m: &Matrix) -> Result<f64> {
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    if m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let svd = SVD::new(m.clone(), false, false);
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Maximum absolute row sum `‖M‖_∞`.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{M t}`.
pub fn expm(m: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if !t.is_finite() {
        return Err(Error::Range(format!("time {t} is not finite")));
    }
    expm::expm_scaled(&(m * t))
}

/// `Φ(t) = ∫₀ᵗ e^{M s} ds`, read off the top-right block of
/// `exp([[M, I], [0, 0]] t)`.
pub fn expm_integral(m: &Matrix, t: f64) -> Result<Matrix> {
    Ok(exp_and_integral(m, t)?.1)
}

/// Both `e^{M t}` and `∫₀ᵗ e^{M s} ds` from one augmented exponential.
pub fn exp_and_integral(m: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Range(format!("integration horizon {t} must be finite and ≥ 0")));
    }
    let n = m.nrows();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(m * t));
    for i in 0..n {
        aug[(i, n + i)] = t;
    }
    let e = expm::expm_scaled(&aug)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}

/// `λ_As` and `σ_A` of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    /// Largest eigenvalue of `(A + Aᵀ)/2`, 1/time.
    pub lambda_as: f64,
    /// Largest singular value of `A`, 1/time.
    pub sigma_a: f64,
}

impl SpectralConstants {
    pub fn of(a: &Matrix) -> Result<Self> {
        Ok(Self {
            lambda_as: symmetric_part_max_eig(a)?,
            sigma_a: max_singular_value(a)?,
        })
    }
}

/// `(e^{λ t} - 1)/λ`, continuously extended to `t` at `λ = 0`.
pub fn growth_integral(lambda: f64, t: f64) -> f64 {
    if lambda.abs() < LAMBDA_ZERO_TOL {
        t
    } else {
        (lambda * t).exp_m1() / lambda
    }
}

/// Upper bounds on the largest singular values of a matrix exponential
/// and its relatives, from `λ_As` and `σ_A` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Bounds {
    /// Bounds `σ_max(e^{At})`.
    pub bound_exp: f64,
    /// Bounds `σ_max(e^{At} - I)`.
    pub bound_exp_minus_i: f64,
    /// Bounds `σ_max(∫₀ᵗ e^{A(t-s)} ds)`.
    pub bound_integral: f64,
}

pub fn lemma1_bounds(c: SpectralConstants, t: f64) -> Result<Lemma1Bounds> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Range(format!("t = {t} must be finite and ≥ 0")));
    }
    let g = growth_integral(c.lambda_as, t);
    Ok(Lemma1Bounds {
        bound_exp: (c.lambda_as * t).exp(),
        bound_exp_minus_i: c.sigma_a * g,
        bound_integral: g,
    })
}

/// The five scalar expressions whose orderings hold for every `t ≥ 0`:
/// `lhs1 ≤ rhs1` and `lhs2a ≤ lhs2b ≤ rhs2b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Terms {
    /// `e^{2t} - 4e^t + 3 + 2t`
    pub lhs1: f64,
    /// `(2t³/3) e^{2t}`
    pub rhs1: f64,
    /// `t`
    pub lhs2a: f64,
    /// `e^t - 1`
    pub lhs2b: f64,
    /// `t e^t`
    pub rhs2b: f64,
}

pub fn lemma2_check(t: f64) -> Result<Lemma2Terms> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Range(format!("t = {t} must be finite and ≥ 0")));
    }
    // For t < 1 the leading terms cancel; sum the (all-positive) series
    // Σ_{k≥3} (2^k - 4) t^k / k! instead.
    let lhs1 = if t < 1.0 {
        let mut term = t * t / 2.0; // t^k / k! at k = 2
        let mut pow2 = 4.0;
        let mut sum = 0.0;
        for k in 3..60 {
            term *= t / k as f64;
            pow2 *= 2.0;
            let add = (pow2 - 4.0) * term;
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
        }
        sum
    } else {
        (2.0 * t).exp() - 4.0 * t.exp() + 3.0 + 2.0 * t
    };
    Ok(Lemma2Terms {
        lhs1,
        rhs1: 2.0 * t.powi(3) / 3.0 * (2.0 * t).exp(),
        lhs2a: t,
        lhs2b: t.exp_m1(),
        rhs2b: t * t.exp(),
    })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    /// Termwise Taylor series, summed until terms vanish.
    fn taylor_exp(a: &Matrix, t: f64) -> Matrix {
        let n = a.nrows();
        let mut sum = Matrix::identity(n, n);
        let mut term = Matrix::identity(n, n);
        for k in 1..200 {
            term = &term * a * (t / k as f64);
            sum += &term;
            if term.norm() < 1e-20 {
                break;
            }
        }
        sum
    }

    #[test]
    fn symmetric_part_examples() {
        assert_eq!(symmetric_part_max_eig(&m(2, 2, &[0., 1., -1., 0.])).unwrap(), 0.0);
        assert!((symmetric_part_max_eig(&m(2, 2, &[2., 0., 0., -3.])).unwrap() - 2.0).abs() < 1e-14);
        assert!((symmetric_part_max_eig(&m(2, 2, &[1., 4., 0., 1.])).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            symmetric_part_max_eig(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn singular_value_examples() {
        assert!((max_singular_value(&m(2, 2, &[0., 1., -1., 0.])).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(max_singular_value(&Matrix::zeros(2, 2)).unwrap(), 0.0);
        assert!((max_singular_value(&m(2, 2, &[3., 0., 4., 0.])).unwrap() - 5.0).abs() < 1e-13);
        let bad = m(1, 1, &[f64::NAN]);
        assert!(matches!(max_singular_value(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn expm_examples() {
        let z = Matrix::zeros(3, 3);
        assert_eq!(expm(&z, 5.0).unwrap(), Matrix::identity(3, 3));

        let rot = m(2, 2, &[0., 1., -1., 0.]);
        let r = expm(&rot, PI / 2.0).unwrap();
        let oracle = taylor_exp(&rot, PI / 2.0);
        assert!((&r - &oracle).amax() < 1e-14);
        assert!((&r - &rot).amax() < 1e-14);

        let d = expm(&m(2, 2, &[1., 0., 0., -1.]), 1.0).unwrap();
        assert!((d[(0, 0)] - E).abs() < 1e-14 * E);
        assert!((d[(1, 1)] - 1.0 / E).abs() < 1e-15);
        assert!(d[(0, 1)].abs() < 1e-16 && d[(1, 0)].abs() < 1e-16);
    }

    #[test]
    fn expm_matches_taylor_across_pade_orders() {
        let base = m(3, 3, &[0.3, -0.7, 0.2, 0.5, -0.1, 0.4, -0.6, 0.2, 0.1]);
        for &t in &[1e-3, 0.05, 0.5, 1.5, 3.0, 6.0] {
            let r = expm(&base, t).unwrap();
            let o = taylor_exp(&base, t);
            let rel = (&r - &o).amax() / o.amax();
            assert!(rel < 1e-13, "t={t}: rel {rel}");
        }
    }

    #[test]
    fn expm_overflow_is_range_error() {
        let big = m(2, 2, &[1e300, 0., 0., 1.]);
        assert!(matches!(expm(&big, 1e10), Err(Error::Range(_))));
        assert!(matches!(expm(&m(2, 2, &[800., 1., 0., 1.]), 1.0), Err(Error::Range(_))));
    }

    #[test]
    fn expm_integral_examples() {
        let i2 = expm_integral(&Matrix::zeros(2, 2), 2.0).unwrap();
        assert!((&i2 - Matrix::identity(2, 2) * 2.0).amax() < 1e-15);
        let s = expm_integral(&m(1, 1, &[1.0]), 1.0).unwrap();
        assert!((s[(0, 0)] - (E - 1.0)).abs() < 1e-14);

        // Composite Simpson on the rotation as oracle.
        let rot = m(2, 2, &[0., 1., -1., 0.]);
        let phi = expm_integral(&rot, PI).unwrap();
        let steps = 20_000;
        let h = PI / steps as f64;
        let mut quad = Matrix::zeros(2, 2);
        for k in 0..=steps {
            let w = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            quad += taylor_exp(&rot, k as f64 * h) * w;
        }
        quad *= h / 3.0;
        assert!((&phi - &quad).amax() < 1e-10);
        assert!((&phi - m(2, 2, &[0., 2., -2., 0.])).amax() < 1e-13);
    }

    #[test]
    fn lemma1_examples() {
        let a = 0.7;
        let am = Matrix::identity(3, 3) * a;
        let c = SpectralConstants::of(&am).unwrap();
        let b = lemma1_bounds(c, 1.3).unwrap();
        let actual = max_singular_value(&expm(&am, 1.3).unwrap()).unwrap();
        assert!((b.bound_exp - actual).abs() < 1e-13 * actual);

        let b = lemma1_bounds(SpectralConstants { lambda_as: 0.0, sigma_a: 1.0 }, 3.0).unwrap();
        assert_eq!((b.bound_exp, b.bound_exp_minus_i, b.bound_integral), (1.0, 3.0, 3.0));
    }

    #[test]
    fn lemma2_examples() {
        let z = lemma2_check(0.0).unwrap();
        assert_eq!((z.lhs1, z.rhs1, z.lhs2a, z.lhs2b, z.rhs2b), (0.0, 0.0, 0.0, 0.0, 0.0));
        let one = lemma2_check(1.0).unwrap();
        assert!((one.lhs1 - (E * E - 4.0 * E + 5.0)).abs() < 1e-12);
        assert!((one.lhs1 - 1.5159).abs() < 1e-4);
        assert!((one.rhs1 - 4.9261).abs() < 1e-4);
        // Series and closed form agree where both are accurate.
        let near = lemma2_check(0.999_999).unwrap().lhs1;
        let t: f64 = 0.999_999;
        let closed = (2.0 * t).exp() - 4.0 * t.exp() + 3.0 + 2.0 * t;
        assert!((near - closed).abs() < 1e-12);
        let five = lemma2_check(5.0).unwrap();
        assert!(five.lhs1 <= five.rhs1);
        assert!(five.lhs2a <= five.lhs2b && five.lhs2b <= five.rhs2b);
    }

    #[test]
    fn growth_integral_limit_is_continuous() {
        let t = 2.5;
        assert_eq!(growth_integral(0.0, t), t);
        assert!((growth_integral(1e-9, t) - t).abs() < 1e-8);
        assert!((growth_integral(-1e-9, t) - t).abs() < 1e-8);
    }
}
