//! Feedback-gain synthesis through the consensus Riccati equation
//! `PA + AᵀP - 2λ P B Bᵀ P = -2μ I`, and checks of the Lyapunov
//! inequalities `(A - λᵢBK)ᵀP + P(A - λᵢBK) + 2μI ⪯ 0` for the closed-loop
//! modes `A - λᵢBK` produced by the relative-state protocol.

use serde::Serialize;

use crate::graphs::GraphAlgebra;
use crate::matan::{kron, max_singular_value, one_norm, sym_eigenvalues, symmetric_part_max_eig};
use crate::{Error, LtiModel, Matrix, Result};

/// Default tolerance on the largest eigenvalue in PSD/NSD tests.
pub const PSD_TOL: f64 = 1e-9;

const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainDesign {
    #[serde(serialize_with = "ser_matrix")]
    pub p: Matrix,
    #[serde(serialize_with = "ser_matrix")]
    pub k: Matrix,
    pub mu: f64,
    pub lambda: f64,
    /// Frobenius norm of the Riccati residual.
    pub residual: f64,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    crate::model::matrix_to_rows(m).serialize(s)
}

impl GainDesign {
    /// A design with user-supplied `P` and `K` (not necessarily `K = BᵀP`).
    pub fn from_parts(p: Matrix, k: Matrix, mu: f64, lambda: f64) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::Dimension("P must be square".into()));
        }
        if k.ncols() != p.nrows() {
            return Err(Error::Dimension(format!(
                "K has {} columns, P is {}×{}",
                k.ncols(),
                p.nrows(),
                p.nrows()
            )));
        }
        Ok(Self {
            p,
            k,
            mu,
            lambda,
            residual: f64::NAN,
        })
    }
}

/// Riccati residual `PA + AᵀP - 2λPBBᵀP + 2μI`.
pub fn riccati_residual(model: &LtiModel, p: &Matrix, lambda: f64, mu: f64) -> Matrix {
    let (a, b) = (model.a(), model.b());
    let n = a.nrows();
    let pb = p * b;
    p * a + a.transpose() * p - (&pb * pb.transpose()) * (2.0 * lambda)
        + Matrix::identity(n, n) * (2.0 * mu)
}

pub fn riccati_design(model: &LtiModel, lambda: f64, mu: f64) -> Result<GainDesign> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!(
            "λ = {lambda} and μ = {mu} must both be positive and finite"
        )));
    }
    let (a, b) = (model.a(), model.b());
    let n = a.nrows();
    let q = Matrix::identity(n, n) * (2.0 * mu);

    let p = if b.iter().all(|&x| x == 0.0) {
        let c = model.spectral_constants();
        if c.lambda_as >= 0.0 {
            return Err(Error::Design {
                reason: format!("B = 0 and λ_As = {} ≥ 0: pair is not stabilizable", c.lambda_as),
                residual: f64::INFINITY,
            });
        }
        solve_lyapunov(a, &(-&q))?
    } else {
        let s = (b * b.transpose()) * (2.0 * lambda);
        solve_care(a, &s, &q)?
    };

    let residual = riccati_residual(model, &p, lambda, mu).norm();
    let scale = 1.0 + p.norm();
    if !(residual <= 1e-8 * scale) {
        return Err(Error::Design {
            reason: "Riccati residual above tolerance".into(),
            residual,
        });
    }
    let min_eig = sym_eigenvalues(&p)[0];
    if !(min_eig > 0.0) {
        return Err(Error::Design {
            reason: format!("solution is not positive definite (min eigenvalue {min_eig:e})"),
            residual,
        });
    }
    let k = b.transpose() * &p;
    Ok(GainDesign {
        p,
        k,
        mu,
        lambda,
        residual,
    })
}

/// Stabilising solution of `AᵀX + XA - XSX + Q = 0` (`S`, `Q` symmetric).
///
/// The stable invariant subspace of the Hamiltonian `[[A, -S], [-Q, -Aᵀ]]`
/// is extracted with the matrix sign function (Newton iteration with
/// determinant scaling); the result is then polished by Newton–Kleinman
/// steps on the Riccati equation itself.
pub fn solve_care(a: &Matrix, s: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(&h)?;
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + Matrix::identity(n, n)));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + Matrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));

    let svd = lhs.svd(true, true);
    let x = svd.solve(&rhs, 1e-14).map_err(|e| Error::Design {
        reason: format!("invariant-subspace solve failed: {e}"),
        residual: f64::INFINITY,
    })?;
    let x = symmetrize(&x);
    newton_refine(a, s, q, x)
}

fn care_residual(a: &Matrix, s: &Matrix, q: &Matrix, x: &Matrix) -> Matrix {
    a.transpose() * x + x * a - x * s * x + q
}

fn newton_refine(a: &Matrix, s: &Matrix, q: &Matrix, mut x: Matrix) -> Result<Matrix> {
    let mut res = care_residual(a, s, q, &x).norm();
    for _ in 0..NEWTON_MAX_ITER {
        if res <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
        let ac = a - s * &x;
        let rhs = -(q + &x * s * &x);
        let next = match solve_lyapunov(&ac, &rhs) {
            Ok(v) => symmetrize(&v),
            Err(_) => break,
        };
        let next_res = care_residual(a, s, q, &next).norm();
        if !(next_res < res) {
            break;
        }
        x = next;
        res = next_res;
    }
    let closed_loop = a - s * &x;
    let max_re = closed_loop
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_re < 0.0) {
        return Err(Error::Design {
            reason: format!("closed loop is not Hurwitz (max Re λ = {max_re:e}); pair not stabilizable"),
            residual: res,
        });
    }
    Ok(x)
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(h: &Matrix) -> Result<Matrix> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().filter(|m| m.iter().all(|x| x.is_finite())).ok_or_else(|| {
            Error::Design {
                reason: "Hamiltonian has eigenvalues on the imaginary axis".into(),
                residual: f64::INFINITY,
            }
        })?;
        let c = if det != 0.0 && det.is_finite() {
            det.abs().powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let delta = one_norm(&(&next - &z));
        let size = one_norm(&next);
        z = next;
        if delta <= 1e-13 * size {
            return Ok(z);
        }
    }
    Err(Error::Design {
        reason: "matrix sign iteration did not converge (imaginary-axis Hamiltonian eigenvalues?)".into(),
        residual: f64::INFINITY,
    })
}

/// Solves `AᵀX + XA = C` through its Kronecker form.
pub fn solve_lyapunov(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let i = Matrix::identity(n, n);
    let at = a.transpose();
    // Column-major vec: vec(AᵀX) = (I ⊗ Aᵀ) vec X, vec(XA) = (Aᵀ ⊗ I) vec X.
    let op = kron(&i, &at) + kron(&at, &i);
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = op.lu().solve(&rhs).ok_or_else(|| Error::Design {
        reason: "Lyapunov operator is singular".into(),
        residual: f64::INFINITY,
    })?;
    Ok(Matrix::from_column_slice(n, n, sol.as_slice()))
}

/// True iff every `(A - λᵢBK)ᵀP + P(A - λᵢBK) + 2μI` has largest
/// eigenvalue at most `tol·(1 + 2‖A - λᵢBK‖_F‖P‖_F)`. The scaling keeps
/// rounding in the products from failing designs with large `P`.
pub fn verify_lyapunov_family_with_tol(
    design: &GainDesign,
    model: &LtiModel,
    spectrum: &[f64],
    tol: f64,
) -> bool {
    let (a, b, p) = (model.a(), model.b(), &design.p);
    let n = a.nrows();
    let bk = b * &design.k;
    spectrum.iter().all(|&l| {
        let acl = a - &bk * l;
        let m = acl.transpose() * p + p * &acl + Matrix::identity(n, n) * (2.0 * design.mu);
        let scale = 1.0 + 2.0 * acl.norm() * p.norm();
        sym_eigenvalues(&m).last().is_some_and(|&e| e <= tol * scale)
    })
}

pub fn verify_lyapunov_family(design: &GainDesign, model: &LtiModel, spectrum: &[f64]) -> bool {
    verify_lyapunov_family_with_tol(design, model, spectrum, PSD_TOL)
}

/// Constants derived from a design on a given graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignConstants {
    /// Largest eigenvalue of `(PBK + KᵀBᵀP)/2`.
    pub lambda_pbk_s: f64,
    /// `σ_max((DᵀD ⊗ PBK) - 2μI)`.
    pub sigma_edge: f64,
    /// Largest eigenvalue of `P`.
    pub lambda_p: f64,
    pub sigma_pb: f64,
    pub sigma_bbtp: f64,
    pub sigma_bk: f64,
}

pub fn design_constants(
    design: &GainDesign,
    model: &LtiModel,
    algebra: &GraphAlgebra,
) -> Result<DesignConstants> {
    let (b, p, k) = (model.b(), &design.p, &design.k);
    let n_state = model.state_dim();
    if p.nrows() != n_state || k.nrows() != b.ncols() || k.ncols() != n_state {
        return Err(Error::Dimension(format!(
            "design (P {}×{}, K {}×{}) does not match model (N = {n_state}, M = {})",
            p.nrows(),
            p.ncols(),
            k.nrows(),
            k.ncols(),
            b.ncols()
        )));
    }
    let pbk = p * b * k;
    let m = algebra.edge_count();
    let edge = kron(&algebra.edge_laplacian, &pbk)
        - Matrix::identity(m * n_state, m * n_state) * (2.0 * design.mu);
    Ok(DesignConstants {
        lambda_pbk_s: symmetric_part_max_eig(&pbk)?,
        sigma_edge: max_singular_value(&edge)?,
        lambda_p: *sym_eigenvalues(p).last().expect("N ≥ 1"),
        sigma_pb: max_singular_value(&(p * b))?,
        sigma_bbtp: max_singular_value(&(b * b.transpose() * p))?,
        sigma_bk: max_singular_value(&(b * k))?,
    })
}

/// `σ_max((DDᵀ ⊗ PBBᵀP) - 2(μ - λ_P/(2η)) I)` used by the broadcast
/// consensus-error bound.
pub fn broadcast_sigma(
    design: &GainDesign,
    model: &LtiModel,
    algebra: &GraphAlgebra,
    lambda_p: f64,
    eta: f64,
) -> Result<f64> {
    let (b, p) = (model.b(), &design.p);
    let pbbp = p * b * b.transpose() * p;
    let dim = algebra.vertex_count() * model.state_dim();
    let shift = 2.0 * (design.mu - lambda_p / (2.0 * eta));
    max_singular_value(
        &(kron(&algebra.graph_laplacian, &pbbp) - Matrix::identity(dim, dim) * shift),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_algebra, InteractionGraph};

    /// Harmonic oscillator with B = [0, 1]ᵀ and μ = 1: the Riccati equation
    /// reduces to p₂ + λp₂² = 1, λp₃² = p₂ + 1, p₁ = p₃(1 + 2λp₂).
    fn oscillator_closed_form(lambda: f64) -> (f64, f64, f64) {
        // p₂ + λ p₂² = 1 (μ = 1), positive root.
        let p2 = (-1.0 + (1.0 + 4.0 * lambda).sqrt()) / (2.0 * lambda);
        let p3 = ((p2 + 1.0) / lambda).sqrt();
        let p1 = p3 * (1.0 + 2.0 * lambda * p2);
        (p1, p2, p3)
    }

    #[test]
    fn example_gain() {
        let model = LtiModel::harmonic_oscillator();
        let d = riccati_design(&model, 1.381966, 1.0).unwrap();
        assert!((d.k[(0, 0)] - 0.5626).abs() < 1e-3);
        assert!((d.k[(0, 1)] - 1.0633).abs() < 1e-3);
        let (p1, p2, p3) = oscillator_closed_form(1.381966);
        assert!((p2 - 0.562_593).abs() < 1e-6 && (p3 - 1.063_345).abs() < 1e-6);
        assert!((d.p[(0, 0)] - p1).abs() < 1e-10);
        assert!((d.p[(0, 1)] - p2).abs() < 1e-10);
        assert!((d.p[(1, 1)] - p3).abs() < 1e-10);
        assert_eq!(d.p, d.p.transpose());
    }

    #[test]
    fn scalar_integrator_gain() {
        let d = riccati_design(&LtiModel::single_integrator(), 1.0, 1.0).unwrap();
        assert!((d.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((d.k[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_pairs_fail() {
        let m = LtiModel::new(Matrix::identity(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert!(matches!(riccati_design(&m, 1.0, 1.0), Err(Error::Design { .. })));
        // Uncontrollable unstable mode.
        let m = LtiModel::new(
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        assert!(riccati_design(&m, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_input_with_contractive_drift() {
        let m = LtiModel::new(Matrix::identity(2, 2) * -1.0, Matrix::zeros(2, 1)).unwrap();
        let d = riccati_design(&m, 1.0, 1.0).unwrap();
        assert!((d.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(d.k.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lyapunov_family_examples() {
        let model = LtiModel::harmonic_oscillator();
        let alg = build_algebra(&InteractionGraph::cycle(5).unwrap());
        let d = riccati_design(&model, alg.spectrum[1], 1.0).unwrap();
        assert!(verify_lyapunov_family(&d, &model, alg.nonzero_modes()));

        let unstable = LtiModel::new(Matrix::identity(1, 1), Matrix::identity(1, 1)).unwrap();
        let zero_gain = GainDesign::from_parts(Matrix::identity(1, 1), Matrix::zeros(1, 1), 1.0, 1.0).unwrap();
        assert!(!verify_lyapunov_family(&zero_gain, &unstable, &[1.0]));

        // Scalar integrator: -2λᵢ + 2 ≤ 0.
        let si = LtiModel::single_integrator();
        let unit = GainDesign::from_parts(Matrix::identity(1, 1), Matrix::identity(1, 1), 1.0, 1.0).unwrap();
        assert!(verify_lyapunov_family(&unit, &si, &[1.382, 2.618, 3.618]));
    }

    #[test]
    fn design_constants_examples() {
        let alg = build_algebra(&InteractionGraph::cycle(5).unwrap());
        let l2 = alg.spectrum[1];
        let si = LtiModel::single_integrator();
        let d = GainDesign::from_parts(Matrix::identity(1, 1), Matrix::identity(1, 1), l2, l2).unwrap();
        let c = design_constants(&d, &si, &alg).unwrap();
        let expected = (2.0 * l2).max(alg.lambda_max() - 2.0 * l2);
        assert!((c.sigma_edge - expected).abs() < 1e-10);
        assert!((c.sigma_edge - 2.763932).abs() < 1e-6);

        let two = LtiModel::new(Matrix::zeros(2, 2), Matrix::identity(2, 2)).unwrap();
        let d = GainDesign::from_parts(Matrix::identity(2, 2), Matrix::identity(2, 2), 1.0, 1.0).unwrap();
        let c = design_constants(&d, &two, &alg).unwrap();
        assert!((c.lambda_pbk_s - 1.0).abs() < 1e-14);
    }
}
