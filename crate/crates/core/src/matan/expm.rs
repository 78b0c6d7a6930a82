//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Orders and switching thresholds follow Higham's 2005 table: the smallest
//! order m in {3, 5, 7, 9, 13} with `‖M‖₁ ≤ θ_m` is used; above θ₁₃ the
//! matrix is scaled by `2^-s` so that the order-13 approximant applies, and
//! the result is squared `s` times.

use crate::{Error, Matrix, Result};

const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068e0),
    (13, 5.371_920_351_148_152e0),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Largest number of squarings before the result is declared out of range.
const MAX_SQUARINGS: i32 = 1100;

pub(crate) fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{M}` for a square matrix `M` (callers fold the time into `M`).
pub(crate) fn expm_scaled(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n == 1 {
        let v = m[(0, 0)].exp();
        if !v.is_finite() {
            return Err(Error::Range(format!("exp({}) overflows", m[(0, 0)])));
        }
        return Ok(Matrix::from_element(1, 1, v));
    }
    let norm = one_norm(m);
    if !norm.is_finite() {
        return Err(Error::Range("matrix norm is not finite".into()));
    }

    for &(order, theta) in &THETA[..4] {
        if norm <= theta {
            let coeffs: &[f64] = match order {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return solve_pade(pade_low(m, coeffs));
        }
    }

    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    if s > MAX_SQUARINGS {
        return Err(Error::Range(format!("‖M‖₁ = {norm:e} is too large")));
    }
    let scaled = m * 2f64.powi(-s);
    let mut r = solve_pade(pade13(&scaled))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Range(format!(
            "exponential overflows (‖M‖₁ = {norm:e})"
        )));
    }
    Ok(r)
}

/// Returns (U, V) with `r_m = (V - U)^{-1} (V + U)`.
fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let mut even = ident.clone();
    let mut u_inner = &ident * b[1];
    let mut v = &ident * b[0];
    let mut k = 2;
    while k < b.len() {
        even = &even * &a2;
        v += &even * b[k];
        if k + 1 < b.len() {
            u_inner += &even * b[k + 1];
        }
        k += 2;
    }
    (a * u_inner, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let b = &B13;
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_inner = &a6 * u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * u_inner;
    let v_hi = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

fn solve_pade((u, v): (Matrix, Matrix)) -> Result<Matrix> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Range("singular Padé denominator".into()))
}
