use serde::{Deserialize, Serialize};

use crate::matan::{ensure_finite, ensure_square, SpectralConstants};
use crate::{Error, Matrix, Result};

/// The agent pair `(A, B)` shared by every node of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct LtiModel {
    a: Matrix,
    b: Matrix,
}

impl LtiModel {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        ensure_square(&a, "A")?;
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {}×{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::Dimension("state dimension must be ≥ 1".into()));
        }
        Ok(Self { a, b })
    }

    /// Scalar integrator `ẋ = u`.
    pub fn single_integrator() -> Self {
        Self::new(Matrix::zeros(1, 1), Matrix::identity(1, 1)).expect("valid")
    }

    /// Harmonic oscillator `A = [[0, 1], [-1, 0]]`, `B = [0, 1]ᵀ`.
    pub fn harmonic_oscillator() -> Self {
        Self::new(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .expect("valid")
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// State dimension N.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension M.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn spectral_constants(&self) -> SpectralConstants {
        SpectralConstants::of(&self.a).expect("validated at construction")
    }
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{what}: ragged rows")));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<RawModel> for LtiModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        LtiModel::new(matrix_from_rows(&raw.a, "A")?, matrix_from_rows(&raw.b, "B")?)
    }
}

impl From<LtiModel> for RawModel {
    fn from(m: LtiModel) -> Self {
        RawModel {
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
        }
    }
}
