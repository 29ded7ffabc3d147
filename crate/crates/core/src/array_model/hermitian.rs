use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;

/// Complex Hermitian positive-definite matrix with a lazily cached Cholesky
/// factor `R = L L^H`.
#[derive(Debug)]
pub struct HermitianMatrix {
    entries: CMatrix,
    chol: OnceLock<Cholesky<Complex64, Dyn>>,
}

impl Clone for HermitianMatrix {
    fn clone(&self) -> Self {
        let chol = OnceLock::new();
        if let Some(c) = self.chol.get() {
            let _ = chol.set(c.clone());
        }
        Self {
            entries: self.entries.clone(),
            chol,
        }
    }
}

impl PartialEq for HermitianMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// nalgebra takes complex square roots of negative pivots, so the diagonal of
/// the factor has to be checked explicitly.
fn checked_cholesky(entries: CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(entries)?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re);
    ok.then_some(chol)
}

impl HermitianMatrix {
    /// Validates symmetry and positive-definiteness. The diagonal imaginary
    /// parts and the asymmetric residue (within tolerance) are discarded.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let m = entries.nrows();
        if m == 0 || entries.ncols() != m {
            return Err(Error::Dimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in i..m {
                let d = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if !(d <= HERMITIAN_TOL * scale) {
                    return Err(Error::Dimension(format!(
                        "matrix is not Hermitian at ({i},{j}): deviation {d:e}"
                    )));
                }
            }
        }
        let herm = (&entries + entries.adjoint()) * Complex64::new(0.5, 0.0);
        Self::from_hermitian_parts(herm)
    }

    fn from_hermitian_parts(entries: CMatrix) -> Result<Self> {
        let chol = checked_cholesky(entries.clone()).ok_or(Error::NotPositiveDefinite)?;
        let cell = OnceLock::new();
        let _ = cell.set(chol);
        Ok(Self {
            entries,
            chol: cell,
        })
    }

    /// Builds from a real symmetric matrix.
    pub fn from_real(entries: &DMatrix<f64>) -> Result<Self> {
        Self::new(entries.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(m: usize) -> Self {
        Self::from_hermitian_parts(CMatrix::identity(m, m)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn cholesky(&self) -> &Cholesky<Complex64, Dyn> {
        self.chol.get_or_init(|| {
            Cholesky::new(self.entries.clone()).expect("validated at construction")
        })
    }

    /// Lower-triangular factor `L`.
    pub fn factor(&self) -> CMatrix {
        self.cholesky().l()
    }

    /// `R^{-1} b`.
    pub fn solve(&self, b: &CVector) -> CVector {
        self.cholesky().solve(b)
    }

    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        self.cholesky().solve(b)
    }

    /// `L^{-1} b`, so that `‖L^{-1} b‖² = b^H R^{-1} b`.
    pub fn whiten(&self, b: &CVector) -> CVector {
        self.cholesky()
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a non-zero diagonal")
    }

    pub fn whiten_matrix(&self, b: &CMatrix) -> CMatrix {
        self.cholesky()
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a non-zero diagonal")
    }

    /// `x^H R^{-1} x`.
    pub fn inv_quad_form(&self, x: &CVector) -> f64 {
        self.whiten(x).norm_squared()
    }

    pub fn inverse(&self) -> CMatrix {
        self.cholesky().inverse()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain {
                func: "HermitianMatrix::scaled",
                msg: format!("scale {c} must be positive"),
            });
        }
        Self::from_hermitian_parts(&self.entries * Complex64::new(c, 0.0))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[ev.len() - 1] / ev[0]
    }

    /// Relative Frobenius distance `‖self - other‖_F / ‖other‖_F`.
    pub fn rel_frobenius_distance(&self, other: &HermitianMatrix) -> f64 {
        (&self.entries - &other.entries).norm() / other.entries.norm()
    }

    /// Copy normalized to unit trace.
    pub fn shape(&self) -> Self {
        let t = self.trace();
        self.scaled(1.0 / t).expect("positive-definite matrices have positive trace")
    }
}
