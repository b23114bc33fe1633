//! Sparse symmetric positive-definite solves shared by the translation
//! subproblem, the chordal initializer and the least-squares baselines.
//!
//! A direct sparse Cholesky factorization is computed once and reused for
//! every right-hand side. Above [`CG_FALLBACK_DIM`] unknowns (or if the
//! factorization fails numerically) a Jacobi-preconditioned conjugate
//! gradient with tolerance 1e-10 is used instead.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use thiserror::Error;

/// Unknown count beyond which the direct factorization is skipped.
pub const CG_FALLBACK_DIM: usize = 100_000;

const CG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("triplet index ({row}, {col}) out of bounds for dimension {dim}")]
    IndexOutOfBounds { row: usize, col: usize, dim: usize },
    #[error("matrix is not positive definite (factorization and CG both failed)")]
    NotPositiveDefinite,
    #[error("right-hand side length {got} does not match dimension {dim}")]
    DimensionMismatch { got: usize, dim: usize },
}

/// Accumulates symmetric triplets; duplicates are summed on build.
pub struct TripletBuilder {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    /// Adds a dense block with its top-left corner at `(row, col)`.
    pub fn push_block<const R: usize, const C: usize>(
        &mut self,
        row: usize,
        col: usize,
        block: &nalgebra::SMatrix<f64, R, C>,
    ) {
        for r in 0..R {
            for c in 0..C {
                let v = block[(r, c)];
                if v != 0.0 {
                    self.push(row + r, col + c, v);
                }
            }
        }
    }

    pub fn build(self) -> Result<CscMatrix<f64>, SparseError> {
        let dim = self.dim;
        for (&r, &c) in self.rows.iter().zip(&self.cols) {
            if r >= dim || c >= dim {
                return Err(SparseError::IndexOutOfBounds { row: r, col: c, dim });
            }
        }
        let coo = CooMatrix::try_from_triplets(dim, dim, self.rows, self.cols, self.vals)
            .expect("indices validated above");
        Ok(CscMatrix::from(&coo))
    }
}

/// A symmetric positive-definite operator with a reusable solve.
pub struct SpdSolver {
    matrix: CscMatrix<f64>,
    factorization: Option<CscCholesky<f64>>,
}

impl SpdSolver {
    /// Builds the operator and, for moderate sizes, its Cholesky factor.
    pub fn new(matrix: CscMatrix<f64>) -> Result<Self, SparseError> {
        let dim = matrix.nrows();
        let factorization = if dim <= CG_FALLBACK_DIM {
            CscCholesky::factor(&matrix).ok()
        } else {
            None
        };
        let solver = Self {
            matrix,
            factorization,
        };
        if solver.factorization.is_none() {
            // Validate that CG can make progress: the diagonal must be positive.
            for (i, d) in solver.diagonal().iter().enumerate() {
                if *d <= 0.0 {
                    log::warn!("non-positive diagonal entry {d:.3e} at {i}");
                    return Err(SparseError::NotPositiveDefinite);
                }
            }
        }
        Ok(solver)
    }

    pub fn from_builder(builder: TripletBuilder) -> Result<Self, SparseError> {
        Self::new(builder.build()?)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CscMatrix<f64> {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        self.factorization.is_some()
    }

    fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim());
        for (r, c, v) in self.matrix.triplet_iter() {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        let (offsets, indices, values) = self.matrix.csc_data();
        for col in 0..self.dim() {
            let xc = x[col];
            if xc == 0.0 {
                continue;
            }
            for k in offsets[col]..offsets[col + 1] {
                y[indices[k]] += values[k] * xc;
            }
        }
        y
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, SparseError> {
        if rhs.len() != self.dim() {
            return Err(SparseError::DimensionMismatch {
                got: rhs.len(),
                dim: self.dim(),
            });
        }
        if let Some(chol) = &self.factorization {
            let b = nalgebra::DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
            let x = chol.solve(&b);
            return Ok(DVector::from_column_slice(x.column(0).as_slice()));
        }
        self.solve_cg(rhs)
    }

    fn solve_cg(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, SparseError> {
        let n = self.dim();
        let diag_inv = {
            let mut d = self.diagonal();
            for v in d.iter_mut() {
                *v = 1.0 / *v;
            }
            d
        };
        let mut x = DVector::zeros(n);
        let mut r = rhs.clone();
        let rhs_norm = rhs.norm().max(f64::MIN_POSITIVE);
        let mut z = r.component_mul(&diag_inv);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..10 * n.max(100) {
            if r.norm() <= CG_TOL * rhs_norm {
                return Ok(x);
            }
            let ap = self.mul_vec(&p);
            let pap = p.dot(&ap);
            if pap <= 0.0 {
                return Err(SparseError::NotPositiveDefinite);
            }
            let alpha = rz / pap;
            x += alpha * &p;
            r -= alpha * &ap;
            z = r.component_mul(&diag_inv);
            let rz_new = r.dot(&z);
            p = &z + (rz_new / rz) * p;
            rz = rz_new;
        }
        if r.norm() <= CG_TOL.sqrt() * rhs_norm {
            // Accept a looser CG solution rather than failing outright.
            log::warn!("CG stopped at relative residual {:.3e}", r.norm() / rhs_norm);
            return Ok(x);
        }
        Err(SparseError::NotPositiveDefinite)
    }
}
