//! Truncated SVD of the basis matrix and projection into the
//! low-dimensional space used by the mixture model.

use nalgebra::{DMatrix, DVector};

use crate::brdf::BasisSet;
use crate::{Error, Result};

/// Orthonormal basis of the dominant left singular subspace of the basis
/// matrix, plus the full singular spectrum (right singular vectors are kept
/// for diagnostics and reconstruction tests).
#[derive(Debug, Clone)]
pub struct Subspace {
    /// p x N, orthonormal columns.
    basis: DMatrix<f64>,
    /// All min(p, n) singular values, non-increasing.
    singular_values: Vec<f64>,
    /// n x n right singular vectors (columns).
    right_vectors: DMatrix<f64>,
}

/// Computes the first `dim` left singular vectors of the basis matrix.
///
/// The decomposition goes through the n x n Gram matrix: the table length p
/// dwarfs the column count, so an eigendecomposition of `B^T B` is far
/// cheaper than bidiagonalizing `B` itself. No column centering is applied;
/// the class means enter the estimator separately.
pub fn fit_subspace(basis: &BasisSet, dim: usize) -> Result<Subspace> {
    fit_subspace_matrix(basis.matrix(), dim)
}

pub(crate) fn fit_subspace_matrix(matrix: &DMatrix<f64>, dim: usize) -> Result<Subspace> {
    let (p, n) = matrix.shape();
    if dim == 0 || dim > p.min(n) {
        return Err(Error::Argument(format!(
            "subspace dimension {dim} out of range for a {p}x{n} matrix"
        )));
    }

    let gram = matrix.tr_mul(matrix);
    let eig = nalgebra::SymmetricEigen::new(gram);

    // Eigenvalues of the Gram matrix are squared singular values; sort
    // descending and clamp tiny negatives from rounding.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let singular_values: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    let mut right_vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        right_vectors
            .column_mut(dst)
            .copy_from(&eig.eigenvectors.column(src));
    }

    let tiny = singular_values[0].max(f64::MIN_POSITIVE) * 1e-12;
    if singular_values[dim - 1] <= tiny {
        return Err(Error::Numerical(format!(
            "basis has numerical rank below {dim}; singular value {} is negligible",
            singular_values[dim - 1]
        )));
    }

    // Left singular vectors: u_i = B v_i / sigma_i.
    let mut left = DMatrix::zeros(p, dim);
    for i in 0..dim {
        let u = matrix * right_vectors.column(i);
        left.column_mut(i).copy_from(&(u / singular_values[i]));
    }

    // Modified Gram-Schmidt pass tightens orthonormality lost to the
    // squared conditioning of the Gram route.
    for i in 0..dim {
        for j in 0..i {
            let proj = left.column(j).dot(&left.column(i));
            let col_j = left.column(j).clone_owned();
            let mut col_i = left.column_mut(i);
            col_i.axpy(-proj, &col_j, 1.0);
        }
        let norm = left.column(i).norm();
        if norm <= 0.0 {
            return Err(Error::Numerical("degenerate singular vector".into()));
        }
        left.column_mut(i).scale_mut(1.0 / norm);
    }

    // Sign convention: the entry of largest magnitude is positive, so the
    // decomposition is reproducible across platforms.
    for i in 0..dim {
        let column = left.column(i);
        let mut dominant = 0usize;
        let mut best = 0.0f64;
        for (r, v) in column.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                dominant = r;
            }
        }
        if column[dominant] < 0.0 {
            left.column_mut(i).neg_mut();
            right_vectors.column_mut(i).neg_mut();
        }
    }

    Ok(Subspace {
        basis: left,
        singular_values,
        right_vectors,
    })
}

impl Subspace {
    /// Retained dimension N.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Table length p.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right_vectors
    }

    /// Coordinates of a BRDF vector in the subspace.
    pub fn project(&self, brdf: &[f64]) -> Result<DVector<f64>> {
        if brdf.len() != self.ambient_dim() {
            return Err(Error::Argument(format!(
                "vector length {} does not match table length {}",
                brdf.len(),
                self.ambient_dim()
            )));
        }
        let v = DVector::from_column_slice(brdf);
        Ok(self.basis.tr_mul(&v))
    }

    /// Projects every column of a matrix, returning one row per column.
    pub fn project_columns(&self, matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if matrix.nrows() != self.ambient_dim() {
            return Err(Error::Argument("matrix row count mismatch".into()));
        }
        Ok(self.basis.tr_mul(matrix).transpose())
    }

    pub(crate) fn from_raw_parts(
        basis: DMatrix<f64>,
        singular_values: Vec<f64>,
        right_vectors: DMatrix<f64>,
    ) -> Self {
        Subspace {
            basis,
            singular_values,
            right_vectors,
        }
    }
}
