use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Principal axes of a centered data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub means: Vec<f64>,
    /// D×k, orthonormal columns in decreasing-variance order.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    /// Sum of all covariance eigenvalues.
    pub total_variance: f64,
}

pub(crate) fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.set(r, c, m[(r, c)]);
        }
    }
    out
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<Pca> {
    let (m, d) = x.shape();
    if k == 0 || k > m.min(d) {
        return Err(Error::invalid(format!(
            "PCA needs 1 <= k <= min(rows, cols) = {}, got {k}",
            m.min(d)
        )));
    }
    let means = x.column_means().into_data();
    let centered = x.zip_map(&Matrix::from_rows(&vec![means.as_slice(); m])?, "pca", |a, b| a - b)?;
    let denom = (m.max(2) - 1) as f64;
    let cov = centered.matmul_tn(&centered)?.scale(1.0 / denom);
    let eig = SymmetricEigen::new(to_dmatrix(&cov));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Matrix::zeros(d, k);
    let mut explained_variance = Vec::with_capacity(k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(src);
        // fix the sign so the largest-magnitude loading is positive
        let pivot = col.iter().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { *v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            components.set(r, j, sign * col[r]);
        }
        explained_variance.push(eig.eigenvalues[src].max(0.0));
    }
    let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    Ok(Pca {
        means,
        components,
        explained_variance,
        total_variance,
    })
}

impl Pca {
    pub fn k(&self) -> usize {
        self.components.cols()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.means.len() {
            return Err(Error::Shape {
                op: "pca transform",
                left: (0, cols),
                right: (0, self.means.len()),
            });
        }
        Ok(())
    }

    /// Scores, M×k.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x.cols())?;
        let centered = x.zip_map(
            &Matrix::from_rows(&vec![self.means.as_slice(); x.rows()])?,
            "pca",
            |a, b| a - b,
        )?;
        centered.matmul(&self.components)
    }

    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let back = scores.matmul_nt(&self.components)?;
        back.zip_map(
            &Matrix::from_rows(&vec![self.means.as_slice(); scores.rows()])?,
            "pca",
            |a, b| a + b,
        )
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }
}
