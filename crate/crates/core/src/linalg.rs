//! Dense matrix primitives and regularized least-squares solvers.
//!
//! Everything is computed in `f64`. Matrices are column-major (nalgebra's
//! native layout), so a block of consecutive samples is a contiguous slice.
//!
//! The ridge problem `min ‖y − Aα‖² + λ‖α‖²` is solved through one of two
//! equivalent normal systems:
//!
//! - primal: `(AᵀA + λI) α = Aᵀy`, an `n × n` system;
//! - dual: `α = Aᵀ (AAᵀ + λI)⁻¹ y`, a `d × d` system (push-through identity).
//!
//! [`SolveMode::Auto`] picks whichever system is smaller.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Column norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-300;

/// Relative diagonal jitter used for the single Cholesky retry.
const JITTER_SCALE: f64 = 1e-10;

/// Dense real matrix with `dim` rows (features) and `samples` columns.
///
/// All entries are finite and both dimensions are at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from a column-major buffer.
    pub fn from_column_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let expected = rows.checked_mul(cols).ok_or(Error::ShapeOverflow {
            rows: rows as u64,
            cols: cols as u64,
        })?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_vec(rows, cols, values))
    }

    /// Builds a matrix whose columns are the given sample vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: col.len(),
                });
            }
            values.extend_from_slice(col);
        }
        Self::from_column_major(rows, columns.len(), values)
    }

    pub fn from_dmatrix(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyMatrix {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { data })
    }

    /// Feature dimension `d` (number of rows).
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples `n` (number of columns).
    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[j * d..(j + 1) * d]
    }

    /// Column-major backing buffer.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Copies the listed columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut values = Vec::with_capacity(d * indices.len());
        for &j in indices {
            if j >= self.samples() {
                return Err(Error::DimensionMismatch {
                    expected: self.samples(),
                    got: j,
                });
            }
            values.extend_from_slice(self.column(j));
        }
        Self::from_column_major(d, indices.len(), values)
    }

    /// Contiguous column blocks of at most `chunk_cols` samples each.
    pub fn column_chunks(&self, chunk_cols: usize) -> Vec<DMatrixView<'_, f64>> {
        let step = chunk_cols.max(1);
        (0..self.samples())
            .step_by(step)
            .map(|start| {
                let len = step.min(self.samples() - start);
                self.data.columns(start, len)
            })
            .collect()
    }
}

/// Which normal system to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    /// Primal when `n ≤ d`, dual otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

/// The normal system that was actually solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvedForm {
    Primal,
    Dual,
}

impl SolveMode {
    pub fn resolve(self, dim: usize, samples: usize) -> SolvedForm {
        match self {
            SolveMode::Primal => SolvedForm::Primal,
            SolveMode::Dual => SolvedForm::Dual,
            SolveMode::Auto if samples <= dim => SolvedForm::Primal,
            SolveMode::Auto => SolvedForm::Dual,
        }
    }
}

impl std::fmt::Display for SolvedForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolvedForm::Primal => f.write_str("primal"),
            SolvedForm::Dual => f.write_str("dual"),
        }
    }
}

/// Ridge coefficients for one right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub alpha: DVector<f64>,
    pub lambda: f64,
    pub mode: SolvedForm,
}

/// Scales every column to unit l2 norm.
pub fn normalize_columns(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut data = m.data.clone();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let norm = col.norm();
        if norm < ZERO_NORM {
            return Err(Error::ZeroColumn(j));
        }
        col /= norm;
    }
    Ok(FeatureMatrix { data })
}

pub(crate) fn check_lambda(lambda: f64, strictly_positive: bool) -> Result<()> {
    let ok = lambda.is_finite() && if strictly_positive { lambda > 0.0 } else { lambda >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLambda {
            value: lambda,
            requirement: if strictly_positive { "positive" } else { "nonnegative" },
        })
    }
}

/// Cholesky factorization with one jittered retry.
///
/// On the retry `1e-10 · trace / dim` is added to the diagonal.
pub fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let dim = m.nrows();
    let jitter = JITTER_SCALE * m.trace() / dim as f64;
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            if !(jitter.is_finite() && jitter > 0.0) {
                return Err(Error::SingularSystem);
            }
            let mut shifted = m;
            for i in 0..dim {
                shifted[(i, i)] += jitter;
            }
            Cholesky::new(shifted).ok_or(Error::SingularSystem)
        }
    }
}

fn add_diagonal(m: &mut DMatrix<f64>, value: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += value;
    }
}

/// Factorizes `AᵀA + λI` (`n × n`).
pub(crate) fn factor_primal(a: &DMatrix<f64>, lambda: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut gram = a.tr_mul(a);
    add_diagonal(&mut gram, lambda);
    cholesky_with_jitter(gram)
}

/// Factorizes `AAᵀ + λI` (`d × d`) from a Gram matrix built chunk by chunk.
pub(crate) fn factor_dual(
    a: &FeatureMatrix,
    lambda: f64,
    chunk_cols: usize,
) -> Result<Cholesky<f64, Dyn>> {
    let mut gram = accumulate_views(&a.column_chunks(chunk_cols));
    add_diagonal(&mut gram, lambda);
    cholesky_with_jitter(gram)
}

/// Default number of samples per Gram chunk.
pub const DEFAULT_CHUNK_COLS: usize = 2048;

/// Solves the ridge problem for a single right-hand side `y`.
pub fn ridge_solve(
    a: &FeatureMatrix,
    y: &[f64],
    lambda: f64,
    mode: SolveMode,
) -> Result<RidgeSolution> {
    check_lambda(lambda, false)?;
    if y.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let y = DVector::from_column_slice(y);
    let form = mode.resolve(a.dim(), a.samples());
    let alpha = match form {
        SolvedForm::Primal => {
            let chol = factor_primal(&a.data, lambda)?;
            chol.solve(&a.data.tr_mul(&y))
        }
        SolvedForm::Dual => {
            let chol = factor_dual(a, lambda, DEFAULT_CHUNK_COLS)?;
            a.data.tr_mul(&chol.solve(&y))
        }
    };
    Ok(RidgeSolution {
        alpha,
        lambda,
        mode: form,
    })
}

/// The query-independent map `P = (AᵀA + λI)⁻¹Aᵀ` (`n × d`), using the
/// smaller normal system.
pub fn projection_matrix(a: &FeatureMatrix, lambda: f64) -> Result<DMatrix<f64>> {
    projection_matrix_with(a, lambda, SolveMode::Auto)
}

/// Like [`projection_matrix`] but with an explicit choice of normal system.
pub fn projection_matrix_with(
    a: &FeatureMatrix,
    lambda: f64,
    mode: SolveMode,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda, true)?;
    match mode.resolve(a.dim(), a.samples()) {
        SolvedForm::Primal => {
            let chol = factor_primal(&a.data, lambda)?;
            Ok(chol.solve(&a.data.transpose()))
        }
        SolvedForm::Dual => {
            // P = Aᵀ(AAᵀ + λI)⁻¹ = ((AAᵀ + λI)⁻¹A)ᵀ by symmetry.
            let chol = factor_dual(a, lambda, DEFAULT_CHUNK_COLS)?;
            Ok(chol.solve(&a.data).transpose())
        }
    }
}

/// `AAᵀ` as the ordered sum of `A_k A_kᵀ` over column blocks.
pub fn gram_accumulate(chunks: &[FeatureMatrix]) -> Result<DMatrix<f64>> {
    let first = chunks.first().ok_or(Error::CountMismatch {
        what: "chunk list",
        expected: 1,
        got: 0,
    })?;
    let d = first.dim();
    if let Some(bad) = chunks.iter().find(|c| c.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.dim(),
        });
    }
    let views: Vec<_> = chunks.iter().map(|c| c.data.columns(0, c.samples())).collect();
    Ok(accumulate_views(&views))
}

/// Per-chunk products are computed in parallel a batch at a time and then
/// added in chunk order, so the result does not depend on thread count.
fn accumulate_views(views: &[DMatrixView<'_, f64>]) -> DMatrix<f64> {
    let d = views[0].nrows();
    let batch = rayon::current_num_threads().max(1);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for group in views.chunks(batch) {
        let products: Vec<DMatrix<f64>> = group
            .par_iter()
            .map(|chunk| chunk * chunk.transpose())
            .collect();
        for p in products {
            gram += p;
        }
    }
    gram
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_column_major(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let m = normalize_columns(&mat(2, 2, &[3.0, 4.0, 0.0, -2.0])).unwrap();
        assert_eq!(m.column(0), &[0.6, 0.8]);
        assert_eq!(m.column(1), &[0.0, -1.0]);
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let err = normalize_columns(&mat(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroColumn(1)));
    }

    #[test]
    fn feature_matrix_rejects_nan() {
        let err = FeatureMatrix::from_column_major(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput));
        let err = FeatureMatrix::from_column_major(0, 0, vec![]).unwrap_err();
        assert!(matches!(err, Error::EmptyMatrix { .. }));
    }

    #[test]
    fn ridge_identity() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        for mode in [SolveMode::Auto, SolveMode::Primal, SolveMode::Dual] {
            let s = ridge_solve(&a, &[1.0, 0.0], 1.0, mode).unwrap();
            assert_abs_diff_eq!(s.alpha[0], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(s.alpha[1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ridge_exact_representation_without_regularization() {
        let a = mat(2, 1, &[1.0, 0.0]);
        let s = ridge_solve(&a, &[1.0, 0.0], 0.0, SolveMode::Auto).unwrap();
        assert_eq!(s.mode, SolvedForm::Primal);
        assert_abs_diff_eq!(s.alpha[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn auto_mode_threshold() {
        assert_eq!(SolveMode::Auto.resolve(4, 4), SolvedForm::Primal);
        assert_eq!(SolveMode::Auto.resolve(4, 5), SolvedForm::Dual);
        assert_eq!(SolveMode::Auto.resolve(5, 4), SolvedForm::Primal);
    }

    #[test]
    fn ridge_errors() {
        let a = mat(2, 1, &[1.0, 0.0]);
        assert!(matches!(
            ridge_solve(&a, &[1.0], 0.1, SolveMode::Auto),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ridge_solve(&a, &[1.0, f64::INFINITY], 0.1, SolveMode::Auto),
            Err(Error::NonFiniteInput)
        ));
        assert!(matches!(
            ridge_solve(&a, &[1.0, 0.0], -1.0, SolveMode::Auto),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn singular_without_regularization() {
        // Zero trace means zero jitter, so no retry is possible.
        assert!(matches!(
            cholesky_with_jitter(DMatrix::zeros(2, 2)),
            Err(Error::SingularSystem)
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cholesky_with_jitter(indefinite),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn jitter_rescues_rank_deficient_gram() {
        // Two identical columns: AᵀA = [[1,1],[1,1]] is singular.
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_with_jitter(g).is_ok());
    }

    #[test]
    fn projection_of_identity() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let p = projection_matrix(&a, 1.0).unwrap();
        assert_abs_diff_eq!(p, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-15);
        assert!(matches!(
            projection_matrix(&a, 0.0),
            Err(Error::InvalidLambda { .. })
        ));
    }

    #[test]
    fn gram_single_chunk_matches_direct() {
        let a = mat(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = gram_accumulate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(g, a.as_dmatrix() * a.as_dmatrix().transpose());
    }

    #[test]
    fn gram_dimension_mismatch() {
        let a = mat(2, 1, &[1.0, 2.0]);
        let b = mat(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            gram_accumulate(&[a, b]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(gram_accumulate(&[]).is_err());
    }

    #[test]
    fn column_chunks_cover_all_columns() {
        let a = mat(1, 5, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let sizes: Vec<_> = a.column_chunks(2).iter().map(|c| c.ncols()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }
}
