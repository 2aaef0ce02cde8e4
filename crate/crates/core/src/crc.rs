//! Collaborative representation classification (CRC).
//!
//! A query is coded over *all* training samples at once with a ridge
//! penalty, then each class is scored by how well its own columns and
//! coefficients reconstruct the query. The same code path serves raw image
//! vectors and deep features; only the input matrix differs.

use std::ops::Range;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{
    check_lambda, factor_dual, factor_primal, normalize_columns, FeatureMatrix, RidgeSolution,
    SolveMode, SolvedForm, DEFAULT_CHUNK_COLS,
};

/// Default ridge weight.
pub const DEFAULT_LAMBDA: f64 = 0.001;

/// Coefficient-block norms below this count as "class not used".
const NEGLIGIBLE_COEF_NORM: f64 = 1e-12;

/// Partition of sample columns into classes `0..C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    members: Vec<Vec<usize>>,
}

impl ClassIndex {
    /// Groups sample indices by class id. Every label must be `< num_classes`.
    ///
    /// A class may end up with no members (e.g. after an explicit split);
    /// fitting a model rejects that case.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); num_classes];
        for (i, &label) in labels.iter().enumerate() {
            members
                .get_mut(label)
                .ok_or(Error::DimensionMismatch {
                    expected: num_classes,
                    got: label,
                })?
                .push(i);
        }
        Ok(Self { members })
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    /// Sample indices of class `class`, ascending.
    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// How a per-class reconstruction error is turned into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualVariant {
    /// `‖y − A_i α_i‖₂`
    #[default]
    Plain,
    /// `‖y − A_i α_i‖₂ / ‖α_i‖₂`
    CoefNormalized,
}

impl FromStr for ResidualVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(ResidualVariant::Plain),
            "coefnorm" => Ok(ResidualVariant::CoefNormalized),
            other => Err(format!("unknown residual variant '{other}' (plain|coefnorm)")),
        }
    }
}

impl std::fmt::Display for ResidualVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResidualVariant::Plain => f.write_str("plain"),
            ResidualVariant::CoefNormalized => f.write_str("coefnorm"),
        }
    }
}

/// Which feature view a residual vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualSource {
    #[default]
    Image,
    Deep,
    Fused,
}

/// Per-class residuals for one query: nonnegative, finite, length `C ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    values: Vec<f64>,
    source: ResidualSource,
}

impl ResidualVector {
    pub fn new(values: Vec<f64>, source: ResidualSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if value < 0.0 {
                return Err(Error::NegativeResidual { index, value });
            }
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> ResidualSource {
        self.source
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::NonFiniteInput);
        }
        Self::new(self.values.iter().map(|v| v * factor).collect(), self.source)
    }
}

/// Settings for [`CrcModel::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrcConfig {
    pub lambda: f64,
    pub variant: ResidualVariant,
    /// Samples per block when accumulating `AAᵀ`.
    pub chunk_cols: usize,
    /// Tag attached to residual vectors produced by the model.
    pub view: ResidualSource,
}

impl Default for CrcConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            variant: ResidualVariant::Plain,
            chunk_cols: DEFAULT_CHUNK_COLS,
            view: ResidualSource::Image,
        }
    }
}

impl CrcConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_variant(mut self, variant: ResidualVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_view(mut self, view: ResidualSource) -> Self {
        self.view = view;
        self
    }
}

/// Pre-solved coefficient map.
///
/// With `n ≤ d` the `n × d` matrix `P` is stored outright. Otherwise only the
/// `d × d` factor of `AAᵀ + λI` is kept and coefficients are `Aᵀ (AAᵀ + λI)⁻¹ y`.
#[derive(Debug, Clone)]
enum Projector {
    Explicit(DMatrix<f64>),
    Dual(Cholesky<f64, Dyn>),
}

/// A fitted CRC model. Immutable; safe to query from many threads.
#[derive(Debug, Clone)]
pub struct CrcModel {
    /// Normalized training columns, regrouped so each class is contiguous.
    basis: FeatureMatrix,
    /// `order[k]` is the training-set index of internal column `k`.
    order: Vec<usize>,
    ranges: Vec<Range<usize>>,
    classes: ClassIndex,
    projector: Projector,
    config: CrcConfig,
}

impl CrcModel {
    pub fn fit(train: &LabeledDataset, config: &CrcConfig) -> Result<Self> {
        check_lambda(config.lambda, true)?;
        let classes = train.classes().clone();
        if classes.num_classes() < 2 {
            return Err(Error::SingleClass);
        }
        if let Some(empty) = (0..classes.num_classes()).find(|&c| classes.members(c).is_empty()) {
            return Err(Error::EmptyClass(empty));
        }

        let mut order = Vec::with_capacity(train.len());
        let mut ranges = Vec::with_capacity(classes.num_classes());
        for c in 0..classes.num_classes() {
            let start = order.len();
            order.extend_from_slice(classes.members(c));
            ranges.push(start..order.len());
        }
        let grouped = if order.iter().enumerate().all(|(k, &j)| k == j) {
            train.features().clone()
        } else {
            train.features().select_columns(&order)?
        };
        let basis = normalize_columns(&grouped)?;

        let projector = match SolveMode::Auto.resolve(basis.dim(), basis.samples()) {
            SolvedForm::Primal => {
                let chol = factor_primal(basis.as_dmatrix(), config.lambda)?;
                Projector::Explicit(chol.solve(&basis.as_dmatrix().transpose()))
            }
            SolvedForm::Dual => {
                Projector::Dual(factor_dual(&basis, config.lambda, config.chunk_cols)?)
            }
        };

        Ok(Self {
            basis,
            order,
            ranges,
            classes,
            projector,
            config: config.clone(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.ranges.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn samples(&self) -> usize {
        self.basis.samples()
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn variant(&self) -> ResidualVariant {
        self.config.variant
    }

    pub fn config(&self) -> &CrcConfig {
        &self.config
    }

    /// Class membership of the training samples (training-set indices).
    pub fn classes(&self) -> &ClassIndex {
        &self.classes
    }

    pub fn form(&self) -> SolvedForm {
        match self.projector {
            Projector::Explicit(_) => SolvedForm::Primal,
            Projector::Dual(_) => SolvedForm::Dual,
        }
    }

    /// The explicit `P = (AᵀA + λI)⁻¹Aᵀ`, rows in training-set order.
    ///
    /// Built on demand from the dual factor when the model does not store it.
    pub fn projection(&self) -> DMatrix<f64> {
        let internal = match &self.projector {
            Projector::Explicit(p) => p.clone(),
            Projector::Dual(chol) => chol.solve(self.basis.as_dmatrix()).transpose(),
        };
        let mut out = DMatrix::zeros(internal.nrows(), internal.ncols());
        for (k, &j) in self.order.iter().enumerate() {
            out.set_row(j, &internal.row(k));
        }
        out
    }

    fn normalized_query(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let y = DVector::from_column_slice(y);
        let norm = y.norm();
        if norm < crate::linalg::ZERO_NORM {
            return Err(Error::ZeroQuery);
        }
        Ok(y / norm)
    }

    /// Coefficients in internal (class-grouped) column order.
    fn code(&self, y_norm: &DVector<f64>) -> DVector<f64> {
        match &self.projector {
            Projector::Explicit(p) => p * y_norm,
            Projector::Dual(chol) => self.basis.as_dmatrix().tr_mul(&chol.solve(y_norm)),
        }
    }

    /// Ridge coefficients of the unit-normalized query, in training-set order.
    pub fn represent(&self, y: &[f64]) -> Result<RidgeSolution> {
        let y_norm = self.normalized_query(y)?;
        let internal = self.code(&y_norm);
        let mut alpha = DVector::zeros(internal.len());
        for (k, &j) in self.order.iter().enumerate() {
            alpha[j] = internal[k];
        }
        Ok(RidgeSolution {
            alpha,
            lambda: self.config.lambda,
            mode: self.form(),
        })
    }

    /// Per-class reconstruction residuals of the unit-normalized query.
    pub fn class_residuals(&self, y: &[f64]) -> Result<ResidualVector> {
        let y_norm = self.normalized_query(y)?;
        let alpha = self.code(&y_norm);
        let basis = self.basis.as_dmatrix();
        let values = self
            .ranges
            .iter()
            .map(|range| {
                let block = basis.columns(range.start, range.len());
                let coef = alpha.rows(range.start, range.len());
                let residual = (&y_norm - block * coef).norm();
                match self.config.variant {
                    ResidualVariant::Plain => residual,
                    ResidualVariant::CoefNormalized => {
                        let coef_norm = coef.norm();
                        if coef_norm < NEGLIGIBLE_COEF_NORM {
                            y_norm.norm()
                        } else {
                            residual / coef_norm
                        }
                    }
                }
            })
            .collect();
        ResidualVector::new(values, self.config.view)
    }
}

/// Fits a CRC model; shorthand for [`CrcModel::fit`].
pub fn fit(train: &LabeledDataset, config: &CrcConfig) -> Result<CrcModel> {
    CrcModel::fit(train, config)
}
