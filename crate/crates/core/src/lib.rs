//! Collaborative representation classification over two feature views.
//!
//! A query is coded by ridge regression over all training samples, once on
//! raw image vectors and once on deep features. Each view yields one residual
//! per class; the two residual vectors are multiplied element-wise and the
//! class with the smallest fused residual wins.
//!
//! ```
//! use deepcwc::{FeatureMatrix, LabeledDataset, CrcConfig, CrcModel, classify_single};
//!
//! let train = FeatureMatrix::from_columns(&[
//!     vec![1.0, 0.0, 0.0],
//!     vec![0.9, 0.1, 0.0],
//!     vec![0.0, 0.0, 1.0],
//!     vec![0.0, 0.2, 0.9],
//! ])
//! .unwrap();
//! let train = LabeledDataset::from_raw_labels(train, &[3, 3, 8, 8], "toy").unwrap();
//! let model = CrcModel::fit(&train, &CrcConfig::default()).unwrap();
//! let residuals = model.class_residuals(&[0.1, 0.0, 2.0]).unwrap();
//! let decision = classify_single(&residuals).unwrap();
//! assert_eq!(train.label_map().external(decision.predicted_class), 8);
//! ```

pub mod bench;
pub mod crc;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod io;
pub mod linalg;

pub use crc::{
    fit, ClassIndex, CrcConfig, CrcModel, ResidualSource, ResidualVariant, ResidualVector,
    DEFAULT_LAMBDA,
};
pub use dataset::{pair_views, split, LabelMap, LabeledDataset, PairedDataset, SplitSpec};
pub use error::{Error, Result};
pub use fusion::{classify, classify_single, fuse, fuse_additive, FusedDecision, FusionRule};
pub use linalg::{
    gram_accumulate, normalize_columns, projection_matrix, ridge_solve, FeatureMatrix,
    RidgeSolution, SolveMode, SolvedForm,
};
