//! Labeled datasets, train/test splits and paired feature views.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crc::ClassIndex;
use crate::error::{Error, Result};
use crate::linalg::FeatureMatrix;

/// Mapping from external labels to contiguous class ids `0..C`, in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMap {
    externals: Vec<i64>,
}

impl LabelMap {
    /// Remaps raw labels; returns the ids alongside the map.
    pub fn from_first_appearance(raw: &[i64]) -> (Vec<usize>, LabelMap) {
        let mut lookup = HashMap::new();
        let mut externals = Vec::new();
        let ids = raw
            .iter()
            .map(|&label| {
                *lookup.entry(label).or_insert_with(|| {
                    externals.push(label);
                    externals.len() - 1
                })
            })
            .collect();
        (ids, LabelMap { externals })
    }

    pub fn from_externals(externals: Vec<i64>) -> Self {
        Self { externals }
    }

    pub fn num_classes(&self) -> usize {
        self.externals.len()
    }

    pub fn external(&self, id: usize) -> i64 {
        self.externals[id]
    }

    pub fn id_of(&self, external: i64) -> Option<usize> {
        self.externals.iter().position(|&e| e == external)
    }

    pub fn externals(&self) -> &[i64] {
        &self.externals
    }
}

/// A feature matrix whose columns carry class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    labels: Vec<usize>,
    classes: ClassIndex,
    label_map: LabelMap,
    provenance: String,
}

impl LabeledDataset {
    /// Pairs features with already-remapped class ids.
    pub fn new(
        features: FeatureMatrix,
        labels: Vec<usize>,
        label_map: LabelMap,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if labels.len() != features.samples() {
            return Err(Error::CountMismatch {
                what: "label list",
                expected: features.samples(),
                got: labels.len(),
            });
        }
        let classes = ClassIndex::from_labels(&labels, label_map.num_classes())?;
        Ok(Self {
            features,
            labels,
            classes,
            label_map,
            provenance: provenance.into(),
        })
    }

    /// Pairs features with external labels, remapping them in first-appearance order.
    pub fn from_raw_labels(
        features: FeatureMatrix,
        raw: &[i64],
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let (ids, map) = LabelMap::from_first_appearance(raw);
        Self::new(features, ids, map, provenance)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// External label of every sample.
    pub fn external_labels(&self) -> Vec<i64> {
        self.labels.iter().map(|&id| self.label_map.external(id)).collect()
    }

    pub fn classes(&self) -> &ClassIndex {
        &self.classes
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples at `indices`, in that order. The label map is kept as is, so
    /// class ids stay comparable with the parent dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_columns(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.label_map.clone(), self.provenance.clone())
    }

    /// Re-expresses this dataset's class ids in terms of `reference`'s label map.
    ///
    /// Used when train and test labels come from different files.
    pub fn aligned_to(&self, reference: &LabelMap) -> Result<Self> {
        if &self.label_map == reference {
            return Ok(self.clone());
        }
        let labels = self
            .labels
            .iter()
            .map(|&id| {
                let ext = self.label_map.external(id);
                reference.id_of(ext).ok_or(Error::UnknownLabel(ext))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.features.clone(),
            labels,
            reference.clone(),
            self.provenance.clone(),
        )
    }
}

/// How to carve a dataset into train and test parts.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// First `k` samples of each class (file order) train, the rest test.
    PerClassFirstK(usize),
    /// A seeded shuffle within each class, then the leading `fraction` trains.
    PerClassFraction { fraction: f64, seed: u64 },
    /// These sample indices train, all others test.
    ExplicitIndices(Vec<usize>),
}

impl FromStr for SplitSpec {
    type Err = Error;

    /// Parses `firstk:K` or `frac:F:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSplit(format!("cannot parse '{s}' (firstk:K | frac:F:SEED)"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["firstk", k] => Ok(SplitSpec::PerClassFirstK(k.parse().map_err(|_| bad())?)),
            ["frac", f, seed] => Ok(SplitSpec::PerClassFraction {
                fraction: f.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSpec::PerClassFirstK(k) => write!(f, "firstk:{k}"),
            SplitSpec::PerClassFraction { fraction, seed } => write!(f, "frac:{fraction}:{seed}"),
            SplitSpec::ExplicitIndices(idx) => write!(f, "explicit:{} train indices", idx.len()),
        }
    }
}

/// Train and test sample indices for `spec`, each ascending.
pub fn split_indices(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let classes = ds.classes();
    let mut train = Vec::new();
    match spec {
        SplitSpec::PerClassFirstK(k) => {
            if *k == 0 {
                return Err(Error::InvalidSplit("firstk needs k >= 1".into()));
            }
            for c in 0..classes.num_classes() {
                let members = classes.members(c);
                if members.len() <= *k {
                    return Err(Error::ClassTooSmall(ds.label_map().external(c)));
                }
                train.extend_from_slice(&members[..*k]);
            }
        }
        SplitSpec::PerClassFraction { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                return Err(Error::InvalidSplit(format!(
                    "fraction must lie in (0, 1), got {fraction}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for c in 0..classes.num_classes() {
                let mut members = classes.members(c).to_vec();
                if members.len() < 2 {
                    return Err(Error::ClassTooSmall(ds.label_map().external(c)));
                }
                members.shuffle(&mut rng);
                let take = ((members.len() as f64 * fraction).round() as usize)
                    .clamp(1, members.len() - 1);
                train.extend_from_slice(&members[..take]);
            }
        }
        SplitSpec::ExplicitIndices(indices) => {
            let mut seen = vec![false; ds.len()];
            for &i in indices {
                if i >= ds.len() {
                    return Err(Error::InvalidSplit(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidSplit(format!("index {i} listed twice")));
                }
            }
            train = indices.clone();
        }
    }
    train.sort_unstable();
    let mut in_train = vec![false; ds.len()];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    Ok((train, test))
}

/// Splits a dataset into `(train, test)`.
pub fn split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(ds, spec)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Two views of the same samples: raw image vectors and deep features.
///
/// Sample `i` refers to the same underlying image in both views. The only
/// way to build or subdivide a pair goes through checks that keep it so.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    image: LabeledDataset,
    deep: LabeledDataset,
}

/// Checks that two views label every sample identically and pairs them.
/// Feature dimensions may differ.
pub fn pair_views(image: LabeledDataset, deep: LabeledDataset) -> Result<PairedDataset> {
    if image.len() != deep.len() {
        return Err(Error::CountMismatch {
            what: "deep view samples",
            expected: image.len(),
            got: deep.len(),
        });
    }
    let img_labels = image.external_labels();
    let deep_labels = deep.external_labels();
    if let Some(i) = (0..img_labels.len()).find(|&i| img_labels[i] != deep_labels[i]) {
        return Err(Error::LabelMismatch(i));
    }
    let deep = deep.aligned_to(image.label_map())?;
    Ok(PairedDataset { image, deep })
}

impl PairedDataset {
    pub fn image(&self) -> &LabeledDataset {
        &self.image
    }

    pub fn deep(&self) -> &LabeledDataset {
        &self.deep
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        self.image.labels()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            image: self.image.subset(indices)?,
            deep: self.deep.subset(indices)?,
        })
    }

    /// Applies the same split to both views.
    pub fn split(&self, spec: &SplitSpec) -> Result<(PairedDataset, PairedDataset)> {
        let (train, test) = split_indices(&self.image, spec)?;
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    pub fn aligned_to(&self, reference: &LabelMap) -> Result<Self> {
        Ok(Self {
            image: self.image.aligned_to(reference)?,
            deep: self.deep.aligned_to(reference)?,
        })
    }
}
