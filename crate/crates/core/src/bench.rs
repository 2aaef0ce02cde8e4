//! Evaluation harness: single-view CRC, fused DeepCWC, residual dumps and timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::crc::{CrcConfig, CrcModel, ResidualSource, ResidualVariant, ResidualVector};
use crate::dataset::{LabelMap, LabeledDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::fusion::{classify, classify_single, fuse_with, FusionRule};

/// Default cap on the number of queries written by [`dump_residuals`].
pub const DEFAULT_DUMP_CAP: usize = 100;

/// Confusion counts, indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_predictions(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut c = Self::new(num_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.record(t, p);
        }
        c
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.correct() as f64 / total as f64,
        }
    }

    /// Recall per true class; `None` for classes absent from the test set.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }
}

/// Relative gain of the fused accuracy over the better single view:
/// `(fused − best) / best`. `None` when both single views score zero.
pub fn improvement_rate(fused: f64, image: f64, deep: f64) -> Option<f64> {
    let best = image.max(deep);
    (best > 0.0).then(|| (fused - best) / best)
}

/// Wall-clock timing of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub fit_seconds: f64,
    pub query_seconds: f64,
    pub train_samples: usize,
    pub queries: usize,
}

impl Timing {
    pub fn total_seconds(&self) -> f64 {
        self.fit_seconds + self.query_seconds
    }

    pub fn seconds_per_query(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.query_seconds / self.queries as f64
        }
    }

    /// Total time (fit and queries) divided by the total number of samples.
    pub fn combined_per_sample(&self) -> f64 {
        let n = self.train_samples + self.queries;
        if n == 0 {
            0.0
        } else {
            self.total_seconds() / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Crc,
    DeepCwc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Crc => f.write_str("crc"),
            Method::DeepCwc => f.write_str("deepcwc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: Confusion,
    /// Single-view accuracies, present for fused runs.
    pub image_accuracy: Option<f64>,
    pub deep_accuracy: Option<f64>,
    pub improvement: Option<f64>,
    pub lambda: f64,
    pub lambda_deep: Option<f64>,
    pub variant: ResidualVariant,
    pub fusion_rule: Option<FusionRule>,
    pub timing: Timing,
    /// Predicted class id per test query, in test order.
    pub predictions: Vec<usize>,
    pub degenerate_decisions: usize,
    pub label_map: LabelMap,
    pub config_echo: BTreeMap<String, String>,
}

impl EvalReport {
    /// Line-oriented `key: value` text followed by CSV blocks.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
        let _ = writeln!(s, "method: {}", self.method);
        let _ = writeln!(s, "accuracy: {}", self.accuracy);
        if self.method == Method::DeepCwc {
            let _ = writeln!(s, "accuracy_image: {}", opt(self.image_accuracy));
            let _ = writeln!(s, "accuracy_deep: {}", opt(self.deep_accuracy));
            let _ = writeln!(s, "improvement: {}", opt(self.improvement));
        }
        let _ = writeln!(s, "correct: {}", self.confusion.correct());
        let _ = writeln!(s, "queries: {}", self.confusion.total());
        let _ = writeln!(s, "lambda: {}", self.lambda);
        if let Some(l) = self.lambda_deep {
            let _ = writeln!(s, "lambda_deep: {l}");
        }
        let _ = writeln!(s, "variant: {}", self.variant);
        if let Some(rule) = self.fusion_rule {
            let _ = writeln!(s, "fusion: {rule}");
        }
        let _ = writeln!(s, "degenerate_decisions: {}", self.degenerate_decisions);
        let _ = writeln!(s, "fit_seconds: {}", self.timing.fit_seconds);
        let _ = writeln!(s, "query_seconds: {}", self.timing.query_seconds);
        let _ = writeln!(s, "seconds_per_query: {}", self.timing.seconds_per_query());
        let _ = writeln!(s, "seconds_per_sample_combined: {}", self.timing.combined_per_sample());
        for (k, v) in &self.config_echo {
            let _ = writeln!(s, "config.{k}: {v}");
        }

        let _ = writeln!(s, "\n[per_class_accuracy]");
        let _ = writeln!(s, "class_id,label,accuracy");
        for (c, acc) in self.per_class_accuracy.iter().enumerate() {
            let _ = writeln!(s, "{c},{},{}", self.label_map.external(c), opt(*acc));
        }

        let _ = writeln!(s, "\n[confusion]");
        let header: Vec<String> = (0..self.confusion.num_classes()).map(|c| c.to_string()).collect();
        let _ = writeln!(s, "true\\pred,{}", header.join(","));
        for (c, row) in self.confusion.counts().iter().enumerate() {
            let row: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{c},{}", row.join(","));
        }
        s
    }
}

fn check_dims(train: &LabeledDataset, test: &LabeledDataset) -> Result<()> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: test.dim(),
        });
    }
    Ok(())
}

fn base_echo(config: &CrcConfig, prefix: &str, model: &CrcModel) -> BTreeMap<String, String> {
    let mut echo = BTreeMap::new();
    echo.insert(format!("{prefix}lambda"), config.lambda.to_string());
    echo.insert(format!("{prefix}variant"), config.variant.to_string());
    echo.insert(format!("{prefix}chunk_cols"), config.chunk_cols.to_string());
    echo.insert(format!("{prefix}dim"), model.dim().to_string());
    echo.insert(format!("{prefix}solve_form"), model.form().to_string());
    echo
}

/// Fits CRC on `train` and classifies every sample of `test`.
pub fn eval_single(
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &CrcConfig,
) -> Result<EvalReport> {
    check_dims(train, test)?;
    let test = test.aligned_to(train.label_map())?;

    let started = Instant::now();
    let model = CrcModel::fit(train, config)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let decisions = (0..test.len())
        .into_par_iter()
        .map(|q| classify_single(&model.class_residuals(test.features().column(q))?))
        .collect::<Result<Vec<_>>>()?;
    let query_seconds = started.elapsed().as_secs_f64();

    let predictions: Vec<usize> = decisions.iter().map(|d| d.predicted_class).collect();
    let confusion = Confusion::from_predictions(model.num_classes(), test.labels(), &predictions);
    let mut config_echo = base_echo(config, "", &model);
    config_echo.insert("train_samples".into(), train.len().to_string());
    config_echo.insert("test_samples".into(), test.len().to_string());
    config_echo.insert("num_classes".into(), model.num_classes().to_string());
    config_echo.insert("provenance".into(), train.provenance().to_string());

    Ok(EvalReport {
        method: Method::Crc,
        accuracy: confusion.accuracy(),
        per_class_accuracy: confusion.per_class_accuracy(),
        image_accuracy: None,
        deep_accuracy: None,
        improvement: None,
        lambda: config.lambda,
        lambda_deep: None,
        variant: config.variant,
        fusion_rule: None,
        timing: Timing {
            fit_seconds,
            query_seconds,
            train_samples: train.len(),
            queries: test.len(),
        },
        degenerate_decisions: decisions.iter().filter(|d| d.degenerate).count(),
        predictions,
        confusion,
        label_map: train.label_map().clone(),
        config_echo,
    })
}

/// Settings for a two-view evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedConfig {
    pub image: CrcConfig,
    pub deep: CrcConfig,
    pub rule: FusionRule,
}

impl FusedConfig {
    pub fn new(lambda_image: f64, lambda_deep: f64, variant: ResidualVariant) -> Self {
        Self {
            image: CrcConfig::default()
                .with_lambda(lambda_image)
                .with_variant(variant)
                .with_view(ResidualSource::Image),
            deep: CrcConfig::default()
                .with_lambda(lambda_deep)
                .with_variant(variant)
                .with_view(ResidualSource::Deep),
            rule: FusionRule::Product,
        }
    }

    pub fn with_rule(mut self, rule: FusionRule) -> Self {
        self.rule = rule;
        self
    }
}

impl Default for FusedConfig {
    fn default() -> Self {
        let lambda = crate::crc::DEFAULT_LAMBDA;
        Self::new(lambda, lambda, ResidualVariant::Plain)
    }
}

/// Everything computed for one paired query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub image: ResidualVector,
    pub deep: ResidualVector,
    pub fused: ResidualVector,
    pub image_prediction: usize,
    pub deep_prediction: usize,
    pub fused_prediction: usize,
    pub degenerate: bool,
}

/// Independently fitted image-view and deep-view models.
#[derive(Debug, Clone)]
pub struct FusedModels {
    pub image: CrcModel,
    pub deep: CrcModel,
    pub rule: FusionRule,
    /// Label map of the training data; test sets are aligned to it.
    pub label_map: LabelMap,
}

impl FusedModels {
    pub fn fit(train: &PairedDataset, config: &FusedConfig) -> Result<Self> {
        let image = CrcModel::fit(train.image(), &config.image.clone().with_view(ResidualSource::Image))?;
        let deep = CrcModel::fit(train.deep(), &config.deep.clone().with_view(ResidualSource::Deep))?;
        Ok(Self {
            image,
            deep,
            rule: config.rule,
            label_map: train.image().label_map().clone(),
        })
    }

    /// Residuals and decisions for sample `q` of `test`, whose labels must
    /// already use [`FusedModels::label_map`].
    pub fn query(&self, test: &PairedDataset, q: usize) -> Result<QueryOutcome> {
        let image = self.image.class_residuals(test.image().features().column(q))?;
        let deep = self.deep.class_residuals(test.deep().features().column(q))?;
        let fused = fuse_with(self.rule, &image, &deep)?;
        let image_decision = classify_single(&image)?;
        let deep_decision = classify_single(&deep)?;
        let fused_decision = classify(&fused)?;
        Ok(QueryOutcome {
            image_prediction: image_decision.predicted_class,
            deep_prediction: deep_decision.predicted_class,
            fused_prediction: fused_decision.predicted_class,
            degenerate: fused_decision.degenerate,
            image,
            deep,
            fused,
        })
    }

    pub fn query_all(&self, test: &PairedDataset) -> Result<Vec<QueryOutcome>> {
        (0..test.len())
            .into_par_iter()
            .map(|q| self.query(test, q))
            .collect()
    }
}

fn check_paired_dims(train: &PairedDataset, test: &PairedDataset) -> Result<()> {
    check_dims(train.image(), test.image())?;
    check_dims(train.deep(), test.deep())
}

/// Fits both views on `train`, fuses per query, and reports all three accuracies.
pub fn eval_fused(
    train: &PairedDataset,
    test: &PairedDataset,
    config: &FusedConfig,
) -> Result<EvalReport> {
    check_paired_dims(train, test)?;
    let test = test.aligned_to(train.image().label_map())?;

    let started = Instant::now();
    let models = FusedModels::fit(train, config)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let outcomes = models.query_all(&test)?;
    let query_seconds = started.elapsed().as_secs_f64();

    let c = models.image.num_classes();
    let truth = test.labels();
    let pick = |f: fn(&QueryOutcome) -> usize| outcomes.iter().map(f).collect::<Vec<_>>();
    let predictions = pick(|o| o.fused_prediction);
    let confusion = Confusion::from_predictions(c, truth, &predictions);
    let image_accuracy = Confusion::from_predictions(c, truth, &pick(|o| o.image_prediction)).accuracy();
    let deep_accuracy = Confusion::from_predictions(c, truth, &pick(|o| o.deep_prediction)).accuracy();

    let mut config_echo = base_echo(&config.image, "image.", &models.image);
    config_echo.extend(base_echo(&config.deep, "deep.", &models.deep));
    config_echo.insert("fusion".into(), config.rule.to_string());
    config_echo.insert("train_samples".into(), train.len().to_string());
    config_echo.insert("test_samples".into(), test.len().to_string());
    config_echo.insert("num_classes".into(), c.to_string());
    config_echo.insert("image.provenance".into(), train.image().provenance().to_string());
    config_echo.insert("deep.provenance".into(), train.deep().provenance().to_string());

    Ok(EvalReport {
        method: Method::DeepCwc,
        accuracy: confusion.accuracy(),
        per_class_accuracy: confusion.per_class_accuracy(),
        image_accuracy: Some(image_accuracy),
        deep_accuracy: Some(deep_accuracy),
        improvement: improvement_rate(confusion.accuracy(), image_accuracy, deep_accuracy),
        lambda: config.image.lambda,
        lambda_deep: Some(config.deep.lambda),
        variant: config.image.variant,
        fusion_rule: Some(config.rule),
        timing: Timing {
            fit_seconds,
            query_seconds,
            train_samples: train.len(),
            queries: test.len(),
        },
        degenerate_decisions: outcomes.iter().filter(|o| o.degenerate).count(),
        predictions,
        confusion,
        label_map: train.image().label_map().clone(),
        config_echo,
    })
}

/// Header of the residual dump CSV.
pub const DUMP_HEADER: &str = "query_id,true_class,class_id,res_img,res_deep,res_fused";

/// Writes one row per (query, class) for the first `max_queries` test samples
/// and returns the fused prediction of each dumped query.
pub fn dump_residuals<W: Write>(
    models: &FusedModels,
    test: &PairedDataset,
    max_queries: usize,
    mut out: W,
) -> Result<Vec<usize>> {
    let test = test.aligned_to(&models.label_map)?;
    let count = test.len().min(max_queries);
    let outcomes = (0..count)
        .into_par_iter()
        .map(|q| models.query(&test, q))
        .collect::<Result<Vec<_>>>()?;
    let io = |e| Error::io("<dump>", e);
    writeln!(out, "{DUMP_HEADER}").map_err(io)?;
    for (q, o) in outcomes.iter().enumerate() {
        let truth = test.labels()[q];
        for c in 0..o.fused.len() {
            writeln!(
                out,
                "{q},{truth},{c},{},{},{}",
                o.image.values()[c],
                o.deep.values()[c],
                o.fused.values()[c]
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(outcomes.iter().map(|o| o.fused_prediction).collect())
}

/// One row of a residual dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpRow {
    pub query_id: usize,
    pub true_class: usize,
    pub class_id: usize,
    pub res_img: f64,
    pub res_deep: f64,
    pub res_fused: f64,
}

pub fn read_residual_dump<R: Read>(input: R) -> Result<Vec<DumpRow>> {
    let path = Path::new("<dump>");
    let parse = |e: &dyn std::fmt::Display| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse(&e))?;
        let field = |i: usize| record.get(i).ok_or_else(|| parse(&"missing column"));
        let int = |i: usize| -> Result<usize> { field(i)?.parse().map_err(|e| parse(&e)) };
        let float = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|e| parse(&e)) };
        rows.push(DumpRow {
            query_id: int(0)?,
            true_class: int(1)?,
            class_id: int(2)?,
            res_img: float(3)?,
            res_deep: float(4)?,
            res_fused: float(5)?,
        });
    }
    Ok(rows)
}

/// Repeated timing of the full two-view pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub reps: usize,
    pub fit_seconds: Vec<f64>,
    pub query_seconds: Vec<f64>,
    pub train_samples: usize,
    pub queries: usize,
    /// Fused predictions of the first repetition.
    pub predictions: Vec<usize>,
    /// Whether every repetition produced the same predictions.
    pub reproducible: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl TimingRecord {
    pub fn mean_fit_seconds(&self) -> f64 {
        mean(&self.fit_seconds)
    }

    pub fn mean_query_seconds(&self) -> f64 {
        mean(&self.query_seconds)
    }

    pub fn seconds_per_query(&self) -> f64 {
        self.mean_query_seconds() / self.queries.max(1) as f64
    }

    /// Mean total time divided by the total number of samples (train + test).
    pub fn combined_per_sample(&self) -> f64 {
        (self.mean_fit_seconds() + self.mean_query_seconds())
            / (self.train_samples + self.queries).max(1) as f64
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "reps: {}", self.reps);
        let _ = writeln!(s, "train_samples: {}", self.train_samples);
        let _ = writeln!(s, "queries: {}", self.queries);
        let _ = writeln!(s, "fit_seconds_mean: {}", self.mean_fit_seconds());
        let _ = writeln!(s, "query_seconds_mean: {}", self.mean_query_seconds());
        let _ = writeln!(s, "seconds_per_query: {}", self.seconds_per_query());
        let _ = writeln!(s, "seconds_per_sample_combined: {}", self.combined_per_sample());
        let _ = writeln!(s, "predictions_reproducible: {}", self.reproducible);
        let _ = writeln!(s, "\n[runs]");
        let _ = writeln!(s, "rep,fit_seconds,query_seconds");
        for (i, (f, q)) in self.fit_seconds.iter().zip(&self.query_seconds).enumerate() {
            let _ = writeln!(s, "{i},{f},{q}");
        }
        s
    }
}

/// Runs fit + all queries `reps` times and records the timings.
pub fn time_pipeline(
    train: &PairedDataset,
    test: &PairedDataset,
    config: &FusedConfig,
    reps: usize,
) -> Result<TimingRecord> {
    if reps == 0 {
        return Err(Error::InvalidSplit("reps must be at least 1".into()));
    }
    check_paired_dims(train, test)?;
    let test = test.aligned_to(train.image().label_map())?;
    let mut record = TimingRecord {
        reps,
        fit_seconds: Vec::with_capacity(reps),
        query_seconds: Vec::with_capacity(reps),
        train_samples: train.len(),
        queries: test.len(),
        predictions: Vec::new(),
        reproducible: true,
    };
    for rep in 0..reps {
        let started = Instant::now();
        let models = FusedModels::fit(train, config)?;
        record.fit_seconds.push(started.elapsed().as_secs_f64());
        let started = Instant::now();
        let outcomes = models.query_all(&test)?;
        record.query_seconds.push(started.elapsed().as_secs_f64());
        let predictions: Vec<usize> = outcomes.iter().map(|o| o.fused_prediction).collect();
        if rep == 0 {
            record.predictions = predictions;
        } else if predictions != record.predictions {
            record.reproducible = false;
        }
    }
    Ok(record)
}

/// Hex SHA-256 of a file, for report provenance.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
