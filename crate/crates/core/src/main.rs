use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepcwc::bench::{
    dump_residuals, eval_fused, eval_single, file_sha256, time_pipeline, FusedConfig,
    FusedModels, DEFAULT_DUMP_CAP,
};
use deepcwc::io::{read_features_as, read_labels, write_features, Dtype, FeatureFormat};
use deepcwc::linalg::DEFAULT_CHUNK_COLS;
use deepcwc::{
    pair_views, split, CrcConfig, CrcModel, Error, FusionRule, LabeledDataset, PairedDataset,
    ResidualVariant, Result, SplitSpec, DEFAULT_LAMBDA,
};

#[derive(Parser)]
#[command(name = "deepcwc", version, about = "Collaborative representation classification with two-view residual fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a CRC model on one view and print a summary.
    Fit {
        #[command(flatten)]
        input: ViewInput,
        #[command(flatten)]
        model: ModelArgs,
        /// Write the projection matrix (n x d) here as CWCF.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate single-view CRC.
    EvalSingle {
        #[command(flatten)]
        input: ViewInput,
        #[command(flatten)]
        model: ModelArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate image-view CRC, deep-view CRC and their fusion.
    EvalFused {
        #[command(flatten)]
        input: ViewInput,
        #[command(flatten)]
        deep: DeepInput,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-class residuals of both views and their fusion as CSV.
    DumpResiduals {
        #[command(flatten)]
        input: ViewInput,
        #[command(flatten)]
        deep: DeepInput,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        /// Maximum number of test queries to dump.
        #[arg(long, default_value_t = DEFAULT_DUMP_CAP)]
        max_queries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time repeated fit + query runs of the fused pipeline.
    Time {
        #[command(flatten)]
        input: ViewInput,
        #[command(flatten)]
        deep: DeepInput,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ViewInput {
    /// Image-view (or single-view) feature file.
    #[arg(long)]
    features: PathBuf,
    /// Labels for --features.
    #[arg(long)]
    labels: PathBuf,
    /// Separate test features; otherwise --split carves a test set out of --features.
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// firstk:K or frac:F:SEED
    #[arg(long)]
    split: Option<SplitSpec>,
    /// Feature file format.
    #[arg(long, default_value = "cwcf")]
    format: FeatureFormat,
}

#[derive(Args)]
struct DeepInput {
    #[arg(long)]
    deep_features: PathBuf,
    /// Defaults to --labels.
    #[arg(long)]
    deep_labels: Option<PathBuf>,
    #[arg(long)]
    test_deep_features: Option<PathBuf>,
    /// Defaults to --test-labels.
    #[arg(long)]
    test_deep_labels: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Deep-view regularization; defaults to --lambda.
    #[arg(long)]
    lambda_deep: Option<f64>,
    /// plain or coefnorm
    #[arg(long, default_value = "plain")]
    variant: ResidualVariant,
    /// Samples per block when accumulating the Gram matrix.
    #[arg(long, default_value_t = DEFAULT_CHUNK_COLS)]
    chunk_cols: usize,
}

#[derive(Args)]
struct FusionArgs {
    /// Sum residuals instead of multiplying them (comparison only).
    #[arg(long)]
    additive_fusion: bool,
}

impl ModelArgs {
    fn single(&self) -> CrcConfig {
        CrcConfig {
            chunk_cols: self.chunk_cols,
            ..CrcConfig::default()
                .with_lambda(self.lambda)
                .with_variant(self.variant)
        }
    }

    fn fused(&self, fusion: &FusionArgs) -> FusedConfig {
        let mut config = FusedConfig::new(
            self.lambda,
            self.lambda_deep.unwrap_or(self.lambda),
            self.variant,
        )
        .with_rule(if fusion.additive_fusion {
            FusionRule::Sum
        } else {
            FusionRule::Product
        });
        config.image.chunk_cols = self.chunk_cols;
        config.deep.chunk_cols = self.chunk_cols;
        config
    }
}

/// Input files and settings echoed into every report.
#[derive(Default)]
struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    fn file(&mut self, key: &str, path: &Path) -> Result<()> {
        self.entries
            .push((format!("input.{key}"), path.display().to_string()));
        self.entries
            .push((format!("input.{key}.sha256"), file_sha256(path)?));
        Ok(())
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }
}

fn load(
    features: &Path,
    labels: &Path,
    format: FeatureFormat,
    key: &str,
    prov: &mut Provenance,
) -> Result<LabeledDataset> {
    prov.file(&format!("{key}.features"), features)?;
    prov.file(&format!("{key}.labels"), labels)?;
    let m = read_features_as(features, format)?;
    let raw = read_labels(labels)?;
    LabeledDataset::from_raw_labels(m, &raw, features.display().to_string())
}

fn missing(flag: &str) -> Error {
    Error::InvalidSplit(format!("{flag} is required here"))
}

fn load_single(input: &ViewInput, prov: &mut Provenance) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    prov.push("format", format!("{:?}", input.format).to_lowercase());
    let all = load(&input.features, &input.labels, input.format, "train", prov)?;
    if let Some(test_features) = &input.test_features {
        let test_labels = input.test_labels.as_ref().ok_or_else(|| missing("--test-labels"))?;
        let test = load(test_features, test_labels, input.format, "test", prov)?;
        return Ok((all, Some(test)));
    }
    match &input.split {
        Some(spec) => {
            prov.push("split", spec);
            let (train, test) = split(&all, spec)?;
            Ok((train, Some(test)))
        }
        None => Ok((all, None)),
    }
}

fn load_single_with_test(input: &ViewInput, prov: &mut Provenance) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = load_single(input, prov)?;
    Ok((train, test.ok_or_else(|| missing("--split or --test-features"))?))
}

fn load_paired(
    input: &ViewInput,
    deep: &DeepInput,
    prov: &mut Provenance,
) -> Result<(PairedDataset, PairedDataset)> {
    prov.push("format", format!("{:?}", input.format).to_lowercase());
    let image = load(&input.features, &input.labels, input.format, "train.image", prov)?;
    let deep_labels = deep.deep_labels.as_ref().unwrap_or(&input.labels);
    let deep_all = load(&deep.deep_features, deep_labels, input.format, "train.deep", prov)?;
    let all = pair_views(image, deep_all)?;

    if let Some(test_features) = &input.test_features {
        let test_labels = input.test_labels.as_ref().ok_or_else(|| missing("--test-labels"))?;
        let test_deep = deep
            .test_deep_features
            .as_ref()
            .ok_or_else(|| missing("--test-deep-features"))?;
        let test_deep_labels = deep.test_deep_labels.as_ref().unwrap_or(test_labels);
        let test = pair_views(
            load(test_features, test_labels, input.format, "test.image", prov)?,
            load(test_deep, test_deep_labels, input.format, "test.deep", prov)?,
        )?;
        return Ok((all, test));
    }
    let spec = input
        .split
        .as_ref()
        .ok_or_else(|| missing("--split or --test-features"))?;
    prov.push("split", spec);
    all.split(spec)
}

fn output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut prov = Provenance::default();
    match cli.command {
        Command::Fit { input, model, out } => {
            let (train, _) = load_single(&input, &mut prov)?;
            let config = model.single();
            let started = std::time::Instant::now();
            let fitted = CrcModel::fit(&train, &config)?;
            let seconds = started.elapsed().as_secs_f64();
            let mut text = format!(
                "classes: {}\nsamples: {}\ndim: {}\nlambda: {}\nvariant: {}\nsolve_form: {}\nfit_seconds: {}\n",
                fitted.num_classes(),
                fitted.samples(),
                fitted.dim(),
                fitted.lambda(),
                fitted.variant(),
                fitted.form(),
                seconds
            );
            for (k, v) in &prov.entries {
                text.push_str(&format!("config.{k}: {v}\n"));
            }
            if let Some(path) = out {
                let p = deepcwc::FeatureMatrix::from_dmatrix(fitted.projection())?;
                write_features(&p, &path, Dtype::F64)?;
                text.push_str(&format!("projection: {}\n", path.display()));
            }
            output(None, &text)
        }
        Command::EvalSingle { input, model, out } => {
            let (train, test) = load_single_with_test(&input, &mut prov)?;
            let mut report = eval_single(&train, &test, &model.single())?;
            report.config_echo.extend(prov.entries);
            output(out.as_deref(), &report.render())
        }
        Command::EvalFused {
            input,
            deep,
            model,
            fusion,
            out,
        } => {
            let (train, test) = load_paired(&input, &deep, &mut prov)?;
            let mut report = eval_fused(&train, &test, &model.fused(&fusion))?;
            report.config_echo.extend(prov.entries);
            output(out.as_deref(), &report.render())
        }
        Command::DumpResiduals {
            input,
            deep,
            model,
            fusion,
            max_queries,
            out,
        } => {
            let (train, test) = load_paired(&input, &deep, &mut prov)?;
            let models = FusedModels::fit(&train, &model.fused(&fusion))?;
            let predictions = match &out {
                Some(path) => {
                    let file = File::create(path).map_err(|e| Error::io(path, e))?;
                    dump_residuals(&models, &test, max_queries, BufWriter::new(file))?
                }
                None => dump_residuals(&models, &test, max_queries, std::io::stdout().lock())?,
            };
            let pretty: Vec<String> = predictions.iter().map(usize::to_string).collect();
            eprintln!("dumped_queries: {}", predictions.len());
            eprintln!("fused_predictions: {}", pretty.join(","));
            Ok(())
        }
        Command::Time {
            input,
            deep,
            model,
            fusion,
            reps,
            out,
        } => {
            let (train, test) = load_paired(&input, &deep, &mut prov)?;
            let record = time_pipeline(&train, &test, &model.fused(&fusion), reps)?;
            let mut text: String = prov
                .entries
                .iter()
                .map(|(k, v)| format!("config.{k}: {v}\n"))
                .collect();
            text.push_str(&record.render());
            output(out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
