use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use setrbm::baselines::KernelKind;
use setrbm::registry::{HyperGrid, KernelGrid};
use setrbm::{Family, ModelSpec, Objective, TrainConfig};

use crate::CliError;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "setrbm",
    version,
    about = "Classification RBMs over sets of vectors: training, evaluation and checks",
    args_override_self = true
)]
pub struct Cli {
    /// key=value file of flag defaults (keys are long flag names); flags
    /// given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Train one model on a dataset and write it as JSON.
    Train(TrainCmd),
    /// Apply a saved model to a dataset.
    Predict(PredictCmd),
    /// Stratified repeated k-fold cross-validation.
    Cv(CvCmd),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckCmd),
    /// Compare set posteriors with explicit enumeration of hidden states.
    OracleCheck(OracleCmd),
    /// Compute a set-kernel gram matrix, or inspect a cached one.
    KernelGram(GramCmd),
    /// Summarize cross-validation reports, with paired t-tests.
    Report(ReportCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveArg {
    Disc,
    Gen,
    Hybrid,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Disc => Objective::Discriminative,
            ObjectiveArg::Gen => Objective::Generative,
            ObjectiveArg::Hybrid => Objective::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelScale {
    /// gamma in units of 1 / mean squared instance distance, sigma0 in
    /// units of the mean instance distance (measured on the fit split).
    Relative,
    Absolute,
}

fn parse_model(s: &str) -> Result<ModelSpec, String> {
    s.parse().map_err(|e: setrbm::Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct TrainingArgs {
    /// Training objective.
    #[arg(long, value_enum, default_value = "disc")]
    pub objective: ObjectiveArg,
    /// Discriminative learning rate (used when --grid off).
    #[arg(long, default_value_t = 0.01)]
    pub disc_rate: f64,
    /// Generative (CD-1) learning rate (used when --grid off).
    #[arg(long, default_value_t = 0.01)]
    pub gen_rate: f64,
    /// Hidden units (RBMs and the max-output MLP).
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Share of the training bags held out for model selection.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Initial weights are uniform in +-scale/sqrt(D).
    #[arg(long, default_value_t = 1.0)]
    pub init_scale: f64,
    /// Search learning rates over --rates (on) or use the given rates (off).
    #[arg(long, value_enum, default_value = "on")]
    pub grid: Switch,
    /// Learning-rate grid, applied to every active rate.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    pub rates: Vec<f64>,
    /// SVM kernel widths.
    #[arg(long, value_delimiter = ',', default_value = "0.25,1,4")]
    pub gammas: Vec<f64>,
    /// SVM soft-margin constants.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pub svm_c: Vec<f64>,
    /// Fixed miGraph thresholds (svm-migraph2).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
    pub sigma0s: Vec<f64>,
    /// Units of --gammas and --sigma0s.
    #[arg(long, value_enum, default_value = "relative")]
    pub kernel_scale: KernelScale,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for folds and grid points.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl TrainingArgs {
    pub fn base_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.objective.into(),
            disc_rate: self.disc_rate,
            gen_rate: self.gen_rate,
            hidden_units: self.hidden,
            max_epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.val_fraction,
            seed: self.seed,
            init_scale: self.init_scale,
        }
    }

    pub fn hyper_grid(&self) -> Result<HyperGrid, CliError> {
        let base = self.base_config();
        let train = match self.grid {
            Switch::On => {
                if self.rates.is_empty() {
                    return Err(CliError::Usage("--rates is empty".into()));
                }
                base.rate_grid(&self.rates)
            }
            Switch::Off => vec![base],
        };
        for config in &train {
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        let kernel = KernelGrid {
            gammas: self.gammas.clone(),
            c_values: self.svm_c.clone(),
            sigma0s: self.sigma0s.clone(),
            relative: self.kernel_scale == KernelScale::Relative,
        };
        for v in kernel.gammas.iter().chain(&kernel.c_values).chain(&kernel.sigma0s) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(CliError::Usage(format!("kernel grid values must be > 0, got {v}")));
            }
        }
        Ok(HyperGrid { train, kernel })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainCmd {
    /// Model name.
    #[arg(long, value_parser = parse_model)]
    #[serde(serialize_with = "display")]
    pub model: ModelSpec,
    /// Dataset in MIL sparse format.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictCmd {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model_file: PathBuf,
    /// Dataset in MIL sparse format.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-bag predictions CSV [default: none].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CvCmd {
    /// Model name.
    #[arg(long, value_parser = parse_model)]
    #[serde(serialize_with = "display")]
    pub model: ModelSpec,
    /// Dataset in MIL sparse format.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Number of repeats with independent fold assignments.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Fold accuracy CSV (model,dataset,repeat,fold,accuracy).
    #[arg(long)]
    pub out: PathBuf,
    /// Full JSON report [default: none].
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Rejection curve CSV (threshold,precision,recall) [default: none].
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Directory for cached gram matrices [default: none].
    #[arg(long)]
    pub gram_cache: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckCmd {
    /// classrbm, classrbm-poolin, or a set-* model.
    #[arg(long)]
    pub model: String,
    /// Random problems to check.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Xor,
    Or,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Xor => Family::Xor,
            FamilyArg::Or => Family::Or,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct OracleCmd {
    /// Hidden-constraint family.
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Random problems to check.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: setrbm::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Min-max scale features over the whole dataset first.
    Minmax,
    None,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["out", "load"]))]
pub struct GramCmd {
    /// Dataset in MIL sparse format (required with --out).
    #[arg(long, required_unless_present = "load")]
    pub data: Option<PathBuf>,
    /// Kernel: migraph, migraph2 or max.
    #[arg(long, value_parser = parse_kernel, default_value = "migraph")]
    #[serde(serialize_with = "display")]
    pub kernel: KernelKind,
    /// Gaussian width (absolute).
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Fixed miGraph threshold, required for migraph2 [default: none].
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Feature scaling before the kernel.
    #[arg(long, value_enum, default_value = "minmax")]
    pub scaling: Scaling,
    /// Write the gram cache file here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read and summarize an existing gram cache file.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportCmd {
    /// JSON reports written by `cv --json`.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Model name to test the others against [default: none].
    #[arg(long)]
    pub reference: Option<String>,
    /// Confidence level of the two-sided paired t-test.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Summary CSV (model,dataset,accuracy,reference,t,significant) [default: none].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Splices `--config FILE` entries in right after the subcommand, so any
/// flag repeated on the command line overrides the file.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    let mut iter = argv.iter().enumerate().skip(1);
    while let Some((_, arg)) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = iter.next().map(|(_, v)| PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(v));
        } else if s == "--" {
            break;
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(CliError::Usage(format!("{}:{}: nested config files are not supported", path.display(), n + 1)));
        }
        injected.push(OsString::from(format!("--{key}={}", value.trim())));
    }
    // The subcommand is the first argument that is not an option or the
    // value of --config.
    let mut at = None;
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            at = Some(i + 1);
            break;
        }
        i += 1;
    }
    let Some(at) = at else { return Ok(argv) };
    let mut out = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}
