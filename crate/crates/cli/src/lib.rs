//! The `setrbm` command line: argument parsing, config files, and the
//! mapping from failures to exit codes.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use clap::Parser;
use thiserror::Error;

use setrbm::baselines::{gram_matrix, read_gram, write_gram, GramHeader, KernelSpec};
use setrbm::checks::{gradient_check, oracle_check, CheckSummary};
use setrbm::data::{make_folds, read_mil_file, FeatureScaler};
use setrbm::evaluator::{compare_reports, emit_curve_csv, emit_report, parse_report_json, run_cv, CvOptions, EvalReport, ReportFormat};
use setrbm::persist::{predictor_from_json, predictor_to_json};
use setrbm::registry::{fit_model, FitOptions};
use setrbm::{ModelSpec, ModelVariant, Predictor, RngStream};

pub mod args;

pub use args::{Cli, Command};
use args::*;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] setrbm::Error),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    /// A self-check ran but exceeded its tolerance.
    #[error("check failed: max relative error {error:e} > {tolerance:e}")]
    CheckFailed { error: f64, tolerance: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::File { .. } => EXIT_DATA,
            CliError::CheckFailed { .. } => EXIT_NUMERIC,
            CliError::Core(e) => match e.root() {
                setrbm::Error::Diverged { .. } => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match args::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match serde_json::to_string(&cli) {
        Ok(json) => eprintln!("config: {json}"),
        Err(e) => eprintln!("config: <unprintable: {e}>"),
    }
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Train(c) => train(c),
        Command::Predict(c) => predict(c),
        Command::Cv(c) => cv(c),
        Command::Gradcheck(c) => gradcheck(c),
        Command::OracleCheck(c) => oracle(c),
        Command::KernelGram(c) => kernel_gram(c),
        Command::Report(c) => report(c),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::File { path: path.display().to_string(), source })
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::File { path: path.display().to_string(), source })
}

fn train(c: &TrainCmd) -> CliResult<()> {
    let grid = c.training.hyper_grid()?;
    let dataset = read_mil_file(&c.data)?;
    let scaler = FeatureScaler::fit(&dataset.bags)?;
    let scaled = scaler.apply(&dataset)?;
    let mut rng = RngStream::new(c.training.seed, 0);
    let options = FitOptions { jobs: c.training.jobs, gram_cache: None, cache_tag: dataset.name.clone() };
    let fitted = fit_model(&c.model, &scaled.bags, dataset.num_classes, &grid, &mut rng, &options)?;
    for w in fitted.model.warnings() {
        eprintln!("warning: {w}");
    }
    let predictor = Predictor { model: fitted.model, scaler: Some(scaler) };
    write_file(&c.out, &predictor_to_json(&predictor)?)?;
    match fitted.validation_accuracy {
        Some(acc) => println!("{} on {}: validation accuracy {acc:.4} ({})", c.model, dataset.name, fitted.selected),
        None => println!("{} on {}: trained", c.model, dataset.name),
    }
    Ok(())
}

fn predict(c: &PredictCmd) -> CliResult<()> {
    let predictor = predictor_from_json(&read_file(&c.model_file)?)?;
    let dataset = read_mil_file(&c.data)?;
    let posteriors = predictor.posteriors(&dataset.bags, 1)?;
    let classes = posteriors.first().map_or(0, Vec::len);
    let mut csv = String::from("bag_id,label,predicted,confidence");
    for k in 0..classes {
        csv.push_str(&format!(",p{k}"));
    }
    csv.push('\n');
    let mut correct = 0;
    for (bag, p) in dataset.bags.iter().zip(&posteriors) {
        let k = setrbm::numerics::raw::argmax(p);
        correct += usize::from(k == bag.label);
        csv.push_str(&format!("{},{},{k},{}", bag.id, bag.label, p[k]));
        for v in p {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    match &c.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!("accuracy {:.4} ({correct}/{})", correct as f64 / dataset.len() as f64, dataset.len());
    Ok(())
}

fn cv(c: &CvCmd) -> CliResult<()> {
    let grid = c.training.hyper_grid()?;
    if c.k < 2 || c.repeats == 0 {
        return Err(CliError::Usage("--k must be >= 2 and --repeats >= 1".into()));
    }
    let dataset = read_mil_file(&c.data)?;
    let plan = make_folds(&dataset, c.k, c.repeats, c.training.seed)?;
    if let Some(dir) = &c.gram_cache {
        fs::create_dir_all(dir).map_err(|source| CliError::File { path: dir.display().to_string(), source })?;
    }
    let options = CvOptions { jobs: c.training.jobs, gram_cache: c.gram_cache.clone() };
    let report = run_cv(&c.model, &dataset, &plan, &grid, c.training.seed, &options)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&c.out, &emit_report(&report, ReportFormat::Csv)?)?;
    if let Some(path) = &c.json {
        write_file(path, &emit_report(&report, ReportFormat::Json)?)?;
    }
    if let Some(path) = &c.curve {
        write_file(path, &emit_curve_csv(&report))?;
    }
    println!(
        "{} on {}: pooled accuracy {:.4} over {} folds",
        report.model,
        report.dataset,
        report.accuracy,
        report.folds.len()
    );
    Ok(())
}

fn check_outcome(name: &str, summary: CheckSummary, tolerance: f64) -> CliResult<()> {
    println!("{name}: {} trials, max relative error {:e}", summary.trials, summary.max_relative_error);
    if summary.max_relative_error <= tolerance {
        Ok(())
    } else {
        Err(CliError::CheckFailed { error: summary.max_relative_error, tolerance })
    }
}

fn gradcheck(c: &GradcheckCmd) -> CliResult<()> {
    let variant = match c.model.as_str() {
        "classrbm" | "classrbm-poolin" => ModelVariant::ClassRbm,
        other => match other.parse::<ModelSpec>() {
            Ok(ModelSpec::Set(v)) => ModelVariant::Set(v),
            _ => {
                return Err(CliError::Usage(format!(
                    "gradcheck supports classrbm, classrbm-poolin and set-* models, got {other:?}"
                )))
            }
        },
    };
    if c.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    check_outcome(&c.model, gradient_check(variant, c.trials, c.seed)?, c.tolerance)
}

fn oracle(c: &OracleCmd) -> CliResult<()> {
    if c.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let family = c.family.into();
    check_outcome(&format!("{family:?} soft posterior vs enumeration").to_lowercase(), oracle_check(family, c.trials, c.seed)?, c.tolerance)
}

fn kernel_gram(c: &GramCmd) -> CliResult<()> {
    if let Some(path) = &c.load {
        let file = fs::File::open(path).map_err(|source| CliError::File { path: path.display().to_string(), source })?;
        let (header, gram) = read_gram(BufReader::new(file))?;
        let n = gram.nrows();
        let asym = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (gram[[i, j]] - gram[[j, i]]).abs())
            .fold(0.0, f64::max);
        let sigma0 = header.sigma0.map_or("adaptive".to_string(), |s| s.to_string());
        println!(
            "kernel={} gamma={} sigma0={sigma0} dataset={} bags={n} max_asymmetry={asym:e} mean_diagonal={}",
            header.kernel,
            header.gamma,
            header.dataset,
            gram.diag().mean().unwrap_or(0.0)
        );
        return Ok(());
    }
    let spec = KernelSpec { kind: c.kernel, gamma: c.gamma, sigma0: c.sigma0, c_svm: 1.0 };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if c.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let data = c.data.as_ref().ok_or_else(|| CliError::Usage("--data is required with --out".into()))?;
    let mut dataset = read_mil_file(data)?;
    if c.scaling == Scaling::Minmax {
        dataset = FeatureScaler::fit(&dataset.bags)?.apply(&dataset)?;
    }
    let gram = gram_matrix(&dataset.bags, &spec, c.jobs)?;
    let header = GramHeader::new(&spec, dataset.name.clone(), dataset.len());
    let out = c.out.as_ref().expect("clap requires --out or --load");
    let mut buf = Vec::new();
    write_gram(&mut buf, &header, &gram)?;
    fs::File::create(out)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|source| CliError::File { path: out.display().to_string(), source })?;
    println!("wrote {}x{} gram matrix to {}", gram.nrows(), gram.ncols(), out.display());
    Ok(())
}

fn report(c: &ReportCmd) -> CliResult<()> {
    if !(c.level > 0.0 && c.level < 1.0) {
        return Err(CliError::Usage(format!("--level must be in (0, 1), got {}", c.level)));
    }
    let reports = c
        .inputs
        .iter()
        .map(|p| Ok(parse_report_json(&read_file(p)?)?))
        .collect::<CliResult<Vec<EvalReport>>>()?;
    let reference = match &c.reference {
        Some(name) => Some(
            reports
                .iter()
                .find(|r| &r.model == name)
                .ok_or_else(|| CliError::Usage(format!("reference model {name:?} is not among the inputs")))?,
        ),
        None => None,
    };
    let mut csv = String::from("model,dataset,accuracy,reference,t,significant\n");
    for r in &reports {
        let (ref_name, t, sig) = match reference {
            Some(base) if base.model != r.model || base.dataset != r.dataset => {
                let test = compare_reports(r, base, c.level)?;
                (base.model.clone(), test.t.to_string(), test.significant.to_string())
            }
            _ => (String::new(), String::new(), String::new()),
        };
        csv.push_str(&format!("{},{},{},{ref_name},{t},{sig}\n", r.model, r.dataset, r.accuracy));
        let mark = if sig == "true" { " *" } else { "" };
        println!("{:<16} {:<12} {:>7.2}%{}", r.model, r.dataset, 100.0 * r.accuracy, mark);
    }
    if let Some(path) = &c.out {
        write_file(path, &csv)?;
    }
    Ok(())
}
