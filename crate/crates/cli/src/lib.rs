//! Command implementations behind the `neugap` binary.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data or schema
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use neugap::config::RunConfig;
use neugap::data::{format_number, load_table, make_task, split_train_valid, synth_spatiotemporal, TableSchema};
use neugap::eval::{load_source, mse, run_benchmark_with, test_loglik, BenchmarkConfig};
use neugap::pipeline::{train_model, ModelFile, TrainedModel};
use neugap::predictive::{PredictTarget, PredictiveDist};
use neugap::Error;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "NEUGAP_SEED";

#[derive(Debug, Parser)]
#[command(name = "neugap", version, about = "Sparse GP regression with neural-network mean functions")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model on a table and write a model file.
    Train {
        /// Run configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input table; overrides the configured data source.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Column to predict from all other columns.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write predictive means, variances and 95% intervals for a table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against true values.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Truth column; may be omitted when the file has a single column.
        #[arg(long)]
        column: Option<String>,
    },
    /// Compare methods across task variables and write a report.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.json and report.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic spatio-temporal table and its ground truth.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

type CmdResult = Result<(), Failure>;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. }
        | Error::Csv(_)
        | Error::Json(_)
        | Error::MissingColumn(_)
        | Error::EmptyTable
        | Error::DegenerateSplit(_)
        | Error::SchemaMismatch(_)
        | Error::DimensionMismatch { .. } => EXIT_DATA,
        Error::NonSquare { .. }
        | Error::NonSymmetric(_)
        | Error::NotPositiveDefinite { .. }
        | Error::ZeroVariantHasNoParams
        | Error::NonFiniteGradient
        | Error::TooFewSamples(_) => EXIT_NUMERIC,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

fn data_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    data_failure(format!("{}: {e}", path.display()))
}

/// Seed precedence: command-line flag, then environment, then config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV} must be a non-negative integer, got `{v}`")),
        None => Ok(config),
    }
}

fn seed_or_fail(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64, Failure> {
    resolve_seed(flag, env, config).map_err(|message| Failure {
        code: EXIT_CONFIG,
        message,
    })
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// code; diagnostics go to `err`.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            data,
            target,
            out: model_path,
            seed,
        } => cmd_train(config.as_deref(), data.as_deref(), &target, &model_path, seed, env_seed, out, err),
        Command::Predict { model, data, out: path } => cmd_predict(&model, &data, &path),
        Command::Evaluate { preds, truth, column } => cmd_evaluate(&preds, &truth, column.as_deref(), out, err),
        Command::Benchmark { config, out: dir, seed } => cmd_benchmark(&config, &dir, seed, env_seed, out, err),
        Command::Synth { config, out: path, seed } => cmd_synth(&config, &path, seed, env_seed, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(config_failure),
        None => Ok(RunConfig::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: Option<&Path>,
    data: Option<&Path>,
    target: &str,
    model_path: &Path,
    seed: Option<u64>,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let mut cfg = load_run_config(config)?;
    cfg.data.seed = seed_or_fail(seed, env_seed, cfg.data.seed)?;
    cfg.data.target = Some(target.to_string());
    if let Some(path) = data {
        cfg.data.path = Some(path.to_string_lossy().into_owned());
        cfg.data.synthetic = None;
    }
    let table = load_source(&cfg.data)?;
    if table.dropped_rows > 0 {
        let _ = writeln!(err, "warning: dropped {} malformed rows", table.dropped_rows);
    }
    let task = make_task(&table, target)?;
    let (train_rows, valid_rows) = split_train_valid(task.data.len(), cfg.data.valid_fraction, cfg.data.seed)?;
    let train = task.data.select(&train_rows);
    let valid = task.data.select(&valid_rows);

    let (model, standardizer, trace) = train_model(&train, &valid, &cfg.model, &cfg.training, cfg.data.seed)?;
    let mut warnings = trace.warnings.clone();
    if let Some(pre) = &trace.pretrain {
        warnings.extend(pre.warnings.iter().cloned());
    }
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let _ = writeln!(out, "epoch,elbo_estimate,valid_loglik");
    for rec in &trace.epochs {
        let _ = writeln!(out, "{},{},{}", rec.epoch, rec.objective, rec.valid_loglik);
    }

    let trained = TrainedModel {
        kind: cfg.model.kind,
        model,
        standardizer,
        input_names: task.input_names,
        target_name: task.target_name,
    };
    let file = ModelFile::from_trained(&trained, &cfg).map_err(|e| Failure {
        code: EXIT_NUMERIC,
        message: format!("trained parameters are not finite ({e})"),
    })?;
    file.save(model_path)?;
    Ok(())
}

/// Predictions as CSV with header `mean,var,lo95,hi95`.
pub fn write_predictions(path: &Path, pred: &PredictiveDist<f64>) -> neugap::Result<()> {
    let (lo, hi) = pred.interval95();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mean", "var", "lo95", "hi95"])?;
    for i in 0..pred.len() {
        w.write_record([
            format_number(pred.mean[i]),
            format_number(pred.var[i]),
            format_number(lo[i]),
            format_number(hi[i]),
        ])?;
    }
    w.flush().map_err(|e| neugap::Error::Csv(e.into()))?;
    Ok(())
}

fn cmd_predict(model_path: &Path, data: &Path, out_path: &Path) -> CmdResult {
    let model = ModelFile::load(model_path)?.to_trained()?;
    let table = load_table(data, &TableSchema::default())?;
    let mut cols = Vec::with_capacity(model.input_names.len());
    for name in &model.input_names {
        let c = table
            .column_index(name)
            .map_err(|_| Error::SchemaMismatch(format!("input column `{name}` is missing")))?;
        cols.push(c);
    }
    let x = table.rows.select_columns(&cols);
    let pred = model.predict(&x)?;
    write_predictions(out_path, &pred)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalDoc {
    test_loglik: f64,
    mse: f64,
    n: usize,
}

fn cmd_evaluate(preds: &Path, truth: &Path, column: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let p = load_table(preds, &TableSchema::default())?;
    let t = load_table(truth, &TableSchema::default())?;
    for (name, table) in [("predictions", &p), ("truth", &t)] {
        if table.dropped_rows > 0 {
            return Err(data_failure(format!(
                "{name} file has {} malformed rows; rows cannot be aligned",
                table.dropped_rows
            )));
        }
    }
    let y = match column {
        Some(c) => t.column(c)?,
        None if t.column_names.len() == 1 => t.rows.column(0).into_owned(),
        None => {
            return Err(data_failure(format!(
                "truth file has {} columns; choose one with --column",
                t.column_names.len()
            )))
        }
    };
    if y.len() != p.len() {
        return Err(data_failure(format!(
            "{} predictions but {} truth rows",
            p.len(),
            y.len()
        )));
    }
    let pred = PredictiveDist {
        mean: p.column("mean")?,
        var: p.column("var")?,
        target: PredictTarget::YStar,
    };
    let ll = test_loglik(&pred, &y)?;
    if ll.capped {
        let _ = writeln!(err, "warning: log-likelihood capped at {}", ll.value);
    }
    let doc = EvalDoc {
        test_loglik: ll.value,
        mse: mse(&pred.mean, &y)?,
        n: y.len(),
    };
    let text = serde_json::to_string(&doc).map_err(Error::from)?;
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn cmd_benchmark(
    config: &Path,
    dir: &Path,
    seed: Option<u64>,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let mut cfg = BenchmarkConfig::load(config).map_err(config_failure)?;
    cfg.data.seed = seed_or_fail(seed, env_seed, cfg.data.seed)?;
    let report = run_benchmark_with(&cfg, |cell| {
        let status = match (&cell.metrics, &cell.error) {
            (Some(m), _) => format!("loglik {:.4} mse {:.4} ({:.2}s)", m.test_loglik, m.mse, m.train_seconds),
            (None, Some(e)) => format!("failed: {e}"),
            (None, None) => "failed".into(),
        };
        let _ = writeln!(err, "{} / {}: {status}", cell.variable, cell.method.name());
    })?;
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, json + "\n").map_err(|e| io_failure(&json_path, e))?;
    let table = report.render();
    let txt_path = dir.join("report.txt");
    std::fs::write(&txt_path, &table).map_err(|e| io_failure(&txt_path, e))?;
    let _ = write!(out, "{table}");
    if report.successes() == 0 {
        return Err(Failure {
            code: EXIT_NUMERIC,
            message: "every benchmark task failed".into(),
        });
    }
    Ok(())
}

/// Ground-truth sidecar path: `table.csv` -> `table.truth.csv`.
pub fn truth_path(table_path: &Path) -> PathBuf {
    let stem = table_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    table_path.with_file_name(format!("{stem}.truth.csv"))
}

fn cmd_synth(config: &Path, path: &Path, seed: Option<u64>, env_seed: Option<&str>, out: &mut dyn Write) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(config_failure)?;
    let seed = seed_or_fail(seed, env_seed, cfg.data.seed)?;
    let Some(spec) = &cfg.data.synthetic else {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "config has no data.synthetic section".into(),
        });
    };
    let synth = synth_spatiotemporal(spec, seed)?;
    synth.table.write_csv(path)?;

    let sidecar = truth_path(path);
    let mut w = csv::Writer::from_path(&sidecar).map_err(Error::from)?;
    let write = |w: &mut csv::Writer<std::fs::File>| -> Result<(), csv::Error> {
        w.write_record(["trend", "latent"])?;
        for (t, l) in synth.truth.trend.iter().zip(synth.truth.latent.iter()) {
            w.write_record([format_number(*t), format_number(*l)])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(Error::from)?;
    let _ = writeln!(
        out,
        "wrote {} rows to {} and ground truth to {}",
        synth.table.len(),
        path.display(),
        sidecar.display()
    );
    Ok(())
}
