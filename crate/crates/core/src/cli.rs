//! Command-line front end. Every command writes its report to the given
//! writer and maps failures onto a fixed exit-code vocabulary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::checks::{gradcheck_suite, propcheck_suite, CheckOutcome};
use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harness::curves::write_curves_csv;
use crate::harness::{evaluate, export_curves, write_history_csv, Experiment, Metrics, ProbeGrid, SynthGenerator};
use crate::prior::cache_prior_features;

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_STALE_CACHE: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "tdt", version, about = "Triangular distribution transform regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the configured synthetic task and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print metrics as key=value lines.
    Eval(EvalArgs),
    /// Recompute the cached prior features of a checkpoint in place.
    Recache(RecacheArgs),
    /// Finite-difference check of every differentiable op and the composed loss.
    Gradcheck(GradcheckArgs),
    /// Run the numeric property suite.
    Propcheck(SeedArgs),
    /// Write discrepancy and symmetric-center curves for a checkpoint.
    ExportCurves(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-epoch metrics stream; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// CSV with a header row, input columns then label columns.
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Fresh synthetic samples, e.g. `n=500,seed=3`. Without `--data` or
    /// `--synth` the configured test split is used.
    #[arg(long)]
    pub synth: Option<String>,
}

#[derive(Debug, Args)]
pub struct RecacheArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Miscalibrates the backward pass of the named case.
    #[arg(long, hide = true)]
    pub negative_control: Option<String>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Checkpoint(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGED,
        Error::StalePriorCache { .. } => EXIT_STALE_CACHE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Runs one command. `Ok(false)` means a check failed.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Train(a) => train(&a, out).map(|_| true),
        Command::Eval(a) => eval(&a, out).map(|_| true),
        Command::Recache(a) => recache(&a.ckpt, out).map(|_| true),
        Command::Gradcheck(a) => report(gradcheck_suite(a.seed, a.negative_control.as_deref())?, out),
        Command::Propcheck(a) => report(propcheck_suite(a.seed)?, out),
        Command::ExportCurves(a) => curves(&a, out).map(|_| true),
    }
}

pub fn write_metrics(out: &mut dyn Write, n: usize, m: &Metrics) -> Result<()> {
    writeln!(out, "n={n}")?;
    writeln!(out, "mae={}", m.mae)?;
    writeln!(out, "mse={}", m.mse)?;
    for (k, v) in &m.ca {
        writeln!(out, "ca{k}={v}")?;
    }
    if let Some(p) = m.pair_pearson {
        writeln!(out, "pair_pearson={p}")?;
    }
    if let Some(a) = &m.angular {
        writeln!(out, "angular_mean={}", a.mean)?;
        writeln!(out, "angular_median={}", a.median)?;
        writeln!(out, "angular_trimean={}", a.trimean)?;
        writeln!(out, "angular_best25={}", a.best25)?;
        writeln!(out, "angular_worst25={}", a.worst25)?;
        writeln!(out, "angular_pct95={}", a.pct95)?;
    }
    Ok(())
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = Config::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.train.seed = seed;
    }
    let exp = Experiment::new(&config)?;
    let outcome = exp.train(Some(&exp.test_set))?;
    let priors = cache_prior_features(&outcome.model, &exp.priors)?;
    Checkpoint {
        config,
        model: outcome.model,
        priors,
    }
    .save(&a.out)?;

    let metrics_path = a.metrics.clone().unwrap_or_else(|| sibling(&a.out, "metrics.csv"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    write_history_csv(&mut f, &outcome.history)?;
    f.flush()?;

    writeln!(out, "checkpoint={}", a.out.display())?;
    writeln!(out, "metrics_stream={}", metrics_path.display())?;
    if let Some(m) = outcome.history.last().and_then(|r| r.metrics.as_ref()) {
        write_metrics(out, exp.test_set.len(), m)?;
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let data = match (&a.data, &a.synth) {
        (Some(path), _) => read_csv(path, ck.model.spec.input_dim, ck.model.spec.label_dim)?,
        (None, Some(spec)) => {
            let (n, seed) = parse_synth(spec)?;
            SynthGenerator::new(ck.config.task.clone())?.generate(n, seed)?
        }
        (None, None) => Experiment::new(&ck.config)?.test_set,
    };
    let m = evaluate(&ck.model, &ck.priors, &data)?;
    write_metrics(out, data.len(), &m)
}

fn parse_synth(spec: &str) -> Result<(usize, u64)> {
    let bad = |msg: String| Error::config("--synth", msg);
    let (mut n, mut seed) = (None, None);
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
        match k.trim() {
            "n" => n = Some(v.trim().parse().map_err(|e| bad(format!("n: {e}")))?),
            "seed" => seed = Some(v.trim().parse().map_err(|e| bad(format!("seed: {e}")))?),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let n: usize = n.ok_or_else(|| bad("missing n".into()))?;
    if n == 0 {
        return Err(bad("n must be at least 1".into()));
    }
    Ok((n, seed.unwrap_or(0)))
}

pub fn read_csv(path: &Path, input_dim: usize, label_dim: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != input_dim + label_dim {
            return Err(Error::InvalidArgument(format!(
                "row {}: {} columns, expected {}",
                row + 1,
                rec.len(),
                input_dim + label_dim
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("row {} column {}: {e}", row + 1, j + 1)))?;
            if j < input_dim {
                inputs.push(v);
            } else {
                labels.push(v);
            }
        }
    }
    Dataset::new(input_dim, label_dim, inputs, labels)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

fn recache(path: &Path, out: &mut dyn Write) -> Result<()> {
    let mut ck = Checkpoint::load(path)?;
    ck.priors = cache_prior_features(&ck.model, &ck.priors)?;
    ck.save(path)?;
    writeln!(out, "recached={}", path.display())?;
    Ok(())
}

/// Gap sweep around the label midpoint plus symmetric pairs around three
/// midpoints spread over the range.
pub fn default_probe_grid(config: &Config) -> ProbeGrid {
    let [lo, hi] = config.task.label_range;
    let span = hi - lo;
    let mid = lo + span / 2.0;
    ProbeGrid::gap_sweep(mid, lo, hi, 70).concat(ProbeGrid::symmetric(
        &[lo + span / 4.0, mid, hi - span / 4.0],
        span / 5.0,
        100,
    ))
}

fn curves(a: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let generator = SynthGenerator::new(ck.config.task.clone())?;
    let grid = default_probe_grid(&ck.config);
    let rows = export_curves(&ck.model, &ck.priors, &generator, &grid)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    write_curves_csv(&mut f, &rows)?;
    f.flush()?;
    writeln!(out, "rows={}", rows.len())?;
    writeln!(out, "curves={}", a.out.display())?;
    Ok(())
}

fn report(outcomes: Vec<CheckOutcome>, out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    for o in &outcomes {
        writeln!(out, "{o}")?;
        ok &= o.passed;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    writeln!(out, "checks={} failed={failed}", outcomes.len())?;
    Ok(ok)
}
