//! The `sparsense` command line: one subcommand per pipeline stage, with
//! file-based hand-off between them, plus `bench` for whole sweeps.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sparsense_core::bench::{relative_error, split_for_trial, trial_seed};
use sparsense_core::linalg::Matrix;
use sparsense_core::lowrank::{fit_coefficients, pod_basis, reconstruct};
use sparsense_core::placement::{qr_pivots, random_sensors, sample, sample_columns};
use sparsense_core::sdn::{init_model, train, Architecture, TrainConfig};
use sparsense_core::snapshots::{gen_synthetic, Generator, SnapshotMatrix, SplitSpec, SplitStrategy};

use crate::artifacts::{load_basis, load_checkpoint, load_sensors, save_basis, save_checkpoint, save_history, save_sensors, Checkpoint};
use crate::config::RunConfig;
use crate::ensemble::{run_ensemble, write_ensemble, TrialJob, TrialReport};
use crate::error::{Error, Result};
use crate::formats::{load_dataset, read_bytes, save_dataset, write_json, write_pgm, Layout, MatrixFormat};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPARSENSE_OUT";

#[derive(Debug, Parser)]
#[command(name = "sparsense", version, about = "Sparse sensor placement and full-state reconstruction")]
pub struct Cli {
    /// Suppress progress and informational output.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Directory for artifacts written without an explicit path.
    #[arg(long, global = true, env = OUT_ENV, default_value = "sparsense-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic snapshot matrix, optionally split into train/test.
    Generate(GenerateArgs),
    /// Compute a POD basis from (training) snapshots.
    Basis(BasisArgs),
    /// Choose sensor locations from a basis (QR pivots) or at random.
    Place(PlaceArgs),
    /// Train a shallow decoder from sensor readings to full states.
    Train(TrainArgs),
    /// Reconstruct full states from sensors with a decoder or a basis.
    Reconstruct(ReconstructArgs),
    /// Run a seeded benchmark sweep described by a config file.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    #[value(name = "raw-f64")]
    RawF64,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::RawF64 => MatrixFormat::RawF64,
        }
    }
}

fn format_of(arg: Option<FormatArg>, path: &Path) -> MatrixFormat {
    arg.map_or_else(|| MatrixFormat::from_path(path), Into::into)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator description (TOML or JSON): a `[generator]` table and an
    /// optional `seed`.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "raw-f64")]
    pub format: FormatArg,
    /// Output path (default: `<out-dir>/data.f64` or `.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `<stem>-train` and `<stem>-test` with this many training columns.
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    pub split_strategy: StrategyArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    Leading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub generator: Generator,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Training snapshots.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Number of POD modes to keep.
    #[arg(long)]
    pub rank: usize,
    /// Output path (default: `<out-dir>/basis.pod`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Qr,
    Random,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    /// Basis from `sparsense basis` (required for `--method qr`).
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Number of sensors.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "qr")]
    pub method: MethodArg,
    /// Seed for `--method random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// State dimension for `--method random` without a basis.
    #[arg(long)]
    pub m: Option<usize>,
    /// Output path (default: `<out-dir>/sensors.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a PGM placement map over the first mode.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training snapshots (full states).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub sensors: PathBuf,
    /// Training settings (TOML or JSON `TrainConfig`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "35,40")]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Checkpoint manifest path (default: `<out-dir>/model.json`); the
    /// parameters go next to it with a `.bin` extension and the training
    /// history to `<stem>-history.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Snapshots to reconstruct; also the truth for the reported error.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Decoder checkpoint manifest.
    #[arg(long, conflicts_with = "basis", required_unless_present = "basis")]
    pub model: Option<PathBuf>,
    /// Basis for linear (gappy POD) reconstruction.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Sensor set (default for decoders: the one stored in the checkpoint).
    #[arg(long, required_unless_present = "model")]
    pub sensors: Option<PathBuf>,
    /// Output path (default: `<out-dir>/reconstruction.f64`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a PGM of the first reconstructed snapshot.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sweep description (TOML or JSON `RunConfig`).
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads (default: config value, else one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (default: config `output_dir`, else `--out-dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct Ui {
    pub quiet: bool,
}

impl Ui {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            report_error("usage", None, first);
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), e.stage(), &e.to_string());
            1
        }
    }
}

/// One JSON object on one line of standard error.
fn report_error(kind: &str, stage: Option<&str>, message: &str) {
    let line = serde_json::json!({ "error": kind, "stage": stage, "message": message });
    let _ = writeln!(std::io::stderr(), "{line}");
}

pub fn run(cli: &Cli) -> Result<()> {
    let ui = Ui { quiet: cli.quiet };
    let out_dir = &cli.out_dir;
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, out_dir, &ui),
        Command::Basis(a) => cmd_basis(a, out_dir, &ui),
        Command::Place(a) => cmd_place(a, out_dir, &ui),
        Command::Train(a) => cmd_train(a, out_dir, &ui),
        Command::Reconstruct(a) => cmd_reconstruct(a, out_dir, &ui),
        Command::Bench(a) => cmd_bench(a, out_dir, &ui),
    }
}

fn parse_config_text<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

pub fn cmd_generate(a: &GenerateArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let cfg: GenerateConfig = parse_config_text(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let data = gen_synthetic(&cfg.generator, seed)?;
    let format: MatrixFormat = a.format.into();
    let default_name = match format {
        MatrixFormat::Csv => "data.csv",
        MatrixFormat::RawF64 => "data.f64",
    };
    let out = a.out.clone().unwrap_or_else(|| out_dir.join(default_name));
    save_dataset(&data, &out, format)?;
    ui.info(format!("wrote {} ({} x {})", out.display(), data.dim(), data.len()));
    if let Some(train_count) = a.train_count {
        let strategy = match a.split_strategy {
            StrategyArg::Random => SplitStrategy::Random,
            StrategyArg::Leading => SplitStrategy::Leading,
        };
        let (train, test) = data.split(&SplitSpec {
            train_count,
            seed: a.split_seed,
            strategy,
        })?;
        for (part, suffix) in [(&train, "-train"), (&test, "-test")] {
            let p = with_suffix(&out, suffix);
            save_dataset(part, &p, format)?;
            ui.info(format!("wrote {} ({} columns)", p.display(), part.len()));
        }
    }
    Ok(())
}

pub fn cmd_basis(a: &BasisArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let data = load_dataset(&a.data, format_of(a.format, &a.data))?;
    let (centered, mean) = data.mean_center();
    let basis = pod_basis(&centered, a.rank, &mean).map_err(|e| e.in_stage("basis"))?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("basis.pod"));
    save_basis(&out, &basis, &Layout::of(&data))?;
    ui.info(format!("wrote {} (m = {}, r = {})", out.display(), basis.dim(), basis.rank()));
    Ok(())
}

pub fn cmd_place(a: &PlaceArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let basis = a.basis.as_deref().map(load_basis).transpose()?;
    let layout = basis.as_ref().map(|(_, l)| l.clone()).unwrap_or_default();
    let sensors = match a.method {
        MethodArg::Qr => {
            let (b, _) = basis
                .as_ref()
                .ok_or_else(|| Error::Config("--method qr needs --basis".into()))?;
            let b = if b.rank() > a.n { b.truncate(a.n)? } else { b.clone() };
            qr_pivots(&b, a.n).map_err(|e| e.in_stage("placement"))?
        }
        MethodArg::Random => {
            let m = match (&basis, a.m) {
                (Some((b, _)), _) => b.dim(),
                (None, Some(m)) => m,
                (None, None) => return Err(Error::Config("--method random needs --basis or --m".into())),
            };
            random_sensors(m, a.n, a.seed, &[]).map_err(|e| e.in_stage("placement"))?
        }
    };
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("sensors.json"));
    save_sensors(&out, &sensors, &layout)?;
    for (rank, &k) in sensors.indices().iter().enumerate() {
        match layout.coordinates(k) {
            Some((r, c)) => ui.info(format!("sensor {rank}: index {k} (row {r}, col {c})")),
            None => ui.info(format!("sensor {rank}: index {k}")),
        }
    }
    if let Some(map) = &a.map {
        let (b, _) = basis
            .as_ref()
            .ok_or_else(|| Error::Config("--map needs --basis for the background field".into()))?;
        write_pgm(map, &layout, b.modes().col(0), sensors.indices())?;
    }
    ui.info(format!("wrote {}", out.display()));
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let data = load_dataset(&a.data, format_of(a.format, &a.data))?;
    let sensors = load_sensors(&a.sensors)?;
    if sensors.m() != data.dim() {
        return Err(Error::Config(format!(
            "sensor set indexes a state of dimension {} but the data has {}",
            sensors.m(),
            data.dim()
        )));
    }
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => parse_config_text(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.max_epochs {
        cfg.max_epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    let (centered, mean) = data.mean_center();
    let arch = Architecture::decoder(sensors.len(), &a.hidden, data.dim());
    let model = init_model(&arch, cfg.init, sparsense_core::rng::derive_seed(cfg.seed, "init")).map_err(|e| e.in_stage("init"))?;
    let s = sample_columns(centered.values(), &sensors)?;
    let (model, history) = train(&model, &s, centered.values(), &cfg).map_err(|e| e.in_stage("train"))?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("model.json"));
    save_checkpoint(
        &out,
        &Checkpoint {
            model,
            train_mean: mean,
            sensors: Some(sensors.clone()),
            config_fingerprint: cfg.fingerprint(),
        },
    )?;
    let hist_path = out.with_file_name(format!(
        "{}-history.csv",
        out.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
    ));
    save_history(&hist_path, &history)?;
    ui.info(format!(
        "trained {} epochs (best {} with val loss {:e}); wrote {}",
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss,
        out.display()
    ));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReconstructionReport {
    method: &'static str,
    relative_error: f64,
    per_sample_errors: Vec<f64>,
}

pub fn cmd_reconstruct(a: &ReconstructArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let data = load_dataset(&a.data, format_of(a.format, &a.data))?;
    let sensors = a.sensors.as_deref().map(load_sensors).transpose()?;
    let (x_hat, mean, method) = if let Some(model_path) = &a.model {
        let ckpt = load_checkpoint(model_path)?;
        let sensors = match (sensors, &ckpt.sensors) {
            (Some(s), _) => s,
            (None, Some(s)) => s.clone(),
            (None, None) => return Err(Error::Config("checkpoint stores no sensors; pass --sensors".into())),
        };
        let width = ckpt.model.input_width();
        if sensors.len() != width {
            return Err(Error::Config(format!(
                "sensor set has {} indices but the model takes {width} inputs",
                sensors.len()
            )));
        }
        check_state_dim(data.dim(), ckpt.model.output_width(), "model output")?;
        let centered = data.center_with(&ckpt.train_mean)?;
        let s = sample_columns(centered.values(), &sensors)?;
        let mut y = ckpt.model.forward(&s).map_err(|e| e.in_stage("evaluate"))?;
        add_mean(&mut y, &ckpt.train_mean);
        (y, ckpt.train_mean, "sdn")
    } else {
        let basis_path = a.basis.as_deref().expect("clap requires --model or --basis");
        let sensors = sensors.expect("clap requires --sensors with --basis");
        let (basis, _) = load_basis(basis_path)?;
        check_state_dim(data.dim(), basis.dim(), "basis dimension")?;
        if sensors.len() != basis.rank() {
            return Err(Error::Config(format!(
                "sensor set has {} indices but the basis has {} modes",
                sensors.len(),
                basis.rank()
            )));
        }
        let mean = basis.train_mean().to_vec();
        let mut y = Matrix::zeros(data.dim(), data.len());
        for j in 0..data.len() {
            let centered: Vec<f64> = data.column(j).iter().zip(&mean).map(|(x, m)| x - m).collect();
            let fit = fit_coefficients(&basis, &sensors, &sample(&centered, &sensors)?).map_err(|e| e.in_stage("fit"))?;
            if fit.ill_conditioned {
                ui.progress(format!("warning: column {j}: sensed block condition {:e}", fit.condition));
            }
            y.col_mut(j).copy_from_slice(&reconstruct(&basis, &fit.coefficients, true)?);
        }
        (y, mean, "gappy_pod")
    };
    let (re, per_sample) = relative_error(&x_hat, data.values(), &mean).map_err(|e| e.in_stage("evaluate"))?;
    let recon = data.with_values(x_hat)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("reconstruction.f64"));
    save_dataset(&recon, &out, MatrixFormat::from_path(&out))?;
    let report_path = with_suffix(&out, "-report").with_extension("json");
    write_json(
        &report_path,
        &ReconstructionReport {
            method,
            relative_error: re,
            per_sample_errors: per_sample,
        },
    )?;
    if let Some(map) = &a.map {
        write_pgm(map, &Layout::of(&recon), recon.column(0), &[])?;
    }
    ui.info(format!("relative error {re:e}; wrote {}", out.display()));
    Ok(())
}

fn check_state_dim(data: usize, artifact: usize, what: &str) -> Result<()> {
    if data != artifact {
        return Err(Error::Config(format!("data has state dimension {data} but the {what} is {artifact}")));
    }
    Ok(())
}

fn add_mean(y: &mut Matrix, mean: &[f64]) {
    for j in 0..y.cols() {
        for (v, m) in y.col_mut(j).iter_mut().zip(mean) {
            *v += m;
        }
    }
}

pub fn cmd_bench(a: &BenchArgs, out_dir: &Path, ui: &Ui) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| out_dir.to_path_buf());
    let workers = a.workers.or(cfg.workers).unwrap_or(0);
    let data = cfg.load_data().map_err(|e| match e {
        Error::Core(c) => Error::Core(c.in_stage("dataset")),
        other => other,
    })?;
    let jobs = cfg.jobs();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let quiet = ui.quiet;
    let progress = move |job: &TrialJob, r: &Result<TrialReport>| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if quiet {
            return;
        }
        let status = match r {
            Ok(rep) => format!("re {:.4e}", rep.relative_error),
            Err(e) => format!("failed: {e}"),
        };
        eprintln!(
            "[{k}/{total}] {} n={} trial {}: {status}",
            job.spec.kind.as_str(),
            job.spec.n_sensors,
            job.trial
        );
    };
    let result = run_ensemble(&data, &jobs, cfg.split_plan(), workers, Some(&progress))?;
    write_ensemble(&out, &result)?;
    write_json(&out.join("config.json"), &cfg)?;
    if cfg.maps && data.grid_shape().is_some() {
        write_maps(&out.join("maps"), &cfg, &data, &result.reports)?;
    }
    for row in &result.summaries {
        let s = &row.summary;
        ui.info(format!(
            "{:>6} n={:<3} mean {:.4e}  std {:.2e}  stderr {:.2e}  ({} ok, {} failed)",
            row.pipeline.as_str(),
            row.n_sensors,
            s.mean,
            s.std,
            s.std_err,
            s.count,
            s.failures
        ));
    }
    ui.info(format!("wrote {}", out.display()));
    Ok(())
}

/// Placement and reconstruction maps of trial 0, plus its first clean
/// test snapshot.
fn write_maps(dir: &Path, cfg: &RunConfig, data: &SnapshotMatrix, reports: &[TrialReport]) -> Result<()> {
    let (_, test) = split_for_trial(data, cfg.split.train_count, cfg.split.strategy, trial_seed(cfg.seed, 0))?;
    let layout = Layout::of(data);
    let truth = test.column(0);
    write_pgm(&dir.join("truth.pgm"), &layout, truth, &[])?;
    for r in reports.iter().filter(|r| r.trial == 0) {
        let stem = format!("{}-n{}", r.pipeline.as_str(), r.n_sensors);
        write_pgm(&dir.join(format!("{stem}-sensors.pgm")), &layout, truth, &r.sensor_set.indices)?;
        write_pgm(&dir.join(format!("{stem}-recon.pgm")), &layout, &r.example_reconstruction, &[])?;
    }
    Ok(())
}
