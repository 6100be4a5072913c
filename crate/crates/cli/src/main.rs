use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use msdn_core::baselines::{LogisticConfig, DEFAULT_PCC_D_MAX};
use msdn_core::classifier::{MultiLabelClassifier, DEFAULT_THRESHOLD};
use msdn_core::data::{self, Dataset, Format, LabelSpec, Scaler};
use msdn_core::eval::{self, group_thousands};
use msdn_core::experiment::{run_benchmark, train_model, ExperimentConfig, Hyper};
use msdn_core::msdn::{param_breakdown, MsdnConfig};
use msdn_core::persist::{load_model, save_model, ModelKind, SavedModel};
use msdn_core::Matrix;

/// Multi-label classification experiments: MSDN and classical baselines.
#[derive(Parser, Debug)]
#[command(name = "msdn", version, about)]
struct Cli {
    /// Log level when RUST_LOG is unset (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model on a whole dataset and save it.
    Train(TrainArgs),
    /// Predict labels with a saved model.
    Predict(PredictArgs),
    /// Run a benchmark described by a TOML experiment file.
    Benchmark(BenchmarkArgs),
    /// Print the MSDN parameter count and its per-stage breakdown.
    Params(ParamsArgs),
    /// Write a synthetic parity-chain dataset in the canonical format.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InputFormat {
    /// `.arff` files are ARFF, everything else canonical.
    Auto,
    Canonical,
    Arff,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    format: InputFormat,

    /// ARFF: the last N attributes are labels.
    #[arg(long, value_name = "N")]
    labels: Option<usize>,

    /// ARFF: Mulan XML file naming the label attributes.
    #[arg(long, value_name = "XML")]
    sidecar: Option<PathBuf>,

    /// ARFF: take the label count from the `-C` option in the relation name.
    #[arg(long)]
    meka: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let arff = match self.format {
            InputFormat::Arff => true,
            InputFormat::Canonical => false,
            InputFormat::Auto => self
                .data
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("arff")),
        };
        let format = if arff {
            let spec = match (self.labels, &self.sidecar, self.meka) {
                (Some(n), None, false) => LabelSpec::Trailing(n),
                (None, Some(xml), false) => LabelSpec::Sidecar(xml.clone()),
                (None, None, true) => LabelSpec::Meka,
                _ => bail!("an ARFF dataset needs exactly one of --labels, --sidecar or --meka"),
            };
            Format::Arff(spec)
        } else {
            Format::Canonical
        };
        let loaded = data::load_dataset(&self.data, &format)?;
        info!(
            "loaded {}: {} rows, {} features, {} labels",
            loaded.dataset.name,
            loaded.dataset.len(),
            loaded.dataset.feature_dim(),
            loaded.dataset.label_dim()
        );
        Ok(loaded.dataset)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Model to train: msdn, br, cc, pcc or sta.
    #[arg(long)]
    model: String,

    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,

    /// Human-readable training report (default: <out>.report.txt).
    #[arg(long)]
    report: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Learning rate (default: 0.001 for msdn, 0.01 for the baselines).
    #[arg(long)]
    lr: Option<f64>,

    /// L2 weight decay.
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,

    /// Dropout on the msdn hidden vector.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,

    /// Hidden size of msdn.
    #[arg(long, default_value_t = 128)]
    hidden: usize,

    /// Number of msdn convolution kernels (kernel i has size i).
    #[arg(long = "kernels", default_value_t = 128)]
    kernels: usize,

    #[arg(long, default_value_t = 128)]
    batch_size: usize,

    /// Epoch cap (default: 10000 for msdn, 200 for the baselines).
    #[arg(long)]
    epochs: Option<usize>,

    /// Early-stopping patience for msdn, in epochs.
    #[arg(long, default_value_t = 100)]
    patience: usize,

    /// Wall-clock cap for msdn training.
    #[arg(long)]
    budget_seconds: Option<f64>,

    /// Largest label count pcc will enumerate.
    #[arg(long, default_value_t = DEFAULT_PCC_D_MAX)]
    d_max: usize,

    /// Skip min-max scaling.
    #[arg(long)]
    no_scale: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,

    /// Probability at or above which a label is predicted.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,

    /// CSV of predicted labels and probabilities (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Overrides `jobs`: worker threads for independent cells.
    #[arg(long)]
    jobs: Option<usize>,

    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides `repeats`.
    #[arg(long)]
    repeats: Option<usize>,

    /// Overrides `models`, e.g. `msdn,br,cc`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Overrides `budget_seconds`.
    #[arg(long)]
    budget_seconds: Option<f64>,

    /// Overrides `pcc_d_max`.
    #[arg(long)]
    d_max: Option<usize>,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    /// Feature count.
    #[arg(long)]
    m: usize,
    /// Label count.
    #[arg(long)]
    d: usize,
    /// Hidden size.
    #[arg(long, default_value_t = 128)]
    h: usize,
    /// Kernel count.
    #[arg(long = "K", default_value_t = 128)]
    k: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Probability of flipping each label.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (canonical format).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let kind: ModelKind = args.model.parse()?;
    let dataset = args.data.load()?;
    if kind == ModelKind::Pcc && dataset.label_dim() > args.d_max {
        return Err(msdn_core::Error::TooManyLabels {
            d: dataset.label_dim(),
            d_max: args.d_max,
        }
        .into());
    }
    let scaler = if args.no_scale {
        None
    } else {
        Some(Scaler::fit(&dataset.x)?)
    };
    let x = match &scaler {
        Some(s) => s.transform(&dataset.x)?,
        None => dataset.x.clone(),
    };
    let (m, d) = (dataset.feature_dim(), dataset.label_dim());
    let hyper = match kind {
        ModelKind::Msdn => {
            let mut c = MsdnConfig::new(m, d);
            c.hidden_dim = args.hidden;
            c.kernel_count = args.kernels;
            c.learning_rate = args.lr.unwrap_or(c.learning_rate);
            c.dropout = args.dropout;
            c.weight_decay = args.weight_decay;
            c.batch_size = args.batch_size;
            c.max_epochs = args.epochs.unwrap_or(c.max_epochs);
            c.patience = args.patience;
            c.seed = args.seed;
            c.budget_seconds = args.budget_seconds;
            c.validate()?;
            Hyper::Msdn(c)
        }
        _ => {
            let base = LogisticConfig::default();
            Hyper::Baseline(LogisticConfig {
                learning_rate: args.lr.unwrap_or(base.learning_rate),
                weight_decay: args.weight_decay,
                epochs: args.epochs.unwrap_or(base.epochs),
                batch_size: args.batch_size,
                seed: args.seed,
            })
        }
    };

    let (model, report) = train_model(kind, &x, &dataset.y, &hyper, args.d_max)?;
    let pred = model.predict(&x, DEFAULT_THRESHOLD)?;
    let saved = SavedModel { model, scaler };
    save_model(&saved, &args.out)?;

    let mut text = String::new();
    writeln!(text, "model: {kind}")?;
    writeln!(text, "dataset: {} ({} rows, {m} features, {d} labels)", dataset.name, dataset.len())?;
    writeln!(text, "hyperparameters: {}", hyper.describe())?;
    writeln!(text, "parameters: {}", group_thousands(saved.model.param_count()))?;
    if let Some(r) = &report {
        let max_epochs = match &hyper {
            Hyper::Msdn(c) => c.max_epochs,
            Hyper::Baseline(c) => c.epochs,
        };
        writeln!(text, "epochs: {} of at most {max_epochs}", r.epochs_run)?;
        writeln!(text, "stopped: {:?}", r.stop_reason)?;
        writeln!(text, "best epoch: {}", r.best_epoch)?;
        writeln!(text, "best validation loss: {}", r.best_val_loss)?;
        writeln!(text, "final training loss: {}", r.final_train_loss)?;
        info!("training took {:.2}s", r.wall_time_secs);
    }
    writeln!(text, "training ema: {}", eval::ema(&pred.labels, &dataset.y)?)?;
    writeln!(text, "training micro_f1: {}", eval::micro_f1(&pred.labels, &dataset.y)?)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| append_ext(&args.out, "report.txt"));
    fs::write(&report_path, &text).with_context(|| format!("writing {}", report_path.display()))?;
    print!("{text}");
    info!("model written to {}", args.out.display());
    Ok(())
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let saved = load_model(&args.model)?;
    let dataset = args.data.load()?;
    let x = saved.prepare(&dataset.x)?;
    let pred = saved.model.predict(&x, args.threshold)?;
    let mut csv = String::new();
    let labels = &dataset.label_names;
    let header: Vec<String> = labels
        .iter()
        .map(|l| format!("pred_{l}"))
        .chain(labels.iter().map(|l| format!("prob_{l}")))
        .collect();
    writeln!(csv, "{}", header.join(","))?;
    write_rows(&mut csv, &pred.labels, &pred.probabilities)?;
    match &args.out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    info!(
        "ema {:.4} micro_f1 {:.4} over {} rows",
        eval::ema(&pred.labels, &dataset.y)?,
        eval::micro_f1(&pred.labels, &dataset.y)?,
        dataset.len()
    );
    Ok(())
}

fn write_rows(out: &mut String, labels: &Matrix, probs: &Matrix) -> Result<()> {
    for r in 0..labels.rows() {
        let cells: Vec<String> = labels
            .row(r)
            .iter()
            .map(|v| format!("{}", *v as u8))
            .chain(probs.row(r).iter().map(|v| v.to_string()))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Returns whether every cell succeeded.
fn cmd_benchmark(args: &BenchmarkArgs) -> Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(j) = args.jobs {
        config.jobs = j;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.repeats {
        config.repeats = r;
    }
    if let Some(models) = &args.models {
        config.models = models
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| m.parse())
            .collect::<msdn_core::Result<_>>()?;
    }
    if args.budget_seconds.is_some() {
        config.budget_seconds = args.budget_seconds;
    }
    if let Some(d) = args.d_max {
        config.pcc_d_max = d;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let outcome = run_benchmark(&config, base, true)?;
    println!(
        "{} cells completed, {} failed; results in {}",
        outcome.records.len(),
        outcome.failures.len(),
        config.output_dir.display()
    );
    for f in &outcome.failures {
        let repeat = f.repeat.map(|r| format!(" repeat {r}")).unwrap_or_default();
        warn!("failed: {} / {}{repeat}: {}", f.dataset, f.model, f.error);
    }
    Ok(outcome.failures.is_empty())
}

fn cmd_params(args: &ParamsArgs) -> Result<()> {
    let b = param_breakdown(args.m, args.d, args.h, args.k)?;
    println!("dense encoder ({} -> {}): {}", args.m, args.h, group_thousands(b.dense));
    println!("convolution bank ({} kernels): {}", args.k, group_thousands(b.conv));
    println!("decoder ({} -> {}): {}", args.k, args.d, group_thousands(b.decoder));
    println!("total: {}", group_thousands(b.total()));
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let ds = data::synth_xor(args.n, args.m, args.d, args.noise, args.seed)?;
    data::save_canonical(&ds, &args.out)?;
    info!("wrote {} rows to {}", ds.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level)).init();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Predict(a) => cmd_predict(a).map(|_| true),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Params(a) => cmd_params(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
