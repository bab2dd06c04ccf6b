use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoansatz::analysis::{
    contour_export, fanova_importance, scatter_export, slice_export, write_contour_csv,
    write_importance_csv, write_importance_json, write_scatter_csv, write_slice_csv, Param,
    DEFAULT_RADIUS,
};
use autoansatz::ansatz::{AnsatzSpec, EmbeddingKind, VariationalKind};
use autoansatz::automl::{
    run_search, SearchData, SearchOptions, SearchSpace, SearchSummary, TrialStore,
};
use autoansatz::baselines::{gnb_fit, knn_accuracy, MlpModel, DEFAULT_K};
use autoansatz::data::{generate_synthetic, load_csv, save_csv, split_by_session, Dataset, Standardizer, SynthConfig};
use autoansatz::model::{GradientMethod, QnnModel};
use autoansatz::train::{evaluate, train, write_metrics_csv, Decision, EpochMetrics, TrainConfig, TrainStatus};
use autoansatz::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const MIN_QUBITS: usize = 5;

#[derive(Parser, Debug)]
#[command(name = "autoansatz", version, about = "Variational QNN training and ansatz search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic beam-SNR dataset as CSV.
    GenData(GenDataArgs),
    /// Train one QNN on the session split.
    Train(TrainArgs),
    /// Run the TPE + successive-halving search over ansatz configurations.
    Search(SearchArgs),
    /// Export plot-ready tables from a trial store.
    Report(ReportArgs),
    /// Classical reference classifiers on the session split.
    Baselines(BaselineArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per class per session.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 3.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    session_shift: f64,
}

/// Flags shared by the commands that train something.
#[derive(Args, Debug, Clone)]
struct FitArgs {
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    /// Fraction of the training sessions held out for validation.
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "angle")]
    embedding: EmbeddingKind,
    #[arg(long, default_value = "s2d")]
    ansatz: VariationalKind,
    #[arg(long, default_value_t = 10)]
    qubits: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Permit fewer than 5 qubits.
    #[arg(long)]
    allow_small: bool,
    #[arg(long, value_enum, default_value_t = GradArg::Adjoint)]
    gradient: GradArg,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GradArg {
    Adjoint,
    Shift,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 60)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines trial store; an existing store is resumed.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Subsample the fitting rows (0 keeps all).
    #[arg(long, default_value_t = 0)]
    train_rows: usize,
    #[arg(long, default_value_t = 0)]
    val_rows: usize,
    #[arg(long, default_value_t = 0)]
    test_rows: usize,
    /// Store per-trial wall time (stores then differ between reruns).
    #[arg(long)]
    record_wall_time: bool,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReportKind {
    Scatter,
    Slice,
    Contour,
    Importance,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_enum)]
    kind: ReportKind,
    /// Parameter for a slice export.
    #[arg(long)]
    param: Option<Param>,
    /// Two comma-separated parameters for a contour export.
    #[arg(long, value_delimiter = ',')]
    params: Vec<Param>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    resolution: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    /// Forest seed for the importance estimate.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Mlp,
    Knn,
    Gnb,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [BaselineKind::Mlp, BaselineKind::Knn, BaselineKind::Gnb])]
    models: Vec<BaselineKind>,
    #[command(flatten)]
    fit: FitArgs,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidSpec(_) | Error::UnknownParameter(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Search(a) => search_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Baselines(a) => baselines_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn log_config(command: &str, config: serde_json::Value) {
    eprintln!("config {command}: {config}");
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen_data(a: GenDataArgs) -> CliResult {
    let config = SynthConfig {
        per_class_per_session: a.per_class,
        separation: a.sep,
        noise: a.noise,
        session_shift: a.session_shift,
        seed: a.seed,
    };
    log_config("gen-data", json!({ "out": a.out, "synth": config }));
    let data = generate_synthetic(&config)?;
    save_csv(&a.out, &data, Some(a.seed))?;
    eprintln!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn check_fraction(f: f64) -> CliResult {
    if !(f > 0.0 && f < 1.0) {
        return Err(Failure::Usage(format!("--val-fraction must be in (0, 1), got {f}")));
    }
    Ok(())
}

/// Session split, then a seeded validation hold-out from the training sessions.
fn split(path: &Path, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset, Dataset), Failure> {
    check_fraction(val_fraction)?;
    let data = load_csv(path).map_err(|e| match e {
        Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        other => other,
    })?;
    let (train_sessions, test) = split_by_session(&data)?;
    let (fit, val) = train_sessions.random_split(val_fraction, seed);
    if fit.is_empty() || val.is_empty() {
        return Err(Failure::Usage(format!(
            "{} training-session rows are too few for --val-fraction {val_fraction}",
            train_sessions.len()
        )));
    }
    eprintln!("rows: fit {} val {} test {}", fit.len(), val.len(), test.len());
    Ok((fit, val, test))
}

fn train_config(fit: &FitArgs, epochs: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: fit.batch_size,
        max_epochs: epochs,
        lr0: lr,
        weight_decay: fit.weight_decay,
        seed,
        ..TrainConfig::default()
    }
}

fn progress(m: &EpochMetrics) -> Decision {
    eprintln!(
        "epoch {:>3}  train {:.4}  val {:.4}  acc {:.4}  lr {:.2e}",
        m.epoch, m.train_loss, m.val_loss, m.val_acc, m.lr
    );
    Decision::Continue
}

fn status_name(s: TrainStatus) -> &'static str {
    match s {
        TrainStatus::Completed => "completed",
        TrainStatus::Pruned => "pruned",
        TrainStatus::Diverged => "diverged",
    }
}

fn train_cmd(a: TrainArgs) -> CliResult {
    if a.qubits < MIN_QUBITS && !a.allow_small {
        return Err(Failure::Usage(format!(
            "--qubits {} is below the search minimum {MIN_QUBITS}; pass --allow-small to override",
            a.qubits
        )));
    }
    let spec = AnsatzSpec::new(a.embedding, a.ansatz, a.qubits, a.layers).with_structure_seed(a.seed);
    spec.validate()?;
    let config = train_config(&a.fit, a.epochs, a.lr, a.seed);
    config.validate()?;
    log_config(
        "train",
        json!({
            "data": a.data, "spec": spec, "train": config,
            "val_fraction": a.fit.val_fraction,
            "gradient": format!("{:?}", a.gradient).to_lowercase(),
        }),
    );
    let (fit, val, test) = split(&a.data, a.fit.val_fraction, a.seed)?;
    let mut model = QnnModel::init(spec, Standardizer::fit(&fit)?, a.seed)?;
    model.set_gradient_method(match a.gradient {
        GradArg::Adjoint => GradientMethod::Adjoint,
        GradArg::Shift => GradientMethod::ParameterShift,
    });
    eprintln!("variational parameters: {}", spec.param_count());
    eprintln!("trainable parameters: {}", model.trainable_count());
    let outcome = train(&mut model, &fit, &val, &config, progress)?;
    let (test_loss, test_acc) = evaluate(&model, &test)?;
    if let Some(p) = &a.metrics {
        write_metrics_csv(BufWriter::new(File::create(p)?), &outcome.history)?;
    }
    if let Some(p) = &a.checkpoint {
        model.save(p)?;
    }
    let last = outcome.history.last();
    println!(
        "{}",
        json!({
            "status": status_name(outcome.status),
            "epochs": outcome.history.len(),
            "val_loss": last.map(|m| m.val_loss),
            "val_acc": last.map(|m| m.val_acc),
            "test_loss": test_loss,
            "test_acc": test_acc,
            "variational_params": spec.param_count(),
            "trainable_params": model.trainable_count(),
        })
    );
    Ok(())
}

fn maybe_subsample(d: Dataset, rows: usize, seed: u64) -> Dataset {
    if rows == 0 || rows >= d.len() {
        d
    } else {
        d.subsample(rows, seed)
    }
}

fn search_cmd(a: SearchArgs) -> CliResult {
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be >= 1".into()));
    }
    let options = SearchOptions {
        n_trials: a.trials,
        master_seed: a.seed,
        train: train_config(&a.fit, a.max_epochs, TrainConfig::default().lr0, 0),
        workers: a.workers,
        record_wall_time: a.record_wall_time,
        ..SearchOptions::default()
    };
    let space = SearchSpace::default();
    log_config(
        "search",
        json!({
            "data": a.data, "store": a.store, "trials": a.trials, "seed": a.seed,
            "workers": a.workers, "train": options.train,
            "val_fraction": a.fit.val_fraction,
            "rows": { "train": a.train_rows, "val": a.val_rows, "test": a.test_rows },
            "record_wall_time": a.record_wall_time,
        }),
    );
    let (fit, val, test) = split(&a.data, a.fit.val_fraction, a.seed)?;
    let data = SearchData::new(
        maybe_subsample(fit, a.train_rows, a.seed),
        maybe_subsample(val, a.val_rows, a.seed),
        maybe_subsample(test, a.test_rows, a.seed),
    )?;
    let mut store = TrialStore::open(&a.store)?;
    if !store.is_empty() {
        eprintln!("resuming: {} trials already stored", store.len());
    }
    let summary = run_search(&space, &data, &options, &mut store, |r| {
        eprintln!(
            "trial {:>3}  {}/{} n={} L={} lr0={:.4}  {:?} after {} epochs  val_loss {}",
            r.id,
            r.config.embedding,
            r.config.variational,
            r.config.n,
            r.config.layers,
            r.config.lr0,
            r.status,
            r.epochs.len(),
            r.objective()
        );
    })?;
    print_summary(&summary);
    Ok(())
}

fn print_summary(s: &SearchSummary) {
    println!("trials: {}", s.n_trials);
    println!("completed: {}", s.completed);
    println!("pruned: {}", s.pruned);
    println!("diverged: {}", s.diverged);
    println!("pruned_fraction: {:.4}", s.pruned_fraction());
    match &s.best {
        Some(b) => println!(
            "best: {}",
            json!({
                "id": b.id, "config": b.config, "seed": b.seed,
                "val_loss": b.final_metrics.val_loss,
                "val_acc": b.final_metrics.val_acc,
                "test_acc": b.final_metrics.test_acc,
                "param_count": b.param_count,
            })
        ),
        None => println!("best: none"),
    }
}

fn report_cmd(a: ReportArgs) -> CliResult {
    log_config(
        "report",
        json!({
            "store": a.store, "kind": format!("{:?}", a.kind).to_lowercase(),
            "param": a.param.map(|p| p.name()),
            "params": a.params.iter().map(|p| p.name()).collect::<Vec<_>>(),
            "resolution": a.resolution, "radius": a.radius, "seed": a.seed,
        }),
    );
    let trials = TrialStore::replay(&a.store)?;
    let mut out = output(a.out.as_deref())?;
    match a.kind {
        ReportKind::Scatter => write_scatter_csv(&mut out, &scatter_export(&trials))?,
        ReportKind::Slice => {
            let param = a
                .param
                .ok_or_else(|| Failure::Usage("--kind slice needs --param".into()))?;
            write_slice_csv(&mut out, param, &slice_export(&trials, param))?;
        }
        ReportKind::Contour => {
            let [p, q] = a.params[..] else {
                return Err(Failure::Usage("--kind contour needs --params a,b".into()));
            };
            let grid = contour_export(&trials, p, q, a.resolution, a.radius)?;
            write_contour_csv(&mut out, &grid)?;
        }
        ReportKind::Importance => {
            let report = fanova_importance(&trials, a.seed)?;
            match a.format {
                Format::Csv => write_importance_csv(&mut out, &report)?,
                Format::Json => write_importance_json(&mut out, &report)?,
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn baselines_cmd(a: BaselineArgs) -> CliResult {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let config = train_config(&a.fit, a.epochs, a.lr, a.seed);
    config.validate()?;
    log_config(
        "baselines",
        json!({
            "data": a.data, "seed": a.seed, "k": a.k, "train": config,
            "val_fraction": a.fit.val_fraction,
            "models": a.models.iter().map(|m| format!("{m:?}").to_lowercase()).collect::<Vec<_>>(),
        }),
    );
    let (fit, val, test) = split(&a.data, a.fit.val_fraction, a.seed)?;
    let mut rows = Vec::new();
    for kind in &a.models {
        let acc = match kind {
            BaselineKind::Mlp => {
                let mut model = MlpModel::init(Standardizer::fit(&fit)?, a.seed);
                eprintln!("mlp parameters: {}", model.param_count());
                train(&mut model, &fit, &val, &config, progress)?;
                evaluate(&model, &test)?.1
            }
            BaselineKind::Knn => knn_accuracy(&fit, &test, a.k)?,
            BaselineKind::Gnb => {
                let gnb = gnb_fit(&fit)?;
                let hits = test.iter().filter(|s| gnb.predict(&s.features) == s.label).count();
                hits as f64 / test.len() as f64
            }
        };
        rows.push((format!("{kind:?}").to_lowercase(), acc));
    }
    println!("model,test_acc");
    for (name, acc) in rows {
        println!("{name},{acc}");
    }
    Ok(())
}
