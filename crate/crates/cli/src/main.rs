mod config;
mod failure;
mod manifest;
mod plot;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use objdyn::models::{Checkpoint, ModelVariant, Predictor, Preset};
use objdyn::pipeline::{
    evaluate, format_table, read_csv, to_csv, train, EvalMode, EvalReport, MaskPredictor,
    ModelRollout, OracleEcho, ReportRow, ZeroMasks,
};
use objdyn::sim::{generate_dataset, load_dataset, Role};

use config::{
    required, set, ConfigFile, DatagenConfig, EvalConfig, PlotConfig, Stub, TrainRunConfig,
};
use failure::Failure;
use manifest::{Run, RunManifest};

/// Environment variable overriding the number of worker threads.
const THREADS_ENV: &str = "ODYN_THREADS";
const RUN_FILE: &str = "run.json";

#[derive(Parser)]
#[command(name = "objdyn", version = manifest::BUILD_ID, about = "Object-centric dynamics models on a 2D pushing simulator")]
struct Cli {
    /// TOML file with per-command defaults in [datagen], [train], [eval] and
    /// [plot] sections; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate pushing episodes into a dataset directory.
    Datagen(DatagenArgs),
    /// Train a model; writes a checkpoint per curriculum stage.
    Train(TrainArgs),
    /// Mean IoU of a checkpoint (or a stub) on one or more datasets.
    Eval(EvalArgs),
    /// Grouped bar chart of evaluation reports.
    Plot(PlotArgs),
    /// Re-execute the run recorded in a run manifest.
    Replay { manifest: PathBuf },
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    role: Option<Role>,
    /// Number of episodes.
    #[arg(long)]
    count: Option<usize>,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Prediction horizon of the last curriculum stage.
    #[arg(long)]
    horizon: Option<usize>,
    /// Epochs over all stages [default: 13].
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size [default: 30].
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on optimizer steps over all stages.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Weight of the latent loss of auto-predictor variants.
    #[arg(long)]
    latent_weight: Option<f64>,
    /// Train the full horizon from the start.
    #[arg(long)]
    no_curriculum: bool,
    /// Feed predicted masks back into the encoder during rollouts.
    #[arg(long)]
    reencode: Option<bool>,
    /// Continue after the latest stage checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "stub")]
    checkpoint: Option<PathBuf>,
    /// Evaluate a stand-in predictor instead of a checkpoint.
    #[arg(long, value_enum)]
    stub: Option<Stub>,
    /// Dataset directories (repeatable).
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// `sliding` (every start step) or `first_step`.
    #[arg(long)]
    mode: Option<EvalMode>,
    #[arg(long)]
    reencode: Option<bool>,
    /// Seed recorded in the report (use the training seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.txt, report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Report CSV files.
    #[arg(required = false)]
    inputs: Vec<PathBuf>,
    /// Only plot rows of this horizon.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    title: Option<String>,
    /// SVG output path; the merged table goes next to it as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(cli: Cli) -> Result<Run, Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    Ok(match cli.command {
        Command::Datagen(a) => {
            let mut c: DatagenConfig = file.section("datagen")?;
            set(&mut c.role, a.role);
            set(&mut c.count, a.count);
            set(&mut c.seed, a.seed);
            set(&mut c.width, a.width);
            set(&mut c.height, a.height);
            set(&mut c.out, a.out.map(Some));
            Run::Datagen(c)
        }
        Command::Train(a) => {
            let mut c: TrainRunConfig = file.section("train")?;
            let t = &mut c.train;
            set(&mut t.variant, a.variant);
            set(&mut t.horizon, a.horizon);
            set(&mut t.epochs, a.epochs);
            set(&mut t.lr, a.lr);
            set(&mut t.batch, a.batch);
            set(&mut t.preset, a.preset);
            set(&mut t.seed, a.seed);
            set(&mut t.max_steps, a.max_steps.map(Some));
            set(&mut t.latent_weight, a.latent_weight);
            set(&mut t.reencode, a.reencode.map(Some));
            if a.no_curriculum {
                t.curriculum = false;
            }
            if a.resume {
                c.resume = true;
            }
            set(&mut c.data, a.data.map(Some));
            set(&mut c.out, a.out.map(Some));
            c.train.validate()?;
            Run::Train(c)
        }
        Command::Eval(a) => {
            let mut c: EvalConfig = file.section("eval")?;
            if a.checkpoint.is_some() {
                c.stub = None;
            }
            if a.stub.is_some() {
                c.checkpoint = None;
            }
            set(&mut c.checkpoint, a.checkpoint.map(Some));
            set(&mut c.stub, a.stub.map(Some));
            if !a.data.is_empty() {
                c.data = a.data;
            }
            set(&mut c.horizon, a.horizon);
            set(&mut c.mode, a.mode);
            set(&mut c.reencode, a.reencode.map(Some));
            set(&mut c.seed, a.seed);
            set(&mut c.out, a.out.map(Some));
            if c.checkpoint.is_some() == c.stub.is_some() {
                return Err(Failure::usage(
                    "eval needs exactly one of --checkpoint and --stub",
                ));
            }
            if c.horizon == 0 {
                return Err(Failure::usage("horizon must be at least 1"));
            }
            Run::Eval(c)
        }
        Command::Plot(a) => {
            let mut c: PlotConfig = file.section("plot")?;
            if !a.inputs.is_empty() {
                c.inputs = a.inputs;
            }
            set(&mut c.horizon, a.horizon.map(Some));
            set(&mut c.title, a.title.map(Some));
            set(&mut c.out, a.out.map(Some));
            Run::Plot(c)
        }
        Command::Replay { manifest } => RunManifest::load(&manifest)?.run,
    })
}

/// Where the run manifest of `run` goes.
fn manifest_path(run: &Run) -> Result<PathBuf, Failure> {
    Ok(match run {
        Run::Datagen(c) => required(&c.out, "--out")?.join(RUN_FILE),
        Run::Train(c) => required(&c.out, "--out")?.join(RUN_FILE),
        Run::Eval(c) => required(&c.out, "--out")?.join(RUN_FILE),
        Run::Plot(c) => {
            let out = required(&c.out, "--out")?;
            let mut name = out.file_name().unwrap_or_default().to_owned();
            name.push(".run.json");
            out.with_file_name(name)
        }
    })
}

fn datagen(c: &DatagenConfig) -> Result<Vec<PathBuf>, Failure> {
    let out = required(&c.out, "--out")?;
    let cfg = c.role.config(c.width, c.height);
    let manifest = generate_dataset(c.role.name(), &cfg, c.count, c.seed, out)?;
    println!(
        "{}: {} episodes, {} steps in {}",
        c.role,
        manifest.episodes.len(),
        manifest.total_steps(),
        out.display()
    );
    let mut files: Vec<PathBuf> = manifest
        .episodes
        .iter()
        .map(|e| out.join(&e.file))
        .collect();
    files.push(out.join(objdyn::sim::MANIFEST_FILE));
    Ok(files)
}

fn run_train(c: &TrainRunConfig) -> Result<Vec<PathBuf>, Failure> {
    let out = required(&c.out, "--out")?;
    let data = load_dataset(required(&c.data, "--data")?)?;
    let report = train(&c.train, &data, Some(out), c.resume)?;
    let model = out.join("model.odck");
    report.checkpoint.save(&model)?;
    let mut log = String::from("stage,epoch,steps,mean_loss\n");
    for e in &report.epochs {
        let _ = writeln!(
            log,
            "{},{},{},{:.8}",
            e.stage, e.epoch, e.steps, e.mean_loss
        );
    }
    let log_path = out.join("train_log.csv");
    std::fs::write(&log_path, log)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", log_path.display())))?;
    if let Some(ae) = &report.ae {
        println!(
            "latent-target autoencoder: mean IoU {:.4} after {} steps",
            ae.best_iou, ae.steps
        );
    }
    println!(
        "{}: {} optimizer steps over {} stages, final loss {}; checkpoint {}",
        c.train.variant,
        report.steps,
        report.checkpoint.stage,
        report
            .epochs
            .last()
            .map_or("n/a".into(), |e| format!("{:.6}", e.mean_loss)),
        model.display()
    );
    let mut outputs = report.checkpoints;
    outputs.extend([model, log_path]);
    Ok(outputs)
}

fn run_eval(c: &EvalConfig) -> Result<Vec<PathBuf>, Failure> {
    let out = required(&c.out, "--out")?;
    if c.data.is_empty() {
        return Err(Failure::usage("eval needs at least one --data directory"));
    }
    let predictor = match &c.checkpoint {
        Some(p) => Some(Predictor::from_checkpoint(&Checkpoint::load(p)?)?),
        None => None,
    };
    let model: Box<dyn MaskPredictor + '_> = match (&predictor, c.stub) {
        (Some(p), _) => {
            let mut r = ModelRollout::new(p);
            set(&mut r.reencode, c.reencode);
            Box::new(r)
        }
        (None, Some(Stub::Oracle)) => Box::new(OracleEcho),
        (None, Some(Stub::Zero)) => Box::new(ZeroMasks),
        (None, None) => unreachable!("checked while resolving"),
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    for dir in &c.data {
        let data = load_dataset(dir)?;
        let mut r = evaluate(model.as_ref(), &data, c.horizon, c.mode)?;
        r.seed = c.seed;
        log::info!(
            "{}: mean IoU {:.4} over {} items",
            r.dataset,
            r.mean_iou,
            r.n_items
        );
        reports.push(r);
    }
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    let table = format_table(&rows);
    print!("{table}");
    let mut text = table;
    for r in &reports {
        text.push('\n');
        text.push_str(&r.detailed_table());
    }
    let files = [
        (out.join("report.txt"), text),
        (out.join("report.csv"), to_csv(&rows)?),
        (
            out.join("report.json"),
            serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n",
        ),
    ];
    write_all(&files)
}

fn write_all(files: &[(PathBuf, String)]) -> Result<Vec<PathBuf>, Failure> {
    for (path, text) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(path, text)
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(files.iter().map(|(p, _)| p.clone()).collect())
}

/// Rows to plot; an empty selection is an error.
fn plot_rows(c: &PlotConfig) -> Result<Vec<ReportRow>, Failure> {
    if c.inputs.is_empty() {
        return Err(Failure::usage("plot needs at least one report file"));
    }
    let mut rows = Vec::new();
    for p in &c.inputs {
        rows.extend(read_csv(p)?);
    }
    rows.retain(|r| c.horizon.map_or(true, |h| r.horizon == h));
    if rows.is_empty() {
        return Err(Failure::data("no report rows to plot"));
    }
    Ok(rows)
}

fn run_plot(c: &PlotConfig, rows: &[ReportRow]) -> Result<Vec<PathBuf>, Failure> {
    let out = required(&c.out, "--out")?;
    let bars = plot::bars(rows);
    let title = c
        .title
        .clone()
        .unwrap_or_else(|| "Mean IoU by dataset".into());
    let table = format_table(rows);
    print!("{table}");
    write_all(&[
        (out.to_owned(), plot::render_svg(&bars, &title)),
        (out.with_extension("csv"), to_csv(rows)?),
    ])
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if !objdyn::par::init_threads(n) {
                log::warn!("{THREADS_ENV}={n} ignored: no thread pool available");
            }
            Ok(())
        }
        _ => Err(Failure::usage(format!(
            "{THREADS_ENV} must be a positive integer, got `{v}`"
        ))),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let run = resolve(cli)?;
    // inputs of a plot are checked before anything is written
    let plot_input = match &run {
        Run::Plot(c) => {
            required(&c.out, "--out")?;
            Some(plot_rows(c)?)
        }
        _ => None,
    };
    let mut manifest = RunManifest::start(run.clone(), manifest_path(&run)?)?;
    log::info!(
        "{} run recorded in {}",
        run.name(),
        manifest.path().display()
    );
    let result = match &run {
        Run::Datagen(c) => datagen(c),
        Run::Train(c) => run_train(c),
        Run::Eval(c) => run_eval(c),
        Run::Plot(c) => run_plot(c, plot_input.as_deref().unwrap_or_default()),
    };
    manifest.finish(&result)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
