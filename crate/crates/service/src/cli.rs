//! Command-line verbs. Every verb honors `--seed`; artifact-producing verbs
//! write into `--out`, and rerunning with the same inputs and seed rewrites
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use advice_core::advgen::{train_advgen, AdvgenConfig, AdviceGenerator};
use advice_core::data::{dataset_stats, generate_synthetic, load_dataset, save_dataset, Dataset, Example, GeneratorConfig, Split};
use advice_core::grounding::{pretrain, GrounderKind, PretrainConfig};
use advice_core::lang::{CellGrid, Templates};
use advice_core::predictor::{
    instruction_vocab, train_baseline, train_corrective_e2e, train_corrective_from_baseline, train_restrictive_e2e,
    E2EPredictor, PredictorKind, TrainConfig,
};
use advice_core::protocols::{compare_protocols, run_eval, EvalOptions, OracleConfig, ProtocolKind};
use advice_core::world::Head;
use advice_core::Rng;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::api::{router, AppState};
use crate::registry::{load_grounder, load_predictor, model_path, ModelRegistry, Role};
use crate::store::SessionStore;

pub type CliResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "blocks-advice", version, about = "Train, evaluate and serve blocks-world advice models")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file (or a directory containing `dataset.json`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Directory artifacts are written to.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Directory trained models are read from; defaults to `--out`.
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    /// Template fixture replacing the built-in families.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Pretrain the advice grounding models.
    PretrainGrounding(PretrainArgs),
    /// Train an end-to-end predictor or the advice generators.
    Train(TrainArgs),
    /// Run one protocol over a split and print its report.
    Eval(EvalArgs),
    /// Run every protocol and print the comparison table.
    Compare(CompareArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrounderChoice {
    Restrictive,
    Corrective,
    Both,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, value_enum, default_value_t = GrounderChoice::Both)]
    pub kind: GrounderChoice,
    /// Training sentence-coordinate samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Held-out samples per template family for the accuracy report.
    #[arg(long)]
    pub heldout: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainTarget {
    Baseline,
    Restrictive,
    Corrective,
    Advgen,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub what: TrainTarget,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Second-iteration epochs of corrective training.
    #[arg(long)]
    pub iter2_epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// Corrective only: start from the trained baseline in `--models` and
    /// run just the advice iteration.
    #[arg(long)]
    pub from_baseline: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Give advice even when the prediction is already good enough.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub always_advice: bool,
    /// Phrase oracle advice with the training template family.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub train_advice_only: bool,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e| format!("{e:?}"))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub protocol: ProtocolKind,
    #[command(flatten)]
    pub oracle: OracleArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of static UI assets served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Append-only session event log; replayed on start if it exists.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn out_dir(g: &Global) -> CliResult<PathBuf> {
    let dir = g.out.clone().ok_or("--out is required")?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn models_dir(g: &Global) -> CliResult<PathBuf> {
    g.models.clone().or_else(|| g.out.clone()).ok_or_else(|| "--models is required".into())
}

fn dataset(g: &Global) -> CliResult<Dataset> {
    let p = g.data.clone().ok_or("--data is required")?;
    let p = if p.is_dir() { p.join("dataset.json") } else { p };
    Ok(load_dataset(&p)?)
}

fn templates(g: &Global) -> CliResult<Templates> {
    Ok(match &g.templates {
        Some(p) => Templates::load(p)?,
        None => Templates::builtin(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match cli.command {
        Command::GenData(a) => gen_data(g, a),
        Command::PretrainGrounding(a) => pretrain_grounding(g, a),
        Command::Train(a) => train(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Compare(a) => compare(g, a),
        Command::Serve(a) => serve(g, a),
    }
}

fn gen_data(g: &Global, a: GenDataArgs) -> CliResult<()> {
    let dir = out_dir(g)?;
    let mut cfg = GeneratorConfig {
        seed: g.seed,
        ..Default::default()
    };
    cfg.train = a.train.unwrap_or(cfg.train);
    cfg.dev = a.dev.unwrap_or(cfg.dev);
    cfg.test = a.test.unwrap_or(cfg.test);
    let d = generate_synthetic(&cfg)?;
    save_dataset(&d, &dir.join("dataset.json"))?;
    write_json(&dir.join("dataset_stats.json"), &dataset_stats(&d))?;
    println!(
        "wrote {} ({} train / {} dev / {} test)",
        dir.join("dataset.json").display(),
        d.train.len(),
        d.dev.len(),
        d.test.len()
    );
    Ok(())
}

fn pretrain_grounding(g: &Global, a: PretrainArgs) -> CliResult<()> {
    let dir = out_dir(g)?;
    let t = templates(g)?;
    let grid = CellGrid::default();
    let kinds: &[GrounderKind] = match a.kind {
        GrounderChoice::Restrictive => &[GrounderKind::Restrictive],
        GrounderChoice::Corrective => &[GrounderKind::Corrective],
        GrounderChoice::Both => &[GrounderKind::Restrictive, GrounderKind::Corrective],
    };
    for &kind in kinds {
        let mut cfg = PretrainConfig::for_kind(kind);
        cfg.seed = g.seed;
        cfg.samples = a.samples.unwrap_or(cfg.samples);
        cfg.heldout = a.heldout.unwrap_or(cfg.heldout);
        cfg.batch = a.batch.unwrap_or(cfg.batch);
        cfg.lr = a.lr.unwrap_or(cfg.lr);
        let (model, report) = pretrain(kind, &t, &grid, &cfg)?;
        let role = Role::grounder(kind);
        model.save(&model_path(&dir, role), &model.meta(g.seed, serde_json::to_value(&cfg)?))?;
        write_json(&dir.join(format!("{}.report.json", role.name())), &report)?;
        println!(
            "{}: held-out accuracy train-family {:.4}, test-family {:.4}",
            role.name(),
            report.train_templates,
            report.test_templates
        );
    }
    Ok(())
}

fn train_config(g: &Global, a: &TrainArgs) -> TrainConfig {
    let mut cfg = TrainConfig {
        seed: g.seed,
        ..Default::default()
    };
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.iter2_epochs = a.iter2_epochs.unwrap_or(cfg.iter2_epochs);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg
}

fn train(g: &Global, a: TrainArgs) -> CliResult<()> {
    let dir = out_dir(g)?;
    let models = models_dir(g)?;
    let d = dataset(g)?;
    let t = templates(g)?;
    let grid = CellGrid::default();
    let vocab = instruction_vocab(&d.train);
    if a.from_baseline && a.what != TrainTarget::Corrective {
        return Err("--from-baseline only applies to `train corrective`".into());
    }
    if a.what == TrainTarget::Advgen {
        let mut cfg = AdvgenConfig {
            seed: g.seed,
            ..Default::default()
        };
        cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
        cfg.batch = a.batch.unwrap_or(cfg.batch);
        cfg.lr = a.lr.unwrap_or(cfg.lr);
        for h in Head::BOTH {
            let role = Role::advgen(h);
            let mut rng = Rng::named(g.seed, &format!("init.{}", role.name()));
            let mut m = AdviceGenerator::new(h, vocab.clone(), cfg.dims, &mut rng)?;
            let log = train_advgen(&mut m, &d.train, &d.dev, &cfg)?;
            m.save(&model_path(&dir, role), &m.meta(g.seed, serde_json::to_value(&cfg)?))?;
            write_json(&dir.join(format!("{}.log.json", role.name())), &log)?;
            println!(
                "{}: best epoch {}, dev top-1 {:.4}, top-2 {:.4}",
                role.name(),
                log.best_epoch,
                log.dev.top1,
                log.dev.top2
            );
        }
        return Ok(());
    }
    let cfg = train_config(g, &a);
    let kind = match a.what {
        TrainTarget::Baseline => PredictorKind::Baseline,
        TrainTarget::Restrictive => PredictorKind::Restrictive,
        _ => PredictorKind::Corrective,
    };
    let role = Role::predictor(kind);
    let trunk = match kind.grounder() {
        Some(gk) => Some(load_grounder(&models, gk)?.frozen_trunk()?),
        None => None,
    };
    let mut rng = Rng::named(g.seed, &format!("init.{}", role.name()));
    let mut m = E2EPredictor::new(kind, vocab, cfg.dims, trunk, &mut rng)?;
    let log = match kind {
        PredictorKind::Baseline => train_baseline(&mut m, &d.train, &cfg)?,
        PredictorKind::Restrictive => train_restrictive_e2e(&mut m, &d.train, &t.train, &grid, &cfg)?,
        PredictorKind::Corrective if a.from_baseline => {
            let base = load_predictor(&models, PredictorKind::Baseline)?;
            train_corrective_from_baseline(&mut m, &base, &d.train, &t.train, &cfg)?
        }
        PredictorKind::Corrective => train_corrective_e2e(&mut m, &d.train, &t.train, &cfg)?,
    };
    let training = serde_json::json!({ "config": cfg, "from_baseline": a.from_baseline });
    m.save(&model_path(&dir, role), &m.meta(g.seed, training))?;
    write_json(&dir.join(format!("{}.log.json", role.name())), &log)?;
    println!(
        "{}: final epoch loss {:.5}",
        role.name(),
        log.epoch_losses.last().copied().unwrap_or(f32::NAN)
    );
    Ok(())
}

fn eval_options(g: &Global, o: &OracleArgs) -> EvalOptions {
    EvalOptions {
        oracle: OracleConfig {
            always_advice: o.always_advice,
            ..Default::default()
        },
        train_advice_only: o.train_advice_only,
        seed: g.seed,
    }
}

fn split_of(d: &Dataset, s: Split) -> CliResult<&[Example]> {
    let ex = d.split(s);
    if ex.is_empty() {
        return Err(format!("the {s:?} split is empty").into());
    }
    Ok(ex)
}

fn open_registry(g: &Global) -> CliResult<ModelRegistry> {
    Ok(ModelRegistry::open(&models_dir(g)?, templates(g)?, CellGrid::default())?)
}

fn eval(g: &Global, a: EvalArgs) -> CliResult<()> {
    let d = dataset(g)?;
    let reg = open_registry(g)?;
    let run = run_eval(
        a.protocol,
        split_of(&d, a.oracle.split)?,
        d.block_length,
        reg.models(),
        &eval_options(g, &a.oracle),
    )?;
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(format!("eval_{}.json", a.protocol.name())), &run.report)?;
    }
    println!("{}", serde_json::to_string_pretty(&run.report)?);
    Ok(())
}

fn compare(g: &Global, a: CompareArgs) -> CliResult<()> {
    let d = dataset(g)?;
    let reg = open_registry(g)?;
    let c = compare_protocols(
        split_of(&d, a.oracle.split)?,
        d.block_length,
        reg.models(),
        &eval_options(g, &a.oracle),
    )?;
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("compare.json"), &c)?;
        fs::write(dir.join("compare.txt"), c.table())?;
    }
    println!("{}", c.table());
    println!("{}", serde_json::to_string_pretty(&c)?);
    Ok(())
}

fn serve(g: &Global, a: ServeArgs) -> CliResult<()> {
    let d = Arc::new(dataset(g)?);
    let reg = Arc::new(open_registry(g)?);
    let store = match &a.log {
        Some(p) => SessionStore::with_log(p, reg.models())?,
        None => SessionStore::new(),
    };
    let restored = store.len();
    let state = Arc::new(AppState::new(reg.clone(), d, store, g.seed));
    let app = router(state, a.static_dir.clone());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!(
            "serving /v1 on http://{} ({} models, {} restored sessions)",
            listener.local_addr()?,
            reg.entries().len(),
            restored
        );
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Box<dyn std::error::Error + Send + Sync>>(())
    })
}

/// Parses arguments and runs; returns the process exit code. Usage errors
/// exit with 2 (via clap), failures with 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
