//! The `boostjet` command line: synthetic data generation, the file-backed
//! stage pipeline and the parameter/ablation experiments.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 unreadable
//! input data, 4 stale or missing upstream artifact, 10 `gen`, 11–16 the
//! stages `trackers` … `eval`, 17 `experiment`.

pub mod artifacts;
pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use boostjet::datamodel::{synth_generate, write_catalog, write_event_log, Catalog};
use boostjet::pipeline::{run_experiment, ExperimentKind, ExperimentOutput};
use clap::{Parser, Subcommand};

use artifacts::{header, write_atomic};
pub use config::RunConfig;
pub use stages::{parse_stages, Stage, Workspace};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: written by {found}, expected {expected}; rerun the upstream stages")]
    Stale {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: missing; run the {stage} stage first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} failed: {message}")]
    Stage {
        stage: String,
        code: i32,
        message: String,
    },
}

impl CliError {
    /// Configuration problems surfacing from the core keep exit code 2;
    /// everything else is attributed to the failing stage.
    pub fn from_core(code: i32, stage: &str, e: boostjet::Error) -> CliError {
        match e {
            boostjet::Error::Config(m) | boostjet::Error::UnknownExperiment(m) => CliError::Config(m),
            e => CliError::Stage {
                stage: stage.to_owned(),
                code,
                message: e.to_string(),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stale { .. } | CliError::MissingArtifact { .. } => 4,
            CliError::Io { .. } => 3,
            CliError::Stage { code, .. } => *code,
        }
    }
}

pub const GEN_EXIT: i32 = 10;
pub const EXPERIMENT_EXIT: i32 = 17;
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "boostjet", version, about = "Tracker + session-embedding + boosted-tree shop recommender")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub work_dir: Option<PathBuf>,
    /// Override any config key, e.g. `--set gbm.shrinkage=0.03`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic event log and catalog.
    Gen,
    /// Aggregate trackers at the training and evaluation cut-offs.
    Trackers,
    /// Train session embeddings on the feature span.
    Embed,
    /// Build the labelled training pool.
    Pool,
    /// Fit the boosted-tree click model.
    Train,
    /// Produce top-k lists for every test user and system.
    Recommend,
    /// Score recommendation lists by DCG.
    Eval,
    /// Run the stage pipeline.
    RunAll {
        /// One stage reruns it and everything after; a comma list runs
        /// exactly those stages.
        #[arg(long, value_name = "LIST")]
        stages: Option<String>,
    },
    /// Parameter sweeps and ablations: neg, gamma, ablation, candidates.
    Experiment { kind: String },
}

/// Builds the effective configuration: defaults, then the config file,
/// then `--set` overrides and dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(d) = &cli.work_dir {
        cfg.work_dir = d.clone();
    }
    cfg.finish()?;
    Ok(cfg)
}

fn echo_config(cfg: &RunConfig) -> Result<(), CliError> {
    let text = cfg.to_text();
    log::info!("effective configuration:\n{}", text.trim_end());
    write_atomic(&cfg.work_dir.join(CONFIG_ECHO), |f| {
        writeln!(f, "# {}", header("config", &cfg.hash_of(&[""], &[])))?;
        f.write_all(text.as_bytes())
    })
}

fn gen(cfg: &RunConfig) -> Result<(), CliError> {
    let err = |e| CliError::from_core(GEN_EXIT, "gen", e);
    let (log, offers) = synth_generate(&cfg.synth).map_err(err)?;
    let catalog = Catalog::new(offers).map_err(err)?;
    let head = header("gen", &cfg.hash_of(&["seed", "synth."], &[]));
    write_atomic(&cfg.events_path(), |f| write_event_log(f, &log, Some(&head)))?;
    write_atomic(&cfg.catalog_path(), |f| write_catalog(f, catalog.offers(), Some(&head)))?;
    log::info!("gen: {} events, {} offers", log.len(), catalog.len());
    Ok(())
}

fn write_experiment(cfg: &RunConfig, out: &ExperimentOutput) -> Result<(), CliError> {
    let kind = out.kind.token();
    let head = header(&format!("experiment-{kind}"), &cfg.hash_of(&[""], &[]));
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    write_atomic(&cfg.work_dir.join(format!("experiment_{kind}.tsv")), |f| {
        writeln!(f, "# {head}")?;
        if let Some(t) = out.threshold {
            writeln!(f, "# threshold {t}")?;
        }
        writeln!(f, "label\tsystem\tmean_dcg\tn_users\teval_llp\titerations_to_threshold")?;
        for r in &out.rows {
            let it = r.iterations_to_threshold.map_or("inf".into(), |i| i.to_string());
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{it}",
                r.label,
                r.system,
                r.mean_dcg,
                r.n_users,
                opt(r.eval_llp)
            )?;
        }
        Ok(())
    })?;
    for c in &out.curves {
        write_atomic(&cfg.work_dir.join(format!("experiment_{kind}_{}.curve.tsv", c.label)), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "iteration\ttrain_loss\teval_llp\ttrain_llp")?;
            for (i, l) in c.train_loss.iter().enumerate() {
                writeln!(f, "{}\t{l}\t{}\t{}", i + 1, opt(c.eval_llp.get(i).copied()), c.train_llp[i])?;
            }
            Ok(())
        })?;
    }
    if !out.type_importance.is_empty() {
        write_atomic(&cfg.work_dir.join(format!("experiment_{kind}_importance.tsv")), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "type\timportance")?;
            for (t, v) in &out.type_importance {
                writeln!(f, "{t}\t{v}")?;
            }
            Ok(())
        })?;
    }
    println!("label\tsystem\tmean_dcg\tn_users\titerations_to_threshold");
    for r in &out.rows {
        let it = r.iterations_to_threshold.map_or("-".into(), |i| i.to_string());
        println!("{}\t{}\t{:.6}\t{}\t{it}", r.label, r.system, r.mean_dcg, r.n_users);
    }
    Ok(())
}

fn experiment(cfg: &RunConfig, kind: &str) -> Result<(), CliError> {
    let kind: ExperimentKind = kind.parse().map_err(|e| CliError::from_core(2, "experiment", e))?;
    let err = |e| CliError::from_core(EXPERIMENT_EXIT, "experiment", e);
    let data = |e| CliError::from_core(3, "input", e);
    let log = boostjet::datamodel::load_event_log(cfg.events_path()).map_err(data)?;
    let catalog = Catalog::new(boostjet::datamodel::load_catalog(cfg.catalog_path()).map_err(data)?).map_err(data)?;
    let out = run_experiment(kind, &log, &catalog, &cfg.settings).map_err(err)?;
    write_experiment(cfg, &out)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    echo_config(&cfg)?;
    let ws = Workspace::new(&cfg);
    match &cli.command {
        Command::Gen => gen(&cfg),
        Command::Trackers => ws.run(Stage::Trackers),
        Command::Embed => ws.run(Stage::Embed),
        Command::Pool => ws.run(Stage::Pool),
        Command::Train => ws.run(Stage::Train),
        Command::Recommend => ws.run(Stage::Recommend),
        Command::Eval => ws.run(Stage::Eval),
        Command::RunAll { stages } => {
            let list = match stages {
                Some(s) => parse_stages(s)?,
                None => Stage::ALL.to_vec(),
            };
            for s in list {
                ws.run(s)?;
            }
            Ok(())
        }
        Command::Experiment { kind } => experiment(&cfg, kind),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("boostjet: {e}");
            e.exit_code()
        }
    }
}
