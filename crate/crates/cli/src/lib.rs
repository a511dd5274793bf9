//! Command-line workflows for PS8-Net.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ps8net::checkpoint::Checkpoint;
use ps8net::data::{
    load_canonical, load_raw_matrix, logistic_rescale, save_canonical, split_cullpdb6133, split_cullpdb6133_filtered,
    synthetic_dataset, Dataset, ProteinRecord, SplitMode, SyntheticSpec,
};
use ps8net::eval::{evaluate_dataset, predict, run_study, AblationData, Study};
use ps8net::gradcheck::layer_suite;
use ps8net::model::Ps8Net;
use ps8net::train::{train, OutputDir, TrainState};
use ps8net::{Error, Result, Tensor};

use crate::config::{DatasetKind, RunConfig};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "ps8", version, about = "Eight-state protein secondary structure prediction with PS8-Net")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file of `key = value` lines [default: none]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Canonical dataset file; synthetic proteins are used when omitted [default: none]
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory, or output file for preprocess and predict [default: runs/ps8]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Training dataset family: cullpdb6133 or cullpdb6133-filtered [default: cullpdb6133]
    #[arg(long, global = true)]
    pub dataset: Option<DatasetKind>,
    /// CullPDB6133 split: paper or train6128 [default: paper]
    #[arg(long = "split-mode", global = true)]
    pub split_mode: Option<SplitMode>,
    /// Multiplier for every width and the epoch count [default: 1]
    #[arg(long, global = true)]
    pub scale: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw matrix (or generate synthetic proteins) into a canonical dataset file
    Preprocess {
        /// Raw little-endian f32 matrix [default: none]
        #[arg(long, requires = "meta")]
        raw: Option<PathBuf>,
        /// Header sidecar of the raw matrix [default: none]
        #[arg(long, requires = "raw")]
        meta: Option<PathBuf>,
        /// Write this many synthetic proteins instead of converting [default: none]
        #[arg(long, conflicts_with = "raw")]
        synthetic: Option<usize>,
        /// Apply the logistic function to the profile block [default: false]
        #[arg(long)]
        logistic: bool,
    },
    /// Train a model and write checkpoints, metrics and reports
    Train {
        /// Continue from checkpoints/last.ps8n in the output directory [default: false]
        #[arg(long)]
        resume: bool,
    },
    /// Report Q8, per-class recall and the confusion matrix of a checkpoint
    Eval {
        /// Checkpoint file [default: none]
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write predicted DSSP letters for every protein
    Predict {
        /// Checkpoint file [default: none]
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every variant of an ablation study
    Ablate {
        /// Study to run: features, modules or skip [default: none]
        #[arg(long)]
        study: Study,
    },
    /// Finite-difference check of every layer type and a tiny network
    Gradcheck,
}

/// Parses `args` and runs the command: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(data) = &common.data {
        cfg.data = Some(data.clone());
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(kind) = common.dataset {
        cfg.dataset = kind;
    }
    if let Some(mode) = common.split_mode {
        cfg.split_mode = mode;
    }
    if let Some(scale) = common.scale {
        cfg.scale = scale;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Preprocess {
            raw,
            meta,
            synthetic,
            logistic,
        } => preprocess(&cfg, cli.common.out.as_deref(), raw, meta, synthetic, logistic),
        Command::Train { resume } => train_command(&cfg, resume),
        Command::Eval { checkpoint } => eval_command(&cfg, &checkpoint),
        Command::Predict { checkpoint } => predict_command(&cfg, &checkpoint, cli.common.out.as_deref()),
        Command::Ablate { study } => ablate_command(&cfg, study),
        Command::Gradcheck => gradcheck_command(&cfg),
    }
}

fn synthetic(cfg: &RunConfig, name: &str, count: usize, stream: u64) -> Dataset {
    let window = cfg.synthetic_window;
    let spec = SyntheticSpec::default();
    synthetic_dataset(&SyntheticSpec {
        name: name.to_string(),
        count,
        window,
        min_len: spec.min_len.min(window),
        max_len: spec.max_len.min(window),
        seed: cfg.train.seed.wrapping_add(stream),
    })
}

fn preprocess(
    cfg: &RunConfig,
    out: Option<&Path>,
    raw: Option<PathBuf>,
    meta: Option<PathBuf>,
    synthetic_count: Option<usize>,
    logistic: bool,
) -> Result<ExitCode> {
    let out = out.ok_or_else(|| Error::Invalid("preprocess needs --out <file>".into()))?;
    let mut dataset = match (raw, meta, synthetic_count) {
        (Some(raw), Some(meta), None) => load_raw_matrix(raw, meta, cfg.model.labels)?,
        (None, None, Some(n)) => synthetic(cfg, "synthetic", n, 0),
        _ => return Err(Error::Invalid("preprocess needs --raw and --meta, or --synthetic <count>".into())),
    };
    if logistic {
        for rec in &mut dataset.records {
            rescale_profile(rec)?;
        }
    }
    save_canonical(&dataset, out)?;
    println!("{} records written to {}", dataset.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

/// Logistic rescaling of the real residues' profile rows; padding stays zero.
fn rescale_profile(rec: &mut ProteinRecord) -> Result<()> {
    let width = rec.profile.len() / rec.mask.len();
    let t = Tensor::new([rec.profile.len()], rec.profile.clone())?;
    let scaled = logistic_rescale(&t);
    for (row, &m) in rec.mask.iter().enumerate() {
        if m {
            let r = row * width..(row + 1) * width;
            rec.profile[r.clone()].copy_from_slice(&scaled.data()[r]);
        }
    }
    Ok(())
}

/// Training pool with train, validation and test index lists.
struct TrainingData {
    dataset: Dataset,
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

fn training_data(cfg: &RunConfig) -> Result<TrainingData> {
    let (dataset, mut train, mut valid, test) = match &cfg.data {
        Some(path) => {
            let dataset = load_canonical(path)?;
            let splits = match cfg.dataset {
                DatasetKind::Cullpdb6133 => split_cullpdb6133(dataset.len(), cfg.split_mode)?,
                DatasetKind::Cullpdb6133Filtered => split_cullpdb6133_filtered(dataset.len(), cfg.train.seed)?,
            };
            (dataset, splits.train.indices, splits.valid.indices, splits.test.indices)
        }
        None => {
            let dataset = synthetic(cfg, "synthetic", cfg.synthetic_count, 0);
            let n_train = (dataset.len() * 9 / 10).clamp(1, dataset.len() - 1);
            (dataset, (0..n_train).collect(), (n_train..cfg.synthetic_count).collect(), Vec::new())
        }
    };
    if cfg.train_limit > 0 {
        train.truncate(cfg.train_limit);
    }
    if valid.is_empty() {
        valid = train.clone();
    }
    Ok(TrainingData {
        dataset,
        train,
        valid,
        test,
    })
}

fn load_test_sets(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    cfg.test_data.iter().map(load_canonical).collect()
}

fn train_command(cfg: &RunConfig, resume: bool) -> Result<ExitCode> {
    let data = training_data(cfg)?;
    let out = OutputDir::create(&cfg.out)?;
    fs::write(out.reports().join("run.cfg"), cfg.to_text())?;
    let mut state = if resume {
        let mut state = TrainState::from_checkpoint(&Checkpoint::load(out.last_checkpoint())?)?;
        state.config.epochs = cfg.train().epochs;
        state
    } else {
        let net = Ps8Net::build(cfg.model(), cfg.train.seed)?;
        TrainState::new(net, cfg.train())?
    };
    println!(
        "training {} parameters on {} proteins ({} validation), {} epochs",
        state.net.param_count(),
        data.train.len(),
        data.valid.len(),
        state.config.epochs
    );
    println!("{}", ps8net::train::METRICS_HEADER);
    train(&mut state, &data.dataset.records, &data.train, &data.valid, Some(&out), |rec| {
        println!("{}", rec.csv_line())
    })?;

    let best = Checkpoint::load(out.best_checkpoint())?.to_model()?;
    let mut tests = load_test_sets(cfg)?;
    if !data.test.is_empty() {
        tests.insert(0, data.dataset.subset(&data.test));
    }
    for test in &tests {
        let report = evaluate_dataset(&best, test, "best", cfg.train.eval_batch_size)?;
        fs::write(out.reports().join(format!("eval_{}.txt", test.name)), report.to_string())?;
        println!("test {}: Q8 {:.4} over {} residues", test.name, report.q8(), report.residues());
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluation_set(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        Some(path) => load_canonical(path),
        None => Ok(synthetic(cfg, "synthetic", cfg.synthetic_count, 1)),
    }
}

fn load_model(path: &Path) -> Result<Ps8Net<f32>> {
    Checkpoint::load(path)?.to_model()
}

fn eval_command(cfg: &RunConfig, checkpoint: &Path) -> Result<ExitCode> {
    let net = load_model(checkpoint)?;
    let dataset = evaluation_set(cfg)?;
    let report = evaluate_dataset(&net, &dataset, &checkpoint.display().to_string(), cfg.train.eval_batch_size)?;
    let out = OutputDir::create(&cfg.out)?;
    fs::write(out.reports().join(format!("eval_{}.txt", dataset.name)), report.to_string())?;
    print!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn predict_command(cfg: &RunConfig, checkpoint: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let net = load_model(checkpoint)?;
    let dataset = evaluation_set(cfg)?;
    let strings = predict(&net, &dataset.records, cfg.train.eval_batch_size)?;
    let mut text = String::new();
    for (i, s) in strings.iter().enumerate() {
        text.push_str(&format!(">{}\n{s}\n", dataset.protein_id(i)));
    }
    match out {
        Some(path) => {
            fs::write(path, &text)?;
            println!("{} predictions written to {}", strings.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate_command(cfg: &RunConfig, study: Study) -> Result<ExitCode> {
    let pool = training_data(cfg)?;
    let mut tests = load_test_sets(cfg)?;
    if !pool.test.is_empty() {
        let mut test = pool.dataset.subset(&pool.test);
        test.name = "cullpdb6133".into();
        tests.push(test);
    }
    if cfg.data.is_none() {
        let count = (cfg.synthetic_count / 4).max(2);
        for (k, name) in study.columns().iter().enumerate() {
            tests.push(synthetic(cfg, name, count, 100 + k as u64));
        }
    }
    let data = AblationData {
        records: pool.dataset.records,
        train: pool.train,
        valid: pool.valid,
        tests,
    };
    let report = run_study(study, &cfg.model(), &cfg.train(), &data, |line| println!("{line}"))?;
    let out = OutputDir::create(&cfg.out)?;
    let path = out.reports().join(format!("ablation_{study}.csv"));
    fs::write(&path, report.to_csv())?;
    print!("{report}");
    println!("written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn gradcheck_command(cfg: &RunConfig) -> Result<ExitCode> {
    let mut ok = true;
    println!("{:<24}{:>16}{:>10}{:>8}", "layer", "max rel error", "checked", "kinks");
    for check in layer_suite(cfg.train.seed)? {
        let r = &check.report;
        let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
        ok &= pass;
        println!(
            "{:<24}{:>16.3e}{:>10}{:>8}  {}",
            check.name,
            r.max_rel_error,
            r.checked,
            r.kink_crossings,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

