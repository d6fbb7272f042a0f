//! The `hdfa` command line.

use crate::checkpoint::{load_bank, save_bank};
use crate::config::RunConfig;
use crate::error::{CliError, Result, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use crate::features::{check_labels, format_features, format_rows, load_features, write_text, Ingest};
use crate::metrics::Metrics;
use crate::parallel::run_episodes_parallel;
use clap::{Args, Parser, Subcommand};
use hdfa_core::estimator::{BankConfig, EstimatorBank, Provenance};
use hdfa_core::geometry::{raw, BALL_EPS};
use hdfa_core::harness::{generate_tree_data, run_replay_lite, EpisodeSpec, FeatureTable, Mode, ReplayConfig, SyntheticTreeSpec};
use hdfa_core::selfcheck;
use hdfa_core::trainer::{augment, meta_train_with, InnerConfig, MetaConfig, MetaDataset, SplitRatio};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "hdfa", version, about = "Hyperbolic dual feature augmentation on feature files")]
pub struct Cli {
    /// key = value file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic hierarchical feature file.
    Gen(GenArgs),
    /// Meta-train the estimator networks and write a checkpoint.
    MetaTrain(MetaTrainArgs),
    /// Episodic or replay evaluation; prints metrics JSON.
    Eval(EvalArgs),
    /// Sample augmented features from seen and synthesized classes.
    Augment(AugmentArgs),
    /// Run the numerical self-checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Leaf classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Parent nodes above the leaves.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Children per level, e.g. `2,4`; overrides --groups.
    #[arg(long)]
    pub branching: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub class_spread: Option<f64>,
    #[arg(long)]
    pub within_spread: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub curvature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write ball coordinates instead of tangent vectors.
    #[arg(long)]
    pub raw_ball: bool,
}

#[derive(Debug, Args, Default)]
pub struct InnerArgs {
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct BankArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub ode_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub c0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetaTrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Training to validation ratio, e.g. `1:15`.
    #[arg(long)]
    pub split: Option<String>,
    /// Classes drawn per outer iteration; all when absent.
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub raw_ball: bool,
    #[command(flatten)]
    pub inner: InnerArgs,
    #[command(flatten)]
    pub bank: BankArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Feature file; repeat for the stages of a replay stream.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// no_aug, seen_aug or dual_aug.
    #[arg(long)]
    pub mode: Option<String>,
    /// episodes or replay.
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replay: features kept per past class.
    #[arg(long)]
    pub buffer: Option<usize>,
    /// Replay: split a single file into this many stages of consecutive labels.
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Curvature used without a checkpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub c0: Option<f64>,
    /// Also write the metrics here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub raw_ball: bool,
    #[command(flatten)]
    pub inner: InnerArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Samples per seen and per synthesized class.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read ball coordinates.
    #[arg(long)]
    pub raw_ball: bool,
    /// Write ball coordinates instead of tangent vectors.
    #[arg(long)]
    pub ball_out: bool,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// all, geometry, rk4, gradient or bound.
    #[arg(long)]
    pub suite: Option<String>,
    /// Bound suite: random configurations.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Bound suite: Monte-Carlo draws per configuration.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Geometry suite: identities checked.
    #[arg(long)]
    pub checks: Option<usize>,
    /// Gradient suite: instances per operation.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, hide = true)]
    pub ball_eps: Option<f64>,
}

fn required(v: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    v.ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

fn at_least(v: usize, min: usize, flag: &str) -> Result<usize> {
    if v < min {
        return Err(CliError::usage(format!("--{flag} must be at least {min}, got {v}")));
    }
    Ok(v)
}

fn finite_in(v: f64, ok: bool, flag: &str, what: &str) -> Result<f64> {
    if !(v.is_finite() && ok) {
        return Err(CliError::usage(format!("--{flag} must be {what}, got {v}")));
    }
    Ok(v)
}

fn parse_split(s: &str) -> Result<SplitRatio> {
    let bad = || CliError::usage(format!("--split expects train:validation, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let train: u32 = a.trim().parse().map_err(|_| bad())?;
    let validation: u32 = b.trim().parse().map_err(|_| bad())?;
    if train == 0 || validation == 0 {
        return Err(bad());
    }
    Ok(SplitRatio { train, validation })
}

fn parse_branching(s: &str) -> Result<Vec<usize>> {
    let out = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().ok().filter(|&b| b > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::usage(format!("--branching expects positive counts like 2,4, got `{s}`")))?;
    if out.is_empty() {
        return Err(CliError::usage("--branching is empty"));
    }
    Ok(out)
}

fn inner_config(cfg: &RunConfig, a: &InnerArgs) -> Result<InnerConfig> {
    let d = InnerConfig::default();
    let steps = at_least(cfg.pick(a.inner_steps, "inner-steps", d.steps)?, 1, "inner-steps")?;
    let lr = cfg.pick(a.inner_lr, "inner-lr", d.lr)?;
    let tol = cfg.pick(a.inner_tol, "inner-tol", d.tol)?;
    Ok(InnerConfig {
        steps,
        lr: finite_in(lr, lr >= 0.0, "inner-lr", "non-negative")?,
        tol: finite_in(tol, true, "inner-tol", "finite")?,
    })
}

fn bank_config(cfg: &RunConfig, a: &BankArgs) -> Result<BankConfig> {
    let d = BankConfig::default();
    let horizon = cfg.pick(a.horizon, "horizon", d.horizon)?;
    let c0 = cfg.pick(a.c0, "c0", d.c0)?;
    Ok(BankConfig {
        hidden: at_least(cfg.pick(a.hidden, "hidden", d.hidden)?, 1, "hidden")?,
        horizon: finite_in(horizon, horizon > 0.0, "horizon", "positive")?,
        steps: at_least(cfg.pick(a.ode_steps, "ode-steps", d.steps)?, 1, "ode-steps")?,
        c0: finite_in(c0, c0 < 0.0, "c0", "negative")?,
    })
}

fn ingest(cfg: &RunConfig, raw_ball: bool, c: f64) -> Result<Ingest> {
    Ok(if cfg.flag(raw_ball, "raw-ball")? {
        Ingest::Ball(c)
    } else {
        Ingest::Tangent
    })
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn cmd_gen(cfg: &RunConfig, a: GenArgs, out: &mut dyn Write) -> Result<()> {
    let d = SyntheticTreeSpec::default();
    let classes = at_least(cfg.pick(a.classes, "classes", d.leaves)?, 1, "classes")?;
    let groups = at_least(cfg.pick(a.groups, "groups", d.branching[0])?, 1, "groups")?;
    let branching = match cfg.lookup(a.branching, "branching")? {
        Some(s) => parse_branching(&s)?,
        None => SyntheticTreeSpec::with_groups(classes, groups).branching,
    };
    let class_spread = cfg.pick(a.class_spread, "class-spread", d.class_spread)?;
    let within_spread = cfg.pick(a.within_spread, "within-spread", d.within_spread)?;
    let curvature = cfg.pick(a.curvature, "curvature", d.curvature)?;
    let spec = SyntheticTreeSpec {
        branching,
        leaves: classes,
        samples_per_class: at_least(cfg.pick(a.samples, "samples", d.samples_per_class)?, 1, "samples")?,
        class_spread: finite_in(class_spread, class_spread >= 0.0, "class-spread", "non-negative")?,
        within_spread: finite_in(within_spread, within_spread >= 0.0, "within-spread", "non-negative")?,
        dim: at_least(cfg.pick(a.dim, "dim", d.dim)?, 1, "dim")?,
        curvature: finite_in(curvature, curvature < 0.0, "curvature", "negative")?,
        seed: cfg.pick(a.seed, "seed", d.seed)?,
    };
    if spec.leaves > spec.capacity() {
        return Err(CliError::usage(format!(
            "--classes {} exceeds the {} leaves of the tree",
            spec.leaves,
            spec.capacity()
        )));
    }
    let table = generate_tree_data(&spec)?;
    let text = if cfg.flag(a.raw_ball, "raw-ball")? {
        let rows: Vec<(String, Vec<f64>)> = table
            .rows()
            .iter()
            .map(|(l, v)| (l.clone(), raw::expm0(v, spec.curvature)))
            .collect();
        format_rows(table.dim(), spec.curvature, &[], &rows)
    } else {
        format_features(&table)
    };
    let path = cfg.lookup(a.out, "out")?;
    emit(out, path.as_deref(), &text)
}

fn meta_config(cfg: &RunConfig, a: &MetaTrainArgs) -> Result<MetaConfig> {
    let d = MetaConfig::default();
    let split = match cfg.lookup(a.split.clone(), "split")? {
        Some(s) => parse_split(&s)?,
        None => d.split,
    };
    let ways = cfg.lookup(a.ways, "ways")?.map(|w| at_least(w, 2, "ways")).transpose()?;
    let lr = cfg.pick(a.lr, "lr", d.lr)?;
    let beta = cfg.pick(a.beta, "beta", d.beta)?;
    let gamma = cfg.pick(a.gamma, "gamma", d.gamma)?;
    let m = MetaConfig {
        iterations: cfg.pick(a.iterations, "iterations", d.iterations)?,
        lr: finite_in(lr, lr > 0.0, "lr", "positive")?,
        beta: finite_in(beta, beta >= 0.0, "beta", "non-negative")?,
        gamma: finite_in(gamma, (0.01..=0.25).contains(&gamma), "gamma", "within [0.01, 0.25]")?,
        split,
        ways,
        seed: cfg.pick(a.seed, "seed", d.seed)?,
        inner: inner_config(cfg, &a.inner)?,
    };
    m.validate()?;
    Ok(m)
}

fn cmd_meta_train(cfg: &RunConfig, a: MetaTrainArgs, out: &mut dyn Write) -> Result<()> {
    let data = required(cfg.lookup(a.data.clone(), "data")?, "data")?;
    let ckpt = required(cfg.lookup(a.out.clone(), "out")?, "out")?;
    let meta = meta_config(cfg, &a)?;
    let init = cfg.lookup(a.init.clone(), "init")?;
    let bank = match init {
        Some(p) => load_bank(&p)?,
        None => {
            let bc = bank_config(cfg, &a.bank)?;
            let table = load_features(&data, ingest(cfg, a.raw_ball, bc.c0)?)?;
            EstimatorBank::new(table.dim(), &bc, meta.seed)?
        }
    };
    let table = load_features(&data, ingest(cfg, a.raw_ball, bank.c0().value())?)?;
    if table.dim() != bank.dim() {
        return Err(CliError::usage(format!(
            "features have dimension {} but the bank expects {}",
            table.dim(),
            bank.dim()
        )));
    }
    let (labels, tangents) = table.grouped().into_iter().unzip();
    let dataset = MetaDataset::new(labels, tangents)?;
    let mut write_err = None;
    let run = meta_train_with(&bank, &dataset, &meta, |i, loss| {
        if write_err.is_none() {
            write_err = writeln!(out, "iteration {i} meta_loss {loss}").err();
        }
    })?;
    if let Some(source) = write_err {
        return Err(CliError::Io {
            path: "<stdout>".into(),
            source,
        });
    }
    save_bank(&run.bank, &ckpt)
}

fn split_stages(table: &FeatureTable, stages: usize) -> Result<Vec<FeatureTable>> {
    let labels = table.labels();
    if stages == 0 || stages > labels.len() {
        return Err(CliError::usage(format!(
            "--stages must lie in 1..={}, got {stages}",
            labels.len()
        )));
    }
    let per = labels.len().div_ceil(stages);
    let mut out = Vec::with_capacity(stages);
    for chunk in labels.chunks(per) {
        let rows = table
            .rows()
            .iter()
            .filter(|(l, _)| chunk.contains(&l.as_str()))
            .cloned()
            .collect();
        out.push(FeatureTable::new(table.dim(), rows)?);
    }
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig, a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut data = a.data.clone();
    if data.is_empty() {
        data.push(required(cfg.lookup(None, "data")?, "data")?);
    }
    let mode: Mode = cfg
        .pick(a.mode.clone(), "mode", Mode::DualAug.name().to_string())?
        .parse()
        .map_err(|_| CliError::usage("--mode must be no_aug, seen_aug or dual_aug"))?;
    let protocol = cfg.pick(a.protocol.clone(), "protocol", "episodes".to_string())?;
    let inner = inner_config(cfg, &a.inner)?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let checkpoint = cfg.lookup(a.checkpoint.clone(), "checkpoint")?;
    let c0 = cfg.pick(a.c0, "c0", BankConfig::default().c0)?;
    let c0 = finite_in(c0, c0 < 0.0, "c0", "negative")?;
    let bank = match (&checkpoint, mode) {
        (Some(p), _) => Some(load_bank(p)?),
        (None, Mode::NoAug) => None,
        (None, _) => return Err(CliError::usage(format!("--checkpoint is required for --mode {mode}"))),
    };
    let c_in = bank.as_ref().map_or(c0, |b| b.c0().value());
    let how = ingest(cfg, a.raw_ball, c_in)?;
    let tables = data.iter().map(|p| load_features(p, how)).collect::<Result<Vec<_>>>()?;
    let dim = tables[0].dim();
    if let Some(t) = tables.iter().find(|t| t.dim() != dim) {
        return Err(CliError::usage(format!("feature files mix dimensions {dim} and {}", t.dim())));
    }
    let bank = match bank {
        Some(b) if b.dim() != dim => {
            return Err(CliError::usage(format!(
                "features have dimension {dim} but the checkpoint expects {}",
                b.dim()
            )))
        }
        Some(b) => b,
        None => EstimatorBank::new(
            dim,
            &BankConfig {
                hidden: 1,
                c0,
                ..BankConfig::default()
            },
            0,
        )?,
    };
    let metrics = match protocol.as_str() {
        "episodes" => {
            if tables.len() != 1 {
                return Err(CliError::usage("the episodes protocol takes one --data file"));
            }
            let d = EpisodeSpec::default();
            let spec = EpisodeSpec {
                ways: at_least(cfg.pick(a.ways, "ways", d.ways)?, 2, "ways")?,
                shots: at_least(cfg.pick(a.shots, "shots", d.shots)?, 1, "shots")?,
                queries: at_least(cfg.pick(a.queries, "queries", d.queries)?, 1, "queries")?,
                episodes: at_least(cfg.pick(a.episodes, "episodes", d.episodes)?, 1, "episodes")?,
                seed,
            };
            let threads = at_least(cfg.pick(a.threads, "threads", 1)?, 1, "threads")?;
            let m = run_episodes_parallel(&bank, &tables[0], &spec, mode, &inner, threads)?;
            Metrics::episodes(&m)
        }
        "replay" => {
            let stages = match cfg.lookup(a.stages, "stages")? {
                Some(k) if tables.len() == 1 => split_stages(&tables[0], k)?,
                Some(_) => return Err(CliError::usage("--stages needs a single --data file")),
                None => tables,
            };
            let d = ReplayConfig::default();
            let test_fraction = cfg.pick(a.test_fraction, "test-fraction", d.test_fraction)?;
            let rc = ReplayConfig {
                buffer_per_class: at_least(cfg.pick(a.buffer, "buffer", d.buffer_per_class)?, 1, "buffer")?,
                mode,
                inner,
                test_fraction: finite_in(
                    test_fraction,
                    test_fraction > 0.0 && test_fraction < 1.0,
                    "test-fraction",
                    "within (0, 1)",
                )?,
                seed,
            };
            let per_stage = run_replay_lite(&bank, &stages, &rc)?;
            Metrics::replay(mode.name(), seed, rc.buffer_per_class, &per_stage)
        }
        other => return Err(CliError::usage(format!("--protocol must be episodes or replay, got `{other}`"))),
    };
    let text = metrics.to_json();
    if let Some(p) = cfg.lookup(a.out, "out")? {
        write_text(&p, &text)?;
    }
    emit(out, None, &text)
}

fn cmd_augment(cfg: &RunConfig, a: AugmentArgs, out: &mut dyn Write) -> Result<()> {
    let data = required(cfg.lookup(a.data.clone(), "data")?, "data")?;
    let bank = load_bank(&required(cfg.lookup(a.checkpoint.clone(), "checkpoint")?, "checkpoint")?)?;
    let draws = at_least(cfg.pick(a.draws, "draws", 10)?, 1, "draws")?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let table = load_features(&data, ingest(cfg, a.raw_ball, bank.c0().value())?)?;
    if table.dim() != bank.dim() {
        return Err(CliError::usage(format!(
            "features have dimension {} but the checkpoint expects {}",
            table.dim(),
            bank.dim()
        )));
    }
    let feats = augment(&bank, &table.points(bank.c0()), draws, seed)?;
    let c = feats.first().map_or(bank.c0(), |f| f.point.curvature()).value();
    let ball_out = cfg.flag(a.ball_out, "ball-out")?;
    let rows: Vec<(String, Vec<f64>)> = feats
        .iter()
        .map(|f| {
            let v = if ball_out {
                f.point.coords().to_vec()
            } else {
                raw::logm0(f.point.coords(), c)
            };
            (f.label.clone(), v)
        })
        .collect();
    check_labels(rows.iter().map(|(l, _)| l.as_str()))?;
    let mut unseen: Vec<String> = Vec::new();
    for f in &feats {
        let tag = format!("unseen={}", f.label);
        if f.provenance == Provenance::Unseen && !unseen.contains(&tag) {
            unseen.push(tag);
        }
    }
    let text = format_rows(table.dim(), c, &unseen, &rows);
    let path = cfg.lookup(a.out, "out")?;
    emit(out, path.as_deref(), &text)
}

fn cmd_selfcheck(cfg: &RunConfig, a: SelfcheckArgs, out: &mut dyn Write) -> Result<bool> {
    let suite = cfg.pick(a.suite, "suite", "all".to_string())?;
    let names = ["geometry", "rk4", "gradient", "bound"];
    let chosen: Vec<&str> = match suite.as_str() {
        "all" => names.to_vec(),
        s if names.contains(&s) => vec![names[names.iter().position(|n| *n == s).unwrap()]],
        s => return Err(CliError::usage(format!("--suite must be all, {}, got `{s}`", names.join(", ")))),
    };
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let checks = at_least(cfg.pick(a.checks, "checks", 1_000_000)?, 1, "checks")?;
    let instances = at_least(cfg.pick(a.instances, "instances", 20)?, 1, "instances")?;
    let trials = at_least(cfg.pick(a.trials, "trials", 200)?, 1, "trials")?;
    let draws = at_least(cfg.pick(a.draws, "draws", 100_000)?, 1, "draws")?;
    let eps = cfg.pick(a.ball_eps, "ball-eps", BALL_EPS)?;
    let eps = finite_in(eps, (0.0..=1.0).contains(&eps), "ball-eps", "within [0, 1]")?;
    let mut all = true;
    for name in chosen {
        let rep = match name {
            "geometry" => selfcheck::geometry_suite(checks, seed, eps),
            "rk4" => selfcheck::rk4_suite(),
            "gradient" => selfcheck::gradient_suite(instances, seed),
            _ => selfcheck::bound_suite(trials, draws, seed),
        };
        all &= rep.passed;
        writeln!(
            out,
            "{} {}: {} checks, {} failures; {}",
            if rep.passed { "PASS" } else { "FAIL" },
            rep.name,
            rep.checks,
            rep.failures,
            rep.detail
        )
        .map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        })?;
    }
    Ok(all)
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let code = match cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a, out).map(|_| EXIT_OK),
        Command::MetaTrain(a) => cmd_meta_train(&cfg, a, out).map(|_| EXIT_OK),
        Command::Eval(a) => cmd_eval(&cfg, a, out).map(|_| EXIT_OK),
        Command::Augment(a) => cmd_augment(&cfg, a, out).map(|_| EXIT_OK),
        Command::Selfcheck(a) => cmd_selfcheck(&cfg, a, out).map(|ok| if ok { EXIT_OK } else { EXIT_NUMERIC }),
    }?;
    for k in cfg.unused() {
        let _ = writeln!(err, "warning: config key `{k}` is not used by this command");
    }
    Ok(code)
}
