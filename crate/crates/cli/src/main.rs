//! Command-line surface: synthesize data, train models, score points,
//! evaluate labeled sets, and sanity-check gradients.
//!
//! Every command is a pure function of its input files, flags, and seed;
//! rerunning produces byte-identical outputs. Exit codes: 0 success,
//! 1 numerical failure, 2 usage or input error.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use godsbox_core::data::{self, DataMatrix};
use godsbox_core::inference;
use godsbox_core::manifold::standard_normal_matrix;
use godsbox_core::metrics;
use godsbox_core::models::{
    self, random_kink_free_point, HyperParams, KgodsProblem, ModelFile, ScoringModel, SlackMode,
};
use godsbox_core::rcg::{grad_check, RcgConfig, RcgTrace};
use godsbox_core::{seeded_rng, Error};

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "GODSBOX_SEED";
/// gradcheck fails the run above this relative error.
const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "godsbox",
    version,
    about = "One-class classification with discriminative subspace pairs",
    after_help = "Scores are oriented so that higher = more anomalous."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on one-class training data (anomaly rows are dropped).
    Train(TrainArgs),
    /// Score a dataset with a trained model.
    Score(ScoreArgs),
    /// Threshold scores and report metrics against true labels.
    Eval(EvalArgs),
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Bods,
    Gods,
    Kgods,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SlackArg {
    Zero,
    #[value(name = "closed-form")]
    ClosedForm,
}

impl From<SlackArg> for SlackMode {
    fn from(v: SlackArg) -> Self {
        match v {
            SlackArg::Zero => SlackMode::Zero,
            SlackArg::ClosedForm => SlackMode::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dist {
    Gaussian,
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Kmeans,
    Quantile,
}

/// Hyperparameter and solver overrides shared by train and gradcheck.
/// Precedence: flag > config file > built-in default.
#[derive(Args, Debug, Clone)]
struct TuningArgs {
    /// Hyperplanes per subspace (required for gods/kgods unless configured).
    #[arg(long)]
    k: Option<usize>,
    /// Margin eta.
    #[arg(long)]
    eta: Option<f64>,
    /// Min-side hinge weight nu.
    #[arg(long)]
    nu: Option<f64>,
    /// Slack penalty C (active in closed-form slack mode).
    #[arg(long)]
    c: Option<f64>,
    /// Slack handling.
    #[arg(long, value_enum)]
    slack: Option<SlackArg>,
    /// Force row normalization on.
    #[arg(long, conflicts_with = "no_normalize")]
    normalize: bool,
    /// Disable row normalization.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    rel_obj_tol: Option<f64>,
    #[arg(long)]
    armijo_c1: Option<f64>,
    #[arg(long)]
    backtrack_factor: Option<f64>,
    #[arg(long)]
    init_step: Option<f64>,
    #[arg(long)]
    max_backtracks: Option<usize>,
    #[arg(long)]
    restart_period: Option<usize>,
    /// RNG seed (falls back to GODSBOX_SEED, then 42).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file supplying any of the above; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Training CSV.
    #[arg(long)]
    input: PathBuf,
    /// Label column (name with a header, 0-based index without).
    #[arg(long)]
    label_col: Option<String>,
    /// Treat the first row as data, not a header.
    #[arg(long)]
    no_header: bool,
    /// Output model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Optional per-iteration trace CSV (iter,objective,grad_norm,step).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// Output CSV (row_index,score[,label]).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled test CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label_col: String,
    #[arg(long)]
    no_header: bool,
    /// Thresholding rule.
    #[arg(long, value_enum, default_value = "kmeans")]
    mode: Mode,
    /// Train-score quantile for --mode quantile.
    #[arg(long, default_value_t = 0.95)]
    q: f64,
    /// Training CSV used to compute the quantile threshold.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output report JSON.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    dist: Dist,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Sample count of the seeded probe dataset.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Feature dimension of the seeded probe dataset.
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Random tangent directions to test.
    #[arg(long, default_value_t = 20)]
    probes: usize,
    #[command(flatten)]
    tuning: TuningArgs,
}

/// JSON config document; every field optional, flags override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    k: Option<usize>,
    eta: Option<f64>,
    nu: Option<f64>,
    c: Option<f64>,
    slack: Option<SlackMode>,
    normalize_rows: Option<bool>,
    max_iter: Option<usize>,
    grad_tol: Option<f64>,
    rel_obj_tol: Option<f64>,
    armijo_c1: Option<f64>,
    backtrack_factor: Option<f64>,
    init_step: Option<f64>,
    max_backtracks: Option<usize>,
    restart_period: Option<usize>,
    seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", p.display()),
                ))
            })?;
            Ok(serde_json::from_str(&raw)?)
        }
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> Result<u64, Error> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw.parse::<u64>().map_err(|_| {
            Error::invalid(format!(
                "{SEED_ENV} must be an unsigned integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn resolve_hyper(t: &TuningArgs, cfg: &FileConfig, algo: Algo) -> Result<HyperParams, Error> {
    let defaults = HyperParams::default();
    let k = match algo {
        Algo::Bods => 1,
        _ => t.k.or(cfg.k).ok_or_else(|| {
            Error::invalid("--k is required for gods/kgods (or supply it via --config)")
        })?,
    };
    let normalize_rows = if t.no_normalize {
        false
    } else if t.normalize {
        true
    } else {
        cfg.normalize_rows.unwrap_or(defaults.normalize_rows)
    };
    let hyper = HyperParams {
        k,
        eta: t.eta.or(cfg.eta).unwrap_or(defaults.eta),
        nu: t.nu.or(cfg.nu).unwrap_or(defaults.nu),
        c: t.c.or(cfg.c).unwrap_or(defaults.c),
        normalize_rows,
        slack: t
            .slack
            .map(SlackMode::from)
            .or(cfg.slack)
            .unwrap_or(defaults.slack),
    };
    hyper.validate()?;
    Ok(hyper)
}

fn resolve_rcg(t: &TuningArgs, cfg: &FileConfig) -> Result<RcgConfig, Error> {
    let d = RcgConfig::default();
    let out = RcgConfig {
        max_iter: t.max_iter.or(cfg.max_iter).unwrap_or(d.max_iter),
        grad_tol: t.grad_tol.or(cfg.grad_tol).unwrap_or(d.grad_tol),
        rel_obj_tol: t.rel_obj_tol.or(cfg.rel_obj_tol).unwrap_or(d.rel_obj_tol),
        armijo_c1: t.armijo_c1.or(cfg.armijo_c1).unwrap_or(d.armijo_c1),
        backtrack_factor: t
            .backtrack_factor
            .or(cfg.backtrack_factor)
            .unwrap_or(d.backtrack_factor),
        init_step: t.init_step.or(cfg.init_step).unwrap_or(d.init_step),
        max_backtracks: t
            .max_backtracks
            .or(cfg.max_backtracks)
            .unwrap_or(d.max_backtracks),
        restart_period: t.restart_period.or(cfg.restart_period).or(d.restart_period),
    };
    out.validate()?;
    Ok(out)
}

fn write_trace_csv(path: &Path, trace: &RcgTrace) -> Result<(), Error> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iter,objective,grad_norm,step")?;
    for rec in &trace.records {
        writeln!(
            out,
            "{},{},{},{}",
            rec.iter,
            data::fmt_f64(rec.objective),
            data::fmt_f64(rec.grad_norm),
            data::fmt_f64(rec.step)
        )?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let cfg = load_config(args.tuning.config.as_deref())?;
    let seed = resolve_seed(args.tuning.seed, &cfg)?;
    let hyper = resolve_hyper(&args.tuning, &cfg, args.algo)?;
    let rcg = resolve_rcg(&args.tuning, &cfg)?;

    let raw = data::load_csv(&args.input, args.label_col.as_deref(), !args.no_header)?;
    let (train, dropped) = raw.normals_only()?;
    if dropped > 0 {
        eprintln!(
            "dropped {dropped} anomaly rows for one-class training ({} remain)",
            train.n()
        );
    }

    let (file, trace) = match args.algo {
        Algo::Bods => {
            let (model, trace) = models::fit_bods(&train, &hyper, &rcg, seed)?;
            (ModelFile::from_bods(&model), trace)
        }
        Algo::Gods => {
            let (model, trace) = models::fit_gods(&train, &hyper, &rcg, seed)?;
            (ModelFile::from_gods(&model), trace)
        }
        Algo::Kgods => {
            let (model, trace) = models::fit_kgods(&train, &hyper, &rcg, seed)?;
            (ModelFile::from_kgods(&model), trace)
        }
    };
    models::write_model(&args.model, &file)?;
    if let Some(trace_path) = &args.trace {
        write_trace_csv(trace_path, &trace)?;
    }
    eprintln!(
        "trained {} on {} points: objective {:.6e} -> {:.6e} in {} iterations",
        file.model_type,
        train.n(),
        trace.initial_objective(),
        trace.final_objective(),
        trace.iterations()
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<(), Error> {
    let model = ScoringModel::from_file(&models::read_model(&args.model)?)?;
    let dm = data::load_csv(&args.input, args.label_col.as_deref(), !args.no_header)?;
    let scores = model.score_matrix(&dm)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.output)?);
    if dm.labels().is_some() {
        writeln!(out, "row_index,score,label")?;
    } else {
        writeln!(out, "row_index,score")?;
    }
    for (i, s) in scores.iter().enumerate() {
        match dm.labels() {
            Some(l) => writeln!(
                out,
                "{i},{},{}",
                data::fmt_f64(*s),
                if l[i] == 1 { "+1" } else { "-1" }
            )?,
            None => writeln!(out, "{i},{}", data::fmt_f64(*s))?,
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let model = ScoringModel::from_file(&models::read_model(&args.model)?)?;
    let dm = data::load_csv(&args.input, Some(args.label_col.as_str()), !args.no_header)?;
    let truth: Vec<i8> = dm
        .labels()
        .ok_or_else(|| Error::validation("eval needs a labeled test set"))?
        .to_vec();
    let scores = model.score_matrix(&dm)?;

    let (labels, threshold) = match args.mode {
        Mode::Kmeans => inference::classify_kmeans2(&scores)?,
        Mode::Quantile => {
            let train_path = args.train.as_ref().ok_or_else(|| {
                Error::invalid("--mode quantile needs --train to compute the threshold")
            })?;
            // The training file may be unlabeled; fall back when the label
            // column is missing from its header.
            let train_raw =
                match data::load_csv(train_path, Some(args.label_col.as_str()), !args.no_header) {
                    Ok(dm) => dm,
                    Err(Error::InvalidArgument(_)) => {
                        data::load_csv(train_path, None, !args.no_header)?
                    }
                    Err(e) => return Err(e),
                };
            let (train_normals, _) = train_raw.normals_only()?;
            let train_scores = model.score_matrix(&train_normals)?;
            inference::classify_quantile(&train_scores, &scores, args.q)?
        }
    };
    let pred: Vec<i8> = labels.iter().map(|l| l.as_i8()).collect();

    let mut rep = metrics::report(&pred, &truth)?;
    rep.auc = Some(metrics::auc(&scores, &truth)?);
    rep.false_alarm_rate = Some(metrics::false_alarm_rate(&pred, &truth)?);

    let json = serde_json::to_string_pretty(&rep)?;
    std::fs::write(&args.report, json + "\n")?;

    println!("F1: {:.4}", rep.f1);
    println!("F1-bar: {:.4}", rep.f1_bar);
    println!("accuracy: {:.4}", rep.accuracy);
    eprintln!("threshold ({:?}): {}", args.mode, data::fmt_f64(threshold));
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let dm = match args.dist {
        Dist::Gaussian => data::gen_gaussian(args.n, seed)?,
        Dist::Arbitrary => data::gen_arbitrary(args.n, seed)?,
    };
    data::save_csv(&dm, &args.output, true)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), Error> {
    let cfg = load_config(args.tuning.config.as_deref())?;
    let seed = resolve_seed(args.tuning.seed, &cfg)?;
    let mut hyper = resolve_hyper(&args.tuning, &cfg, args.algo)?;
    hyper.normalize_rows = false; // probe raw coordinates
    if args.n == 0 || args.d == 0 {
        return Err(Error::invalid("--n and --d must be positive"));
    }

    let mut rng = seeded_rng(seed);
    let dm = DataMatrix::new(standard_normal_matrix(args.n, args.d, &mut rng), None, None)?;

    let err = match args.algo {
        Algo::Gods => {
            let point = random_kink_free_point(&dm, &hyper, seed.wrapping_add(1))?;
            grad_check(
                |p| models::gods_objective_grad(&dm, p, &hyper),
                &point,
                args.probes,
                seed.wrapping_add(2),
            )?
        }
        Algo::Bods => {
            let point = random_kink_free_point(&dm, &hyper, seed.wrapping_add(1))?;
            grad_check(
                |p| models::bods_objective_grad(&dm, p, &hyper),
                &point,
                args.probes,
                seed.wrapping_add(2),
            )?
        }
        Algo::Kgods => {
            let problem = KgodsProblem::new(&dm, &hyper)?;
            let pair = problem.init(seed.wrapping_add(1))?;
            grad_check(
                |p| problem.objective(p),
                &pair,
                args.probes,
                seed.wrapping_add(2),
            )?
        }
    };

    println!("max relative gradient error: {err:.3e}");
    if err > GRADCHECK_TOL {
        return Err(Error::degenerate_numeric(format!(
            "gradient check failed: {err:.3e} exceeds {GRADCHECK_TOL:.0e}"
        )));
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
