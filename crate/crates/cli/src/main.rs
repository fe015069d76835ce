//! `apil`: train, evaluate and compare glucose-control policies.
//!
//! Settings are layered: built-in defaults, then `--config`, then flags.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use apil::config::ExperimentConfig;
use apil::eval::{
    bg_profile_script, compare_policies, compute_metrics, rollouts, PlotSeries, PolicyKind, PolicyResults,
};
use apil::imitation::{run_training, IterationLog, TrainingMode};
use apil::patient::PatientConfig;
use apil::policy::{load_checkpoint, save_checkpoint, PolicyNetwork};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "apil", version, about = "Imitation-learned insulin policies: training, evaluation, reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the imitation-learning loop (or the supervised baseline).
    Train(TrainArgs),
    /// Closed-loop test rollouts of one policy.
    Evaluate(EvalArgs),
    /// Summaries and pairwise sign tests over evaluation directories.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment TOML; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    patient: Option<PatientConfig>,
    /// `training`, `unseen` or a path to a meal-spec TOML.
    #[arg(long)]
    meals: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "il")]
    mode: TrainingMode,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    policy: PolicyKind,
    /// Trained network; defaults to the final checkpoint of `train --mode il`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    rollouts: Option<usize>,
    /// Worker threads for rollouts; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Directories written by `evaluate`.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A bad config, flag or input file: exit status 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>()
            || c.downcast_ref::<apil::Error>().is_some_and(|a| {
                matches!(
                    a.root(),
                    apil::Error::Config(_)
                        | apil::Error::Toml(_)
                        | apil::Error::InvalidMealSpec(_)
                        | apil::Error::SeedMismatch(_)
                        | apil::Error::Checkpoint(_)
                )
            })
    })
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn meals_label(meals: &str) -> String {
    Path::new(meals).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| meals.to_string())
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let c = &args.common;
    let mut cfg = load_config(c.config.as_deref())?;
    if let Some(p) = c.patient {
        cfg.training.patient = p;
    }
    if let Some(m) = &c.meals {
        cfg.training.meals = m.clone();
    }
    if let Some(s) = c.seed {
        cfg.training.seed = s;
    }
    cfg.validate()?;
    let dir = c.out.clone().unwrap_or_else(|| cfg.out.join(format!("train-{}", args.mode)));
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let started = Instant::now();
    let mut logs_csv = create(&dir.join("iterations.csv"))?;
    let mut losses_csv = create(&dir.join("losses.csv"))?;
    use std::io::Write;
    writeln!(
        logs_csv,
        "iteration,rho,dataset_size,final_loss,mean_action_gap,mean_matching,mean_cost_excess,unconverged_solves,episode_time_in_range"
    )?;
    writeln!(losses_csv, "iteration,epoch,loss")?;
    let mut hook = |l: &IterationLog, net: &PolicyNetwork| -> apil::Result<()> {
        let path = ckpt_dir.join(format!("theta_{:03}.bin", l.iteration));
        save_checkpoint(net, &path)?;
        writeln!(
            logs_csv,
            "{},{},{},{},{},{},{},{},{}",
            l.iteration,
            l.rho,
            l.dataset_size,
            l.epoch_losses.last().copied().unwrap_or(f64::NAN),
            l.mean_action_gap,
            l.mean_matching,
            l.mean_cost_excess,
            l.unconverged_solves,
            l.episode_time_in_range
        )?;
        for (e, loss) in l.epoch_losses.iter().enumerate() {
            writeln!(losses_csv, "{},{},{}", l.iteration, e + 1, loss)?;
        }
        eprintln!(
            "iteration {:>3}  rho {:.3}  |S| {:>7}  loss {:.4}  ({:.1}s generation, {:.1}s training)",
            l.iteration,
            l.rho,
            l.dataset_size,
            l.epoch_losses.last().copied().unwrap_or(f64::NAN),
            l.generation_seconds,
            l.training_seconds
        );
        Ok(())
    };
    let outcome = run_training(&cfg.training, args.mode, &mut hook)?;
    logs_csv.flush()?;
    losses_csv.flush()?;
    save_checkpoint(&outcome.network, dir.join("policy.bin"))?;
    let mut ds = create(&dir.join("dataset.csv"))?;
    outcome.dataset.write_csv(&mut ds)?;
    ds.flush()?;

    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "train",
            "version": env!("CARGO_PKG_VERSION"),
            "mode": args.mode.to_string(),
            "seed": cfg.training.seed,
            "iterations": cfg.training.iterations,
            "dataset_size": outcome.dataset.len(),
            "basal_mu_per_min": outcome.basal,
            "config": "config.toml",
            "rerun": format!("apil train --config {} --mode {} --out {}", dir.join("config.toml").display(), args.mode, dir.display()),
            "wall_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    println!("{}", dir.display());
    Ok(())
}

fn evaluate(args: EvalArgs) -> anyhow::Result<()> {
    let c = &args.common;
    let mut cfg = load_config(c.config.as_deref())?;
    if let Some(p) = c.patient {
        cfg.eval.patient = p;
    }
    if let Some(m) = &c.meals {
        cfg.eval.meals = m.clone();
    }
    if let Some(s) = c.seed {
        cfg.eval.seed = s;
    }
    if let Some(n) = args.rollouts {
        cfg.eval.rollouts = n;
    }
    cfg.validate()?;
    let policy = args.policy;
    let checkpoint = if policy.needs_network() {
        let p = args.checkpoint.clone().unwrap_or_else(|| cfg.out.join("train-il").join("policy.bin"));
        if !p.is_file() {
            return Err(config_err(format!("{policy} needs a checkpoint; {} does not exist", p.display())));
        }
        Some(p)
    } else {
        None
    };
    let net = match &checkpoint {
        Some(p) => Some(load_checkpoint(p, None)?),
        None => None,
    };
    let setup = cfg.rollout_setup()?;
    let dir = c.out.clone().unwrap_or_else(|| {
        cfg.out.join(format!("eval-{}-{}-{}", policy.cli_name(), cfg.eval.patient.tag(), meals_label(&cfg.eval.meals)))
    });
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let records = pool.install(|| rollouts(policy, net.as_ref(), &setup, cfg.eval.rollouts))?;

    let mut runs = Vec::new();
    let mut metrics_csv = create(&dir.join("metrics.csv"))?;
    let mut timing_csv = create(&dir.join("timing.csv"))?;
    use std::io::Write;
    writeln!(metrics_csv, "index,t_hypo,t_eu,t_hyper,BG_max,BG_min,u")?;
    writeln!(timing_csv, "index,mean_step_seconds,max_step_seconds")?;
    let mut series = Vec::new();
    for r in &records {
        let name = format!("rollout_{:03}.csv", r.index);
        let mut w = create(&dir.join(&name))?;
        r.write_csv(&mut w)?;
        w.flush()?;
        let m = compute_metrics(r)?;
        writeln!(metrics_csv, "{},{},{},{},{},{},{}", r.index, m.t_hypo, m.t_eu, m.t_hyper, m.bg_max, m.bg_min, m.u_mean)?;
        let mean = r.step_seconds.iter().sum::<f64>() / r.step_seconds.len() as f64;
        let max = r.step_seconds.iter().copied().fold(0.0, f64::max);
        writeln!(timing_csv, "{},{},{}", r.index, mean, max)?;
        runs.push((r.index, m));
        series.push(PlotSeries { csv: name, label: format!("{policy} #{}", r.index) });
    }
    metrics_csv.flush()?;
    timing_csv.flush()?;
    series.truncate(5);
    fs::write(dir.join("bg.gp"), bg_profile_script(&series, "bg.png", &format!("{policy}, {} patient", cfg.eval.patient)))?;

    let results = PolicyResults { policy: policy.tag().into(), seed: cfg.eval.seed, runs };
    let single = compare_policies(std::slice::from_ref(&results), cfg.eval.alpha)?;
    let mut summary = create(&dir.join("summary.csv"))?;
    single.write_summary_csv(&mut summary)?;
    summary.flush()?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    let mut rerun = format!(
        "apil evaluate --config {} --policy {} --out {}",
        dir.join("config.toml").display(),
        policy.cli_name(),
        dir.display()
    );
    if let Some(p) = &checkpoint {
        rerun.push_str(&format!(" --checkpoint {}", p.display()));
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "evaluate",
            "version": env!("CARGO_PKG_VERSION"),
            "policy": policy.tag(),
            "patient": cfg.eval.patient.tag(),
            "meals": cfg.eval.meals,
            "seed": cfg.eval.seed,
            "rollouts": cfg.eval.rollouts,
            "checkpoint": checkpoint.as_ref().map(|p| p.display().to_string()),
            "config": "config.toml",
            "rerun": rerun,
            "wall_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    print!("{}", single.to_text());
    println!("{}", dir.display());
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let alpha = args.alpha.unwrap_or(cfg.eval.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(config_err(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let mut results = Vec::new();
    for d in &args.dirs {
        let path = d.join("results.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| config_err(format!("{} is not an evaluation directory: {e}", d.display())))?;
        let r: PolicyResults =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        results.push(r);
    }
    let report = compare_policies(&results, alpha)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.out.join("compare"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = create(&dir.join("summary.csv"))?;
    report.write_summary_csv(&mut w)?;
    let mut w = create(&dir.join("pvalues.csv"))?;
    report.write_tests_csv(&mut w)?;
    let text = report.to_text();
    fs::write(dir.join("report.txt"), &text)?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "compare",
            "version": env!("CARGO_PKG_VERSION"),
            "alpha": alpha,
            "inputs": args.dirs.iter().map(|d| d.display().to_string()).collect::<Vec<_>>(),
            "rerun": format!(
                "apil compare --alpha {alpha} --out {} {}",
                dir.display(),
                args.dirs.iter().map(|d| d.display().to_string()).collect::<Vec<_>>().join(" ")
            ),
        }),
    )?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
