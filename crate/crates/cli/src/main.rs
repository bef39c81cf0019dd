//! `morl`: train, compare and check the multi-objective policy gradient
//! methods from the command line.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use morl_core::experiments::{
    run_experiment, run_exponent_sweep, ExperimentConfig, ExperimentOptions, RunSet,
};
use serde_json::{json, Value};

use config::{ConfigError, Flags, RawConfig};

#[derive(Parser, Debug)]
#[command(
    name = "morl",
    version,
    about = "Multi-objective policy gradient experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one algorithm for a number of seeded runs.
    Run(Common),
    /// Train MO-PG and MO-TSIVR-PG at equal episode budgets.
    Compare(Common),
    /// Sweep the number of queues and fit the gap exponents.
    Exponents(Common),
    /// Check the estimators and trainers against exact oracles.
    Verify,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: dst or server-queues.
    #[arg(long)]
    env: Option<String>,
    /// Algorithm: mo-pg or mo-tsivr-pg.
    #[arg(long)]
    algo: Option<String>,
    /// Theorem schedule: thm1, thm2, thm2-proof, thm3 or thm4.
    #[arg(long)]
    preset: Option<String>,
    /// Number of objectives (queues).
    #[arg(long = "M")]
    objectives: Option<usize>,
    /// Target accuracy for a preset.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Epochs between checkpoints; 0 disables them.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                RawConfig::from_json_text(&text)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => RawConfig::default(),
        };
        raw.apply_flags(&Flags {
            env: self.env.clone(),
            algo: self.algo.clone(),
            preset: self.preset.clone(),
            objectives: self.objectives,
            eps: self.eps,
            runs: self.runs,
            seed: self.seed,
            out: self.out.clone(),
            parallelism: self.parallelism,
            checkpoint_every: self.checkpoint_every,
        })?;
        Ok(raw)
    }
}

/// `out` from the flags or file, else `$MORL_OUT/<label>`, else
/// `morl-out/<label>`.
fn output_dir(given: Option<&Path>, label: &str) -> PathBuf {
    if let Some(p) = given {
        return p.to_path_buf();
    }
    match std::env::var_os("MORL_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(label),
        _ => PathBuf::from("morl-out").join(label),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
}

fn options(parallelism: usize, out: &Path) -> ExperimentOptions {
    ExperimentOptions {
        parallelism,
        out_dir: Some(out.to_path_buf()),
        progress: true,
    }
}

fn summary(set: &RunSet) -> Result<Value> {
    let finals: Vec<f64> = set
        .logs
        .iter()
        .map(|l| l.records.last().map_or(f64::NAN, |r| r.f_value))
        .collect();
    let episodes = set
        .logs
        .first()
        .and_then(|l| l.records.last())
        .map_or(0, |r| r.episodes);
    Ok(json!({
        "algorithm": set.config.algorithm.name(),
        "runs": set.logs.len(),
        "episodes": episodes,
        "median_final_f": set.median_final()?,
        "final_f": finals,
    }))
}

fn label(cfg: &ExperimentConfig) -> String {
    format!(
        "{}-{}-seed{}",
        cfg.env.name(),
        cfg.algorithm.name(),
        cfg.base_seed
    )
}

fn cmd_run(args: &Common) -> Result<()> {
    let raw = args.load()?;
    let (cfg, common) = raw.resolve_run()?;
    let out = output_dir(common.out.as_deref(), &label(&cfg));
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(
        &out.join("config.json"),
        &config::effective_run(&cfg, &common),
    )?;
    eprintln!(
        "{} on {}: {} runs x {} epochs, {} episodes per epoch, output in {}",
        cfg.algorithm,
        cfg.env.name(),
        cfg.runs,
        cfg.hyper.epochs,
        cfg.episodes_per_epoch(),
        out.display()
    );
    let set = run_experiment(&cfg, &options(common.parallelism, &out))?;
    let s = summary(&set)?;
    println!(
        "median final f = {:.6}",
        s["median_final_f"].as_f64().unwrap_or(f64::NAN)
    );
    println!("episodes per run = {}", s["episodes"]);
    println!("output: {}", out.display());
    Ok(())
}

fn cmd_compare(args: &Common) -> Result<()> {
    let raw = args.load()?;
    let (pg, tsivr, common) = raw.resolve_compare()?;
    let out = output_dir(
        common.out.as_deref(),
        &format!("compare-{}-seed{}", pg.env.name(), pg.base_seed),
    );
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(
        &out.join("config.json"),
        &config::effective_compare(&pg, &tsivr, &common),
    )?;
    eprintln!(
        "comparing on {}: {} runs x {} epochs, {} episodes per epoch each, output in {}",
        pg.env.name(),
        pg.runs,
        pg.hyper.epochs,
        pg.episodes_per_epoch(),
        out.display()
    );
    let mut results = Vec::new();
    for cfg in [&pg, &tsivr] {
        let set = run_experiment(
            cfg,
            &options(common.parallelism, &out.join(cfg.algorithm.name())),
        )?;
        results.push(summary(&set)?);
    }
    let (a, b) = (
        results[0]["median_final_f"].as_f64().unwrap_or(f64::NAN),
        results[1]["median_final_f"].as_f64().unwrap_or(f64::NAN),
    );
    let better = if b > a {
        "mo-tsivr-pg"
    } else if a > b {
        "mo-pg"
    } else {
        "tie"
    };
    write_json(
        &out.join("compare.json"),
        &json!({"mo-pg": results[0], "mo-tsivr-pg": results[1], "higher_median": better}),
    )?;
    println!("mo-pg       median final f = {a:.6}");
    println!("mo-tsivr-pg median final f = {b:.6}");
    println!("higher median: {better}");
    println!("output: {}", out.display());
    Ok(())
}

fn cmd_exponents(args: &Common) -> Result<()> {
    let raw = args.load()?;
    let sweep = raw.resolve_sweep()?;
    let out = output_dir(
        sweep.common.out.as_deref(),
        &format!("exponents-seed{}", sweep.common.seed),
    );
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("config.json"), &config::effective_sweep(&sweep))?;
    eprintln!(
        "sweeping M over {:?}, output in {}",
        sweep.m_values,
        out.display()
    );
    let configs = sweep.configs.clone();
    let ms = sweep.m_values.clone();
    let make = |m: usize| {
        let i = ms
            .iter()
            .position(|&x| x == m)
            .expect("M from the sweep list");
        Ok(configs[i].clone())
    };
    let (points, fit) = run_exponent_sweep(
        &sweep.m_values,
        make,
        &sweep.fit,
        &options(sweep.common.parallelism, &out),
    )?;
    for p in &points {
        println!(
            "M = {:3}: q = {:.4}, b = {:.4} from {} points",
            p.objectives, p.fit.q, p.fit.b, p.fit.points
        );
    }
    println!("a_hat = {:.4}", fit.a_hat);
    println!("b_hat = {:.4}", fit.b_hat);
    println!("output: {}", out.display());
    Ok(())
}

fn cmd_verify() -> Result<bool> {
    let checks = morl_core::verify::run_checks();
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!(
            "{:width$}  {}  {}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a).map(|_| true),
        Command::Exponents(a) => cmd_exponents(a).map(|_| true),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
