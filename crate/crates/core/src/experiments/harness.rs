use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{
    aggregate_quantiles, best_observed, fit_exponents, fit_gap_series, optimality_gap_series,
};
use super::stats::{ExponentFit, FitOptions, GapSeries, LogLogFit, QuantileSeries};
use crate::algorithms::{
    episodes_per_epoch, records_from_csv, resume_training, run_training, Algorithm, Checkpoint,
    CheckpointPolicy, FinalState, Hyperparams, Problem, ThetaInit, TrainLog, TrainOptions,
};
use crate::env::EnvConfig;
use crate::error::{MorlError, Result};
use crate::mdp::Environment;
use crate::scalarization::{OmegaBox, ScalarizationKind, ScalarizationSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "log.csv";
pub const FINAL_FILE: &str = "final.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const QUANTILES_FILE: &str = "quantiles.csv";
pub const GAP_FILE: &str = "gap.csv";
pub const EXPONENTS_FILE: &str = "exponents.json";

/// Default objective weight offset.
pub const DEFAULT_SIGMA: f64 = 1.0;

/// Everything that determines the logs of a set of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algorithm: Algorithm,
    pub hyper: Hyperparams,
    pub scalarization: ScalarizationKind,
    pub sigma: f64,
    pub init: ThetaInit,
    pub runs: usize,
    pub base_seed: u64,
    /// Epochs between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

/// The environment's usual objective: square-root treasure/time trade-off
/// for DeepSeaTreasure, alpha-fairness for Server Queues.
pub fn default_scalarization(env: &EnvConfig) -> ScalarizationKind {
    match env {
        EnvConfig::Dst { .. } => ScalarizationKind::SqrtTreasure,
        EnvConfig::ServerQueues { horizon, .. } => {
            ScalarizationKind::AlphaFairness { horizon: *horizon }
        }
    }
}

impl ExperimentConfig {
    /// Environment horizon and discount are taken from `hyper`.
    pub fn new(env: &EnvConfig, algorithm: Algorithm, hyper: Hyperparams) -> Self {
        let env = env.with_horizon_gamma(hyper.horizon, hyper.gamma);
        Self {
            scalarization: default_scalarization(&env),
            env,
            algorithm,
            hyper,
            sigma: DEFAULT_SIGMA,
            init: ThetaInit::Zeros,
            runs: 1,
            base_seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate(self.algorithm)?;
        if self.runs == 0 {
            return Err(MorlError::Config("runs must be >= 1".into()));
        }
        if self.env.horizon() != self.hyper.horizon || self.env.gamma() != self.hyper.gamma {
            return Err(MorlError::Config(format!(
                "environment (H={}, gamma={}) disagrees with hyperparameters (H={}, gamma={})",
                self.env.horizon(),
                self.env.gamma(),
                self.hyper.horizon,
                self.hyper.gamma
            )));
        }
        if self.base_seed.checked_add(self.runs as u64 - 1).is_none() {
            return Err(MorlError::Config("base seed + run index overflows".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|k| self.base_seed + k).collect()
    }

    pub fn episodes_per_epoch(&self) -> u64 {
        episodes_per_epoch(self.algorithm, &self.hyper)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn scalarization_spec(&self, omega: &OmegaBox) -> Result<ScalarizationSpec> {
        ScalarizationSpec::new(self.scalarization.clone(), self.sigma, omega)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub episodes_per_epoch: u64,
}

impl Manifest {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            config_hash: config.hash(),
            seeds: config.seeds(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            episodes_per_epoch: config.episodes_per_epoch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSet {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub logs: Vec<TrainLog>,
}

impl RunSet {
    /// `f_values()[run][epoch]`
    pub fn f_values(&self) -> Vec<Vec<f64>> {
        self.logs.iter().map(TrainLog::f_values).collect()
    }

    pub fn quantiles(&self) -> Result<QuantileSeries> {
        aggregate_quantiles(&self.f_values(), &[0.25, 0.5, 0.75])
    }

    pub fn median_final(&self) -> Result<f64> {
        let q = self.quantiles()?;
        Ok(q.rows.last().map_or(f64::NAN, |r| r[1]))
    }

    pub fn gap(&self, floor_rel: f64) -> Result<GapSeries> {
        let values = self.f_values();
        let median = self.quantiles()?.column(0.5).expect("median level present");
        Ok(optimality_gap_series(
            &median,
            best_observed(&values),
            floor_rel,
        ))
    }
}

/// Harness settings that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOptions {
    /// Worker threads; 0 uses the rayon default.
    pub parallelism: usize,
    pub out_dir: Option<PathBuf>,
    /// Print one line per checkpoint to standard error.
    pub progress: bool,
}

pub fn run_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("run-{index:03}"))
}

fn write_run(dir: &Path, log: &TrainLog) -> Result<()> {
    fs::write(dir.join(LOG_FILE), log.to_csv())?;
    fs::write(
        dir.join(FINAL_FILE),
        serde_json::to_string_pretty(&log.final_state())? + "\n",
    )?;
    Ok(())
}

/// Loads a finished run written by `run_experiment`.
pub fn load_run(dir: &Path) -> Result<TrainLog> {
    let state: FinalState = serde_json::from_slice(&fs::read(dir.join(FINAL_FILE))?)?;
    let records = records_from_csv(&fs::read_to_string(dir.join(LOG_FILE))?)?;
    Ok(TrainLog::from_parts(state, records))
}

fn train_one(
    config: &ExperimentConfig,
    index: usize,
    options: &ExperimentOptions,
) -> Result<TrainLog> {
    let seed = config.base_seed + index as u64;
    let env = config.env.build()?;
    let policy = env.default_policy();
    let omega = OmegaBox::from_rewards(
        &env.spec().reward_bounds,
        config.hyper.gamma,
        config.hyper.horizon,
    )?;
    let spec = config.scalarization_spec(&omega)?;
    let problem = Problem::new(&env, &policy, &spec);
    let mut train = TrainOptions::new(seed);
    train.init = config.init;
    train.record_wall_time = options.out_dir.is_some();
    let dir = options.out_dir.as_ref().map(|root| run_dir(root, index));
    if let Some(dir) = &dir {
        fs::create_dir_all(dir)?;
        if dir.join(FINAL_FILE).exists() && dir.join(LOG_FILE).exists() {
            return load_run(dir);
        }
        if config.checkpoint_every > 0 {
            train.checkpoint = Some(CheckpointPolicy {
                every: config.checkpoint_every,
                path: dir.join(CHECKPOINT_FILE),
                report: options.progress,
            });
        }
    }
    let checkpoint = dir
        .as_ref()
        .map(|d| d.join(CHECKPOINT_FILE))
        .filter(|p| p.exists());
    let log = match checkpoint {
        Some(path) => resume_training(
            &problem,
            &config.hyper,
            &train,
            Checkpoint::load(&path)?,
            None,
        )?,
        None => run_training(config.algorithm, &problem, &config.hyper, &train, None)?,
    };
    if let Some(dir) = &dir {
        write_run(dir, &log)?;
        let cp = dir.join(CHECKPOINT_FILE);
        if cp.exists() {
            fs::remove_file(cp)?;
        }
    }
    Ok(log)
}

/// Runs `config.runs` independent trainings with seeds `base_seed + k`.
/// With an output directory, each run writes `run-kkk/log.csv` and
/// `final.json`, and the directory gets a `manifest.json`; finished runs are
/// loaded instead of retrained and interrupted ones resume from their
/// checkpoint. Every run is attempted before the first error is returned.
pub fn run_experiment(config: &ExperimentConfig, options: &ExperimentOptions) -> Result<RunSet> {
    config.validate()?;
    if let Some(root) = &options.out_dir {
        fs::create_dir_all(root)?;
        let manifest = Manifest::for_config(config);
        let path = root.join(MANIFEST_FILE);
        if path.exists() {
            let old: Manifest = serde_json::from_slice(&fs::read(&path)?)?;
            if old.config_hash != manifest.config_hash {
                return Err(MorlError::Config(format!(
                    "{} holds runs of a different configuration (hash {})",
                    root.display(),
                    old.config_hash
                )));
            }
        }
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| MorlError::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<TrainLog>> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|k| train_one(config, k, options))
            .collect()
    });
    let logs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let runset = RunSet {
        config: config.clone(),
        seeds: config.seeds(),
        logs,
    };
    if let Some(root) = &options.out_dir {
        fs::write(root.join(QUANTILES_FILE), runset.quantiles()?.to_csv()?)?;
    }
    Ok(runset)
}

/// Result of one `M` in a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub objectives: usize,
    pub runset: RunSet,
    pub gap: GapSeries,
    pub fit: LogLogFit,
}

/// Runs `make_config(M)` for every `M`, fits the gap curve of each and then
/// the exponents. Outputs go to `out_dir/M-<M>/` plus `exponents.json`.
pub fn run_exponent_sweep<F>(
    ms: &[usize],
    make_config: F,
    fit: &FitOptions,
    options: &ExperimentOptions,
) -> Result<(Vec<SweepPoint>, ExponentFit)>
where
    F: Fn(usize) -> Result<ExperimentConfig>,
{
    let mut points = Vec::with_capacity(ms.len());
    for &m in ms {
        let config = make_config(m)?;
        let sub = ExperimentOptions {
            out_dir: options.out_dir.as_ref().map(|d| d.join(format!("M-{m}"))),
            ..options.clone()
        };
        let runset = run_experiment(&config, &sub)?;
        let gap = runset.gap(fit.floor_rel)?;
        if let Some(dir) = &sub.out_dir {
            fs::write(dir.join(GAP_FILE), gap.to_csv())?;
        }
        let f = fit_gap_series(&gap, fit)?;
        points.push(SweepPoint {
            objectives: m,
            runset,
            gap,
            fit: f,
        });
    }
    let pairs: Vec<(usize, LogLogFit)> = points.iter().map(|p| (p.objectives, p.fit)).collect();
    let exponents = fit_exponents(&pairs)?;
    if let Some(root) = &options.out_dir {
        fs::write(
            root.join(EXPONENTS_FILE),
            serde_json::to_string_pretty(&exponents)? + "\n",
        )?;
    }
    Ok((points, exponents))
}
