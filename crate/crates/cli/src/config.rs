//! Run configuration: a JSON file with sections `env`, `algo`, `hyper`,
//! `scalarization`, `experiment` and `compare`, flat shorthands for the
//! common keys, and command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use morl_core::algorithms::{
    episodes_per_epoch, theorem_schedule, Algorithm, Hyperparams, Preset, ScheduleConstants,
    ThetaInit,
};
use morl_core::env::EnvConfig;
use morl_core::experiments::{
    default_scalarization, ExperimentConfig, FitOptions, DEFAULT_FLOOR_REL, DEFAULT_SIGMA,
};
use morl_core::mdp::Environment;
use morl_core::policy::PolicyConstants;
use morl_core::scalarization::{OmegaBox, ScalarizationKind, ScalarizationSpec};
use serde_json::{json, Map, Value};

pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_BATCH_PG: usize = 288;
pub const DEFAULT_BATCH_TSIVR: usize = 144;
pub const DEFAULT_INNER_BATCH: usize = 12;
pub const DEFAULT_INNER_ITERS: usize = 13;
pub const DEFAULT_RADIUS: f64 = 1.0;
pub const DEFAULT_ETA_DST: f64 = 0.01;
pub const DEFAULT_ETA_QUEUES: f64 = 0.001;
pub const DEFAULT_QUEUES: usize = 8;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 200;
pub const DEFAULT_M_VALUES: [usize; 5] = [8, 12, 16, 32, 64];

/// A configuration problem, reported with the offending key path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Common misspellings mapped to the canonical key.
const ALIASES: &[(&str, &str)] = &[
    ("batchsize", "N"),
    ("batch_size", "N"),
    ("batch", "N"),
    ("n", "N"),
    ("epochs", "T"),
    ("t", "T"),
    ("horizon", "H"),
    ("h", "H"),
    ("step_size", "eta"),
    ("stepsize", "eta"),
    ("lr", "eta"),
    ("learning_rate", "eta"),
    ("radius", "delta"),
    ("inner_iters", "m"),
    ("inner_batch", "B"),
    ("b", "B"),
    ("discount", "gamma"),
    ("num_runs", "runs"),
    ("epsilon", "eps"),
    ("objectives", "M"),
    ("algorithm", "algo"),
    ("environment", "env"),
    ("output", "out"),
    ("threads", "parallelism"),
    ("jobs", "parallelism"),
];

/// Best replacement for an unknown key among `allowed`.
pub fn suggest(key: &str, allowed: &[&str]) -> Option<String> {
    let lower = key.to_ascii_lowercase();
    for (alias, target) in ALIASES {
        if *alias == key || *alias == lower {
            if allowed.contains(target) {
                return Some((*target).to_string());
            }
        }
    }
    allowed
        .iter()
        .map(|a| (strsim::jaro_winkler(&lower, &a.to_ascii_lowercase()), *a))
        .filter(|(score, _)| *score >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, a)| a.to_string())
}

fn unknown_key(path: &str, key: &str, allowed: &[&str]) -> ConfigError {
    let full = if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    };
    match suggest(key, allowed) {
        Some(s) => ConfigError(format!("unknown key `{full}`; did you mean `{s}`?")),
        None => ConfigError(format!(
            "unknown key `{full}`; expected one of: {}",
            allowed.join(", ")
        )),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| ConfigError(format!("`{path}` must be a non-negative integer, got {v}")))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| ConfigError(format!("`{path}` must be a number, got {v}")))
}

fn as_str<'v>(v: &'v Value, path: &str) -> Result<&'v str> {
    v.as_str()
        .ok_or_else(|| ConfigError(format!("`{path}` must be a string, got {v}")))
}

fn as_object<'v>(v: &'v Value, path: &str) -> Result<&'v Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| ConfigError(format!("`{path}` must be an object, got {v}")))
}

fn as_f64_list(v: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConfigError(format!("`{path}` must be an array of numbers")))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| as_f64(x, &format!("{path}[{i}]")))
        .collect()
}

fn as_usize_list(v: &Value, path: &str) -> Result<Vec<usize>> {
    let arr = v
        .as_array()
        .ok_or_else(|| ConfigError(format!("`{path}` must be an array of integers")))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| as_usize(x, &format!("{path}[{i}]")))
        .collect()
}

fn set<T>(slot: &mut Option<(T, String)>, value: T, path: String) -> Result<()> {
    if let Some((_, first)) = slot {
        return err(format!("`{path}` repeats `{first}`; give each value once"));
    }
    *slot = Some((value, path));
    Ok(())
}

/// Hyperparameter values that may be given per algorithm under `compare`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HyperOverrides {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub inner_iters: Option<usize>,
    pub inner_batch: Option<usize>,
    pub horizon: Option<usize>,
    pub eta: Option<f64>,
    /// `Some(None)` is an explicit `null`, i.e. no ball projection.
    pub delta: Option<Option<f64>>,
}

/// Settings gathered from the file and the flags, before defaults.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    env: Option<(String, String)>,
    queues: Option<(usize, String)>,
    arrival_rates: Option<(Vec<f64>, String)>,
    algo: Option<(Algorithm, String)>,
    epochs: Option<(usize, String)>,
    batch: Option<(usize, String)>,
    inner_iters: Option<(usize, String)>,
    inner_batch: Option<(usize, String)>,
    horizon: Option<(usize, String)>,
    eta: Option<(f64, String)>,
    delta: Option<(Option<f64>, String)>,
    gamma: Option<(f64, String)>,
    preset: Option<(Preset, String)>,
    objectives: Option<(usize, String)>,
    eps: Option<(f64, String)>,
    scalarization: Option<(String, String)>,
    weights: Option<(Vec<f64>, String)>,
    sigma: Option<(f64, String)>,
    runs: Option<(usize, String)>,
    seed: Option<(u64, String)>,
    out: Option<(PathBuf, String)>,
    parallelism: Option<(usize, String)>,
    checkpoint_every: Option<(usize, String)>,
    init_scale: Option<(f64, String)>,
    m_values: Option<(Vec<usize>, String)>,
    burn_in: Option<(f64, String)>,
    floor: Option<(f64, String)>,
    compare: BTreeMap<&'static str, HyperOverrides>,
}

const TOP_KEYS: &[&str] = &[
    "env",
    "algo",
    "hyper",
    "scalarization",
    "experiment",
    "compare",
    "T",
    "N",
    "m",
    "B",
    "H",
    "eta",
    "delta",
    "gamma",
    "preset",
    "M",
    "eps",
    "sigma",
    "runs",
    "seed",
    "out",
    "parallelism",
    "checkpoint_every",
];
const ENV_KEYS: &[&str] = &["kind", "queues", "arrival_rates"];
const HYPER_KEYS: &[&str] = &[
    "T", "N", "m", "B", "H", "eta", "delta", "gamma", "preset", "M", "eps",
];
const SCAL_KEYS: &[&str] = &["kind", "sigma", "weights"];
const EXP_KEYS: &[&str] = &[
    "runs",
    "seed",
    "out",
    "parallelism",
    "checkpoint_every",
    "init_scale",
    "M_values",
    "burn_in",
    "floor",
];
const COMPARE_KEYS: &[&str] = &["mo-pg", "mo-tsivr-pg"];
const OVERRIDE_KEYS: &[&str] = &["T", "N", "m", "B", "H", "eta", "delta"];

fn parse_delta(v: &Value, path: &str) -> Result<Option<f64>> {
    if v.is_null() {
        Ok(None)
    } else {
        as_f64(v, path).map(Some)
    }
}

impl RawConfig {
    pub fn from_json_text(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("config is not valid JSON: {e}")))?;
        let mut raw = RawConfig::default();
        raw.absorb_top(&value)?;
        Ok(raw)
    }

    fn absorb_top(&mut self, value: &Value) -> Result<()> {
        let obj = as_object(value, "<root>")?;
        for (key, v) in obj {
            match key.as_str() {
                "env" => self.absorb_env(v)?,
                "algo" => {
                    let a = parse_algo(as_str(v, "algo")?, "algo")?;
                    set(&mut self.algo, a, "algo".into())?;
                }
                "hyper" => {
                    for (k, x) in as_object(v, "hyper")? {
                        if !HYPER_KEYS.contains(&k.as_str()) {
                            return Err(unknown_key("hyper", k, HYPER_KEYS));
                        }
                        self.absorb_hyper_key(k, x, &join("hyper", k))?;
                    }
                }
                "scalarization" => self.absorb_scalarization(v)?,
                "experiment" => {
                    for (k, x) in as_object(v, "experiment")? {
                        self.absorb_experiment_key(k, x, "experiment")?;
                    }
                }
                "compare" => self.absorb_compare(v)?,
                "sigma" => {
                    let s = as_f64(v, "sigma")?;
                    set(&mut self.sigma, s, "sigma".into())?;
                }
                "runs" | "seed" | "out" | "parallelism" | "checkpoint_every" => {
                    self.absorb_experiment_key(key, v, "")?;
                }
                k if HYPER_KEYS.contains(&k) => self.absorb_hyper_key(k, v, k)?,
                k => return Err(unknown_key("", k, TOP_KEYS)),
            }
        }
        Ok(())
    }

    fn absorb_env(&mut self, v: &Value) -> Result<()> {
        match v {
            Value::String(s) => set(&mut self.env, parse_env(s, "env")?, "env".into()),
            Value::Object(obj) => {
                for (k, x) in obj {
                    let path = join("env", k);
                    match k.as_str() {
                        "kind" => set(&mut self.env, parse_env(as_str(x, &path)?, &path)?, path)?,
                        "queues" => set(&mut self.queues, as_usize(x, &path)?, path)?,
                        "arrival_rates" => {
                            set(&mut self.arrival_rates, as_f64_list(x, &path)?, path)?
                        }
                        _ => return Err(unknown_key("env", k, ENV_KEYS)),
                    }
                }
                Ok(())
            }
            other => err(format!("`env` must be a string or an object, got {other}")),
        }
    }

    fn absorb_hyper_key(&mut self, key: &str, v: &Value, path: &str) -> Result<()> {
        let p = path.to_string();
        match key {
            "T" => set(&mut self.epochs, as_usize(v, path)?, p),
            "N" => set(&mut self.batch, as_usize(v, path)?, p),
            "m" => set(&mut self.inner_iters, as_usize(v, path)?, p),
            "B" => set(&mut self.inner_batch, as_usize(v, path)?, p),
            "H" => set(&mut self.horizon, as_usize(v, path)?, p),
            "eta" => set(&mut self.eta, as_f64(v, path)?, p),
            "delta" => set(&mut self.delta, parse_delta(v, path)?, p),
            "gamma" => set(&mut self.gamma, as_f64(v, path)?, p),
            "preset" => set(&mut self.preset, parse_preset(as_str(v, path)?, path)?, p),
            "M" => set(&mut self.objectives, as_usize(v, path)?, p),
            "eps" => set(&mut self.eps, as_f64(v, path)?, p),
            _ => Err(unknown_key("hyper", key, HYPER_KEYS)),
        }
    }

    fn absorb_scalarization(&mut self, v: &Value) -> Result<()> {
        match v {
            Value::String(s) => set(&mut self.scalarization, s.clone(), "scalarization".into()),
            Value::Object(obj) => {
                for (k, x) in obj {
                    let path = join("scalarization", k);
                    match k.as_str() {
                        "kind" => {
                            set(&mut self.scalarization, as_str(x, &path)?.to_string(), path)?
                        }
                        "sigma" => set(&mut self.sigma, as_f64(x, &path)?, path)?,
                        "weights" => set(&mut self.weights, as_f64_list(x, &path)?, path)?,
                        _ => return Err(unknown_key("scalarization", k, SCAL_KEYS)),
                    }
                }
                Ok(())
            }
            other => err(format!(
                "`scalarization` must be a string or an object, got {other}"
            )),
        }
    }

    fn absorb_experiment_key(&mut self, key: &str, v: &Value, section: &str) -> Result<()> {
        let path = join(section, key);
        match key {
            "runs" => set(&mut self.runs, as_usize(v, &path)?, path),
            "seed" => {
                let s = v.as_u64().ok_or_else(|| {
                    ConfigError(format!("`{path}` must be a non-negative integer"))
                })?;
                set(&mut self.seed, s, path)
            }
            "out" => set(&mut self.out, PathBuf::from(as_str(v, &path)?), path),
            "parallelism" => set(&mut self.parallelism, as_usize(v, &path)?, path),
            "checkpoint_every" => set(&mut self.checkpoint_every, as_usize(v, &path)?, path),
            "init_scale" => set(&mut self.init_scale, as_f64(v, &path)?, path),
            "M_values" => set(&mut self.m_values, as_usize_list(v, &path)?, path),
            "burn_in" => set(&mut self.burn_in, as_f64(v, &path)?, path),
            "floor" => set(&mut self.floor, as_f64(v, &path)?, path),
            _ => Err(unknown_key(section, key, EXP_KEYS)),
        }
    }

    fn absorb_compare(&mut self, v: &Value) -> Result<()> {
        for (algo, x) in as_object(v, "compare")? {
            let name: &'static str = match algo.as_str() {
                "mo-pg" => "mo-pg",
                "mo-tsivr-pg" => "mo-tsivr-pg",
                _ => return Err(unknown_key("compare", algo, COMPARE_KEYS)),
            };
            let section = join("compare", algo);
            let mut o = HyperOverrides::default();
            for (k, y) in as_object(x, &section)? {
                let path = join(&section, k);
                match k.as_str() {
                    "T" => o.epochs = Some(as_usize(y, &path)?),
                    "N" => o.batch = Some(as_usize(y, &path)?),
                    "m" => o.inner_iters = Some(as_usize(y, &path)?),
                    "B" => o.inner_batch = Some(as_usize(y, &path)?),
                    "H" => o.horizon = Some(as_usize(y, &path)?),
                    "eta" => o.eta = Some(as_f64(y, &path)?),
                    "delta" => o.delta = Some(parse_delta(y, &path)?),
                    _ => return Err(unknown_key(&section, k, OVERRIDE_KEYS)),
                }
            }
            self.compare.insert(name, o);
        }
        Ok(())
    }

    /// Command-line values replace file values.
    pub fn apply_flags(&mut self, flags: &Flags) -> Result<()> {
        fn put<T: Clone>(slot: &mut Option<(T, String)>, v: &Option<T>, flag: &str) {
            if let Some(v) = v {
                *slot = Some((v.clone(), flag.to_string()));
            }
        }
        if let Some(e) = &flags.env {
            self.env = Some((parse_env(e, "--env")?, "--env".into()));
        }
        if let Some(a) = &flags.algo {
            self.algo = Some((parse_algo(a, "--algo")?, "--algo".into()));
        }
        if let Some(p) = &flags.preset {
            self.preset = Some((parse_preset(p, "--preset")?, "--preset".into()));
        }
        put(&mut self.objectives, &flags.objectives, "--M");
        put(&mut self.eps, &flags.eps, "--eps");
        put(&mut self.runs, &flags.runs, "--runs");
        put(&mut self.seed, &flags.seed, "--seed");
        put(&mut self.out, &flags.out, "--out");
        put(&mut self.parallelism, &flags.parallelism, "--parallelism");
        put(
            &mut self.checkpoint_every,
            &flags.checkpoint_every,
            "--checkpoint-every",
        );
        Ok(())
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub env: Option<String>,
    pub algo: Option<String>,
    pub preset: Option<String>,
    pub objectives: Option<usize>,
    pub eps: Option<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub checkpoint_every: Option<usize>,
}

fn parse_env(s: &str, path: &str) -> Result<String> {
    match s {
        "dst" | "server-queues" => Ok(s.to_string()),
        _ => match suggest(s, &["dst", "server-queues"]) {
            Some(x) => err(format!(
                "`{path}`: unknown environment `{s}`; did you mean `{x}`?"
            )),
            None => err(format!(
                "`{path}`: unknown environment `{s}`; expected dst or server-queues"
            )),
        },
    }
}

fn parse_algo(s: &str, path: &str) -> Result<Algorithm> {
    s.parse().map_err(|_| {
        ConfigError(format!(
            "`{path}`: unknown algorithm `{s}`; expected mo-pg or mo-tsivr-pg"
        ))
    })
}

fn parse_preset(s: &str, path: &str) -> Result<Preset> {
    s.parse().map_err(|_| {
        ConfigError(format!(
            "`{path}`: unknown preset `{s}`; expected thm1, thm2, thm2-proof, thm3 or thm4"
        ))
    })
}

fn value<T: Clone>(slot: &Option<(T, String)>) -> Option<T> {
    slot.as_ref().map(|(v, _)| v.clone())
}

/// Settings shared by every command once defaults are filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Common {
    pub env: EnvConfig,
    pub scalarization: Option<ScalarizationKind>,
    pub sigma: f64,
    pub runs: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub parallelism: usize,
    pub checkpoint_every: usize,
    pub init: ThetaInit,
}

impl RawConfig {
    fn env_name(&self) -> String {
        value(&self.env).unwrap_or_else(|| "dst".into())
    }

    /// Environment with placeholder horizon and discount; those come from
    /// the hyperparameters.
    fn env_config(&self, queues_override: Option<usize>) -> Result<EnvConfig> {
        match self.env_name().as_str() {
            "dst" => {
                if let Some((m, path)) = &self.objectives {
                    if *m != 2 {
                        return err(format!("`{path}` = {m}, but dst has exactly 2 objectives"));
                    }
                }
                if let Some((_, path)) = &self.queues {
                    return err(format!("`{path}` applies only to server-queues"));
                }
                if let Some((_, path)) = &self.arrival_rates {
                    return err(format!("`{path}` applies only to server-queues"));
                }
                Ok(EnvConfig::dst_default())
            }
            _ => {
                let queues = match (queues_override, &self.queues, &self.objectives) {
                    (Some(q), _, _) => q,
                    (None, Some((q, qp)), Some((m, mp))) if q != m => {
                        return err(format!("`{qp}` = {q} disagrees with `{mp}` = {m}"));
                    }
                    (None, Some((q, _)), _) => *q,
                    (None, None, Some((m, _))) => *m,
                    (None, None, None) => DEFAULT_QUEUES,
                };
                let arrival_rates = value(&self.arrival_rates);
                if let Some(r) = &arrival_rates {
                    if r.len() != queues {
                        return err(format!(
                            "`env.arrival_rates` has {} entries for {queues} queues",
                            r.len()
                        ));
                    }
                }
                Ok(EnvConfig::ServerQueues {
                    queues,
                    horizon: 100,
                    gamma: 0.9999,
                    arrival_rates,
                })
            }
        }
    }

    fn scalarization_kind(&self, env: &EnvConfig) -> Result<Option<ScalarizationKind>> {
        let Some((kind, path)) = &self.scalarization else {
            if let Some((_, p)) = &self.weights {
                return err(format!("`{p}` needs `scalarization.kind` = custom-table"));
            }
            return Ok(None);
        };
        let out = match kind.as_str() {
            "sqrt-treasure" => {
                if env.objectives() != 2 {
                    return err(format!("`{path}`: sqrt-treasure needs 2 objectives"));
                }
                Some(ScalarizationKind::SqrtTreasure)
            }
            // the horizon is filled in once H is known
            "alpha-fairness" => Some(ScalarizationKind::AlphaFairness { horizon: 0 }),
            "custom-table" => {
                let (w, wp) = self.weights.clone().ok_or_else(|| {
                    ConfigError("`scalarization.weights` is required for custom-table".into())
                })?;
                if w.len() != env.objectives() {
                    return err(format!(
                        "`{wp}` has {} entries for {} objectives",
                        w.len(),
                        env.objectives()
                    ));
                }
                Some(ScalarizationKind::CustomTable { weights: w })
            }
            other => {
                let allowed = ["sqrt-treasure", "alpha-fairness", "custom-table"];
                return match suggest(other, &allowed) {
                    Some(s) => err(format!(
                        "`{path}`: unknown scalarization `{other}`; did you mean `{s}`?"
                    )),
                    None => err(format!(
                        "`{path}`: unknown scalarization `{other}`; expected one of {}",
                        allowed.join(", ")
                    )),
                };
            }
        };
        if out.is_some() && !matches!(out, Some(ScalarizationKind::CustomTable { .. })) {
            if let Some((_, p)) = &self.weights {
                return err(format!("`{p}` applies only to custom-table"));
            }
        }
        Ok(out)
    }

    pub fn common(&self, queues_override: Option<usize>) -> Result<Common> {
        let env = self.env_config(queues_override)?;
        let scalarization = self.scalarization_kind(&env)?;
        let sigma = value(&self.sigma).unwrap_or(DEFAULT_SIGMA);
        if !(sigma > 0.0) {
            return err(format!("`sigma` must be > 0, got {sigma}"));
        }
        let runs = value(&self.runs).unwrap_or(1);
        if runs == 0 {
            return err("`runs` must be >= 1");
        }
        let init = match value(&self.init_scale) {
            None => ThetaInit::Zeros,
            Some(s) if s == 0.0 => ThetaInit::Zeros,
            Some(s) if s > 0.0 => ThetaInit::Gaussian { scale: s },
            Some(s) => return err(format!("`experiment.init_scale` must be >= 0, got {s}")),
        };
        Ok(Common {
            env,
            scalarization,
            sigma,
            runs,
            seed: value(&self.seed).unwrap_or(0),
            out: value(&self.out),
            parallelism: value(&self.parallelism).unwrap_or(0),
            checkpoint_every: value(&self.checkpoint_every).unwrap_or(DEFAULT_CHECKPOINT_EVERY),
            init,
        })
    }

    fn explicit_keys(&self) -> Vec<&str> {
        [
            self.epochs.as_ref().map(|x| x.1.as_str()),
            self.batch.as_ref().map(|x| x.1.as_str()),
            self.inner_iters.as_ref().map(|x| x.1.as_str()),
            self.inner_batch.as_ref().map(|x| x.1.as_str()),
            self.horizon.as_ref().map(|x| x.1.as_str()),
            self.eta.as_ref().map(|x| x.1.as_str()),
            self.delta.as_ref().map(|x| x.1.as_str()),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    fn default_eta(&self) -> f64 {
        if self.env_name() == "dst" {
            DEFAULT_ETA_DST
        } else {
            DEFAULT_ETA_QUEUES
        }
    }

    fn default_gamma(&self) -> f64 {
        if self.env_name() == "dst" {
            1.0
        } else {
            0.9999
        }
    }

    /// Explicit hyperparameters for `algo` with `overrides` applied on top.
    fn explicit_hyper(
        &self,
        algo: Algorithm,
        overrides: Option<&HyperOverrides>,
    ) -> Result<Hyperparams> {
        let o = overrides.cloned().unwrap_or_default();
        let tsivr = algo == Algorithm::MoTsivrPg;
        let default_batch = if tsivr {
            DEFAULT_BATCH_TSIVR
        } else {
            DEFAULT_BATCH_PG
        };
        if !tsivr {
            for (slot, name) in [(&self.inner_iters, "m"), (&self.inner_batch, "B")] {
                if let Some((_, path)) = slot {
                    return err(format!("`{path}` is only used by mo-tsivr-pg ({name})"));
                }
            }
            if let Some((_, path)) = &self.delta {
                return err(format!("`{path}` is only used by mo-tsivr-pg (delta)"));
            }
        }
        let delta = o
            .delta
            .or(value(&self.delta))
            .unwrap_or(Some(DEFAULT_RADIUS))
            .unwrap_or(f64::INFINITY);
        let hyper = Hyperparams {
            epochs: o.epochs.or(value(&self.epochs)).unwrap_or(DEFAULT_EPOCHS),
            inner_iters: if tsivr {
                o.inner_iters
                    .or(value(&self.inner_iters))
                    .unwrap_or(DEFAULT_INNER_ITERS)
            } else {
                1
            },
            inner_batch: if tsivr {
                o.inner_batch
                    .or(value(&self.inner_batch))
                    .unwrap_or(DEFAULT_INNER_BATCH)
            } else {
                1
            },
            batch: o.batch.or(value(&self.batch)).unwrap_or(default_batch),
            horizon: o.horizon.or(value(&self.horizon)).unwrap_or(100),
            step_size: o
                .eta
                .or(value(&self.eta))
                .unwrap_or_else(|| self.default_eta()),
            radius: if tsivr { delta } else { f64::INFINITY },
            gamma: value(&self.gamma).unwrap_or_else(|| self.default_gamma()),
        };
        hyper
            .validate(algo)
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(hyper)
    }

    /// Theorem schedule for `objectives`. The box constants depend on `H`,
    /// which the schedule fixes independently of them, so a second pass is
    /// exact.
    fn preset_hyper(
        &self,
        preset: Preset,
        common: &Common,
        objectives: usize,
    ) -> Result<Hyperparams> {
        let eps =
            value(&self.eps).ok_or_else(|| ConfigError(format!("preset {preset} needs `eps`")))?;
        let gamma = value(&self.gamma).unwrap_or_else(|| self.default_gamma());
        let scal = |h: usize| -> Result<ScheduleConstants> {
            let cfg = experiment_config(
                common,
                Algorithm::MoPg,
                Hyperparams::mo_pg(1, 1, h, 1.0, gamma),
            )?;
            let env = cfg.env.build().map_err(|e| ConfigError(e.to_string()))?;
            let omega = OmegaBox::from_rewards(&env.spec().reward_bounds, gamma, h)
                .map_err(|e| ConfigError(e.to_string()))?;
            let spec: ScalarizationSpec = cfg
                .scalarization_spec(&omega)
                .map_err(|e| ConfigError(e.to_string()))?;
            Ok(ScheduleConstants {
                policy: PolicyConstants::default(),
                grad_bound: spec.grad_bound,
                lipschitz: spec.lipschitz,
            })
        };
        let first = theorem_schedule(preset, objectives, eps, gamma, &scal(100)?)
            .map_err(|e| ConfigError(e.to_string()))?;
        theorem_schedule(preset, objectives, eps, gamma, &scal(first.horizon)?)
            .map_err(|e| ConfigError(e.to_string()))
    }

    fn check_preset_exclusive(&self, preset: &(Preset, String)) -> Result<()> {
        let explicit = self.explicit_keys();
        if !explicit.is_empty() {
            return err(format!(
                "`{}` = {} fixes the hyperparameters; remove the explicit {}",
                preset.1,
                preset.0,
                explicit
                    .iter()
                    .map(|k| format!("`{k}`"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        Ok(())
    }

    /// Configuration of the `run` command.
    pub fn resolve_run(&self) -> Result<(ExperimentConfig, Common)> {
        if let Some((_, path)) = &self.m_values {
            return err(format!("`{path}` is only used by the exponents command"));
        }
        let common = self.common(None)?;
        let (algo, hyper) = match &self.preset {
            Some(preset) => {
                self.check_preset_exclusive(preset)?;
                let algo = preset.0.algorithm();
                if let Some((a, path)) = &self.algo {
                    if *a != algo {
                        return err(format!(
                            "`{path}` = {a} conflicts with preset {} ({algo})",
                            preset.0
                        ));
                    }
                }
                (
                    algo,
                    self.preset_hyper(preset.0, &common, common.env.objectives())?,
                )
            }
            None => {
                if let Some((_, path)) = self.eps.as_ref() {
                    return err(format!("`{path}` is only used together with a preset"));
                }
                let algo = value(&self.algo).ok_or_else(|| {
                    ConfigError("missing required key `algo` (or a preset)".into())
                })?;
                (algo, self.explicit_hyper(algo, None)?)
            }
        };
        Ok((experiment_config(&common, algo, hyper)?, common))
    }

    /// Configurations of the `compare` command, MO-PG first.
    pub fn resolve_compare(&self) -> Result<(ExperimentConfig, ExperimentConfig, Common)> {
        if let Some((_, path)) = &self.preset {
            return err(format!(
                "`{path}`: compare uses explicit budgets; presets are not supported"
            ));
        }
        if let Some((_, path)) = &self.algo {
            return err(format!("`{path}`: compare always runs both algorithms"));
        }
        let common = self.common(None)?;
        let pg_overrides = self.compare.get("mo-pg");
        if let Some(o) = pg_overrides {
            if o.inner_iters.is_some() || o.inner_batch.is_some() || o.delta.is_some() {
                return err("`compare.mo-pg` accepts only T, N, H and eta");
            }
        }
        // shared m, B and delta belong to MO-TSIVR-PG
        let mut shared = self.clone();
        shared.inner_iters = None;
        shared.inner_batch = None;
        shared.delta = None;
        let pg = shared.explicit_hyper(Algorithm::MoPg, pg_overrides)?;
        let tsivr = self.explicit_hyper(Algorithm::MoTsivrPg, self.compare.get("mo-tsivr-pg"))?;
        let (a, b) = (
            episodes_per_epoch(Algorithm::MoPg, &pg),
            episodes_per_epoch(Algorithm::MoTsivrPg, &tsivr),
        );
        if a != b || pg.epochs != tsivr.epochs {
            return err(format!(
                "compare needs equal per-epoch budgets and epoch counts: mo-pg 2N = {a} over T = {}, \
                 mo-tsivr-pg 2N + 2(m-1)B = {b} over T = {}",
                pg.epochs, tsivr.epochs
            ));
        }
        Ok((
            experiment_config(&common, Algorithm::MoPg, pg)?,
            experiment_config(&common, Algorithm::MoTsivrPg, tsivr)?,
            common,
        ))
    }

    /// Objective counts and per-`M` configurations of the `exponents`
    /// command.
    pub fn resolve_sweep(&self) -> Result<Sweep> {
        if self.env_name() != "server-queues" {
            return err(
                "the exponents sweep varies the number of queues; set `env` to server-queues",
            );
        }
        if let Some((_, path)) = &self.objectives {
            return err(format!(
                "`{path}`: the sweep takes its objective counts from `experiment.M_values`"
            ));
        }
        if let Some((_, path)) = &self.queues {
            return err(format!(
                "`{path}`: the sweep takes its objective counts from `experiment.M_values`"
            ));
        }
        let m_values = value(&self.m_values).unwrap_or_else(|| DEFAULT_M_VALUES.to_vec());
        let mut distinct = m_values.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 || distinct[0] == 0 {
            return err("`experiment.M_values` needs at least two distinct positive values");
        }
        let fit = FitOptions {
            burn_in: value(&self.burn_in).unwrap_or(0.1),
            floor_rel: value(&self.floor).unwrap_or(DEFAULT_FLOOR_REL),
        };
        if !(0.0..1.0).contains(&fit.burn_in) || !(fit.floor_rel > 0.0) {
            return err(
                "`experiment.burn_in` must lie in [0, 1) and `experiment.floor` must be > 0",
            );
        }
        let mut configs = Vec::new();
        for &m in &m_values {
            let common = self.common(Some(m))?;
            let (algo, hyper) = match &self.preset {
                Some(preset) => {
                    self.check_preset_exclusive(preset)?;
                    (
                        preset.0.algorithm(),
                        self.preset_hyper(preset.0, &common, m)?,
                    )
                }
                None => {
                    let algo = value(&self.algo).ok_or_else(|| {
                        ConfigError("missing required key `algo` (or a preset)".into())
                    })?;
                    (algo, self.explicit_hyper(algo, None)?)
                }
            };
            configs.push(experiment_config(&common, algo, hyper)?);
        }
        Ok(Sweep {
            m_values,
            configs,
            fit,
            common: self.common(Some(m_values_first(&self.m_values)))?,
            preset: value(&self.preset).map(|p| (p, value(&self.eps).unwrap_or_default())),
        })
    }
}

fn m_values_first(slot: &Option<(Vec<usize>, String)>) -> usize {
    slot.as_ref()
        .and_then(|(v, _)| v.first().copied())
        .unwrap_or(DEFAULT_M_VALUES[0])
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub m_values: Vec<usize>,
    pub configs: Vec<ExperimentConfig>,
    pub fit: FitOptions,
    pub common: Common,
    pub preset: Option<(Preset, f64)>,
}

/// Builds the core experiment description; the scalarization defaults to
/// the environment's own and alpha-fairness takes `H` from `hyper`.
pub fn experiment_config(
    common: &Common,
    algo: Algorithm,
    hyper: Hyperparams,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(&common.env, algo, hyper);
    cfg.scalarization = match &common.scalarization {
        None => default_scalarization(&cfg.env),
        Some(ScalarizationKind::AlphaFairness { .. }) => ScalarizationKind::AlphaFairness {
            horizon: cfg.hyper.horizon,
        },
        Some(k) => k.clone(),
    };
    cfg.sigma = common.sigma;
    cfg.init = common.init;
    cfg.runs = common.runs;
    cfg.base_seed = common.seed;
    cfg.checkpoint_every = common.checkpoint_every;
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

fn env_json(env: &EnvConfig) -> Value {
    match env {
        EnvConfig::Dst { .. } => json!({"kind": "dst"}),
        EnvConfig::ServerQueues {
            queues,
            arrival_rates,
            ..
        } => {
            let mut v = json!({"kind": "server-queues", "queues": queues});
            if let Some(r) = arrival_rates {
                v["arrival_rates"] = json!(r);
            }
            v
        }
    }
}

fn hyper_json(h: &Hyperparams, algo: Algorithm) -> Value {
    let mut v =
        json!({"T": h.epochs, "N": h.batch, "H": h.horizon, "eta": h.step_size, "gamma": h.gamma});
    if algo == Algorithm::MoTsivrPg {
        v["m"] = json!(h.inner_iters);
        v["B"] = json!(h.inner_batch);
        v["delta"] = if h.radius.is_finite() {
            json!(h.radius)
        } else {
            Value::Null
        };
    }
    v
}

fn scalarization_json(cfg: &ExperimentConfig) -> Value {
    match &cfg.scalarization {
        ScalarizationKind::SqrtTreasure => json!({"kind": "sqrt-treasure", "sigma": cfg.sigma}),
        ScalarizationKind::AlphaFairness { .. } => {
            json!({"kind": "alpha-fairness", "sigma": cfg.sigma})
        }
        ScalarizationKind::CustomTable { weights } => {
            json!({"kind": "custom-table", "sigma": cfg.sigma, "weights": weights})
        }
    }
}

fn experiment_json(common: &Common) -> Value {
    let init_scale = match common.init {
        ThetaInit::Zeros => 0.0,
        ThetaInit::Gaussian { scale } => scale,
    };
    json!({
        "runs": common.runs,
        "seed": common.seed,
        "parallelism": common.parallelism,
        "checkpoint_every": common.checkpoint_every,
        "init_scale": init_scale,
    })
}

/// Effective configuration of a `run`, in the input format.
pub fn effective_run(cfg: &ExperimentConfig, common: &Common) -> Value {
    json!({
        "env": env_json(&cfg.env),
        "algo": cfg.algorithm.name(),
        "hyper": hyper_json(&cfg.hyper, cfg.algorithm),
        "scalarization": scalarization_json(cfg),
        "experiment": experiment_json(common),
    })
}

/// Effective configuration of a `compare`.
pub fn effective_compare(
    pg: &ExperimentConfig,
    tsivr: &ExperimentConfig,
    common: &Common,
) -> Value {
    json!({
        "env": env_json(&pg.env),
        "scalarization": scalarization_json(pg),
        "compare": {
            "mo-pg": hyper_json_overrides(&pg.hyper, Algorithm::MoPg),
            "mo-tsivr-pg": hyper_json_overrides(&tsivr.hyper, Algorithm::MoTsivrPg),
        },
        "hyper": {"gamma": pg.hyper.gamma},
        "experiment": experiment_json(common),
    })
}

fn hyper_json_overrides(h: &Hyperparams, algo: Algorithm) -> Value {
    let mut v = hyper_json(h, algo);
    v.as_object_mut().expect("object").remove("gamma");
    v
}

/// Effective configuration of an `exponents` sweep.
pub fn effective_sweep(sweep: &Sweep) -> Value {
    let first = &sweep.configs[0];
    let hyper = match sweep.preset {
        Some((p, eps)) => json!({"preset": p.name(), "eps": eps, "gamma": first.hyper.gamma}),
        None => hyper_json(&first.hyper, first.algorithm),
    };
    let mut experiment = experiment_json(&sweep.common);
    experiment["M_values"] = json!(sweep.m_values);
    experiment["burn_in"] = json!(sweep.fit.burn_in);
    experiment["floor"] = json!(sweep.fit.floor_rel);
    let mut v = json!({
        "env": {"kind": "server-queues"},
        "hyper": hyper,
        "scalarization": scalarization_json(first),
        "experiment": experiment,
    });
    if sweep.preset.is_none() {
        v["algo"] = json!(first.algorithm.name());
    }
    v
}
