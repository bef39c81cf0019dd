use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, Hyperparams, TheoryConstants};
use crate::error::{MorlError, Result};
use crate::policy::PolicyParams;
use crate::scalarization::ScalarizationSpec;

pub const CSV_HEADER: &str = "epoch,episodes,steps,f_value,theta_norm,wall_ms";

/// One row per epoch, describing the parameters the epoch started from.
/// `episodes` and `steps` are cumulative and include the epoch itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub episodes: u64,
    pub steps: u64,
    pub f_value: f64,
    pub theta_norm: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub algorithm: Algorithm,
    pub hyper: Hyperparams,
    pub scalarization: ScalarizationSpec,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub final_params: PolicyParams,
    pub constants: Option<TheoryConstants>,
}

impl TrainLog {
    pub fn f_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_value).collect()
    }

    pub fn to_csv(&self) -> String {
        records_to_csv(&self.records)
    }

    /// Everything except the per-epoch records, which live in the CSV.
    pub fn final_state(&self) -> FinalState {
        FinalState {
            algorithm: self.algorithm,
            seed: self.seed,
            hyper: self.hyper.clone(),
            scalarization: self.scalarization.clone(),
            params: self.final_params.clone(),
            constants: self.constants,
        }
    }

    pub fn from_parts(state: FinalState, records: Vec<EpochRecord>) -> Self {
        Self {
            algorithm: state.algorithm,
            hyper: state.hyper,
            scalarization: state.scalarization,
            seed: state.seed,
            records,
            final_params: state.params,
            constants: state.constants,
        }
    }
}

/// Final-state document written next to the CSV log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub scalarization: ScalarizationSpec,
    #[serde(flatten)]
    pub params: PolicyParams,
    pub constants: Option<TheoryConstants>,
}

pub fn records_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.episodes, r.steps, r.f_value, r.theta_norm, r.wall_ms
        )
        .expect("writing to a String");
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(MorlError::Config(format!(
                "unexpected log header {other:?}, expected {CSV_HEADER:?}"
            )))
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || MorlError::Config(format!("malformed log row {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                episodes: f[1].parse().map_err(|_| bad())?,
                steps: f[2].parse().map_err(|_| bad())?,
                f_value: f[3].parse().map_err(|_| bad())?,
                theta_norm: f[4].parse().map_err(|_| bad())?,
                wall_ms: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Everything needed to continue a run at `next_epoch`. Random streams are
/// keyed by epoch, so no generator state has to be stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub next_epoch: usize,
    pub theta: Vec<f64>,
    pub records: Vec<EpochRecord>,
    pub elapsed_ms: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
