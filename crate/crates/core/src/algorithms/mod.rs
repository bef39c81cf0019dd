//! Training loops for MO-PG and MO-TSIVR-PG, step-size schedules and the
//! constants that appear in their variance bounds.

mod hyper;
mod log;
mod theory;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MorlError;

pub use hyper::{episodes_per_epoch, theorem_schedule, Hyperparams, Preset, ScheduleConstants};
pub use log::{
    records_from_csv, records_to_csv, Checkpoint, EpochRecord, FinalState, TrainLog, CSV_HEADER,
};
pub use theory::{variance_constants, ConstantInputs, TheoryConstants};
pub use train::{
    mo_pg_train, mo_tsivr_pg_train, resume_training, run_training, CheckpointPolicy,
    IterationEvent, Observer, Problem, ThetaInit, TrainOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Plain two-batch policy gradient.
    #[serde(rename = "mo-pg")]
    MoPg,
    /// Recursive importance-weighted variance reduction with a truncated step.
    #[serde(rename = "mo-tsivr-pg")]
    MoTsivrPg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MoPg => "mo-pg",
            Algorithm::MoTsivrPg => "mo-tsivr-pg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = MorlError;

    fn from_str(s: &str) -> Result<Self, MorlError> {
        match s {
            "mo-pg" => Ok(Algorithm::MoPg),
            "mo-tsivr-pg" => Ok(Algorithm::MoTsivrPg),
            other => Err(MorlError::Config(format!(
                "unknown algorithm {other:?} (expected mo-pg or mo-tsivr-pg)"
            ))),
        }
    }
}

/// Euclidean projection of `point` onto the ball of radius `radius` around
/// `center`.
pub fn project_ball(point: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let dist = point
        .iter()
        .zip(center)
        .map(|(p, c)| (p - c).powi(2))
        .sum::<f64>()
        .sqrt();
    if dist <= radius {
        return point.to_vec();
    }
    let scale = radius / dist;
    point
        .iter()
        .zip(center)
        .map(|(p, c)| c + scale * (p - c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ball_examples() {
        assert_eq!(project_ball(&[0.3, 0.4], &[0.0, 0.0], 1.0), vec![0.3, 0.4]);
        let p = project_ball(&[3.0, 4.0], &[0.0, 0.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(
            project_ball(&[1e9, -1e9], &[0.0, 0.0], f64::INFINITY),
            vec![1e9, -1e9]
        );
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in [Algorithm::MoPg, Algorithm::MoTsivrPg] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("ppo".parse::<Algorithm>().is_err());
    }

    proptest! {
        #[test]
        fn ball_distance_is_min_of_radius_and_input(
            p in prop::collection::vec(-5.0f64..5.0, 4),
            c in prop::collection::vec(-5.0f64..5.0, 4),
            r in 0.01f64..6.0,
        ) {
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let out = project_ball(&p, &c, r);
            prop_assert!((d(&out, &c) - d(&p, &c).min(r)).abs() < 1e-12);
        }
    }
}
