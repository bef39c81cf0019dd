use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::theory::{variance_constants, ConstantInputs};
use super::Algorithm;
use crate::error::{MorlError, Result};
use crate::policy::PolicyConstants;

/// Run sizes and step parameters. `inner_iters`, `inner_batch` and
/// `radius` are ignored by MO-PG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(rename = "T")]
    pub epochs: usize,
    #[serde(rename = "m")]
    pub inner_iters: usize,
    #[serde(rename = "B")]
    pub inner_batch: usize,
    #[serde(rename = "N")]
    pub batch: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "eta")]
    pub step_size: f64,
    /// Truncation radius; `f64::INFINITY` disables the ball projection.
    #[serde(rename = "delta", with = "radius_serde")]
    pub radius: f64,
    pub gamma: f64,
}

// JSON has no infinity: an unbounded radius is written as null.
mod radius_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_f64(*r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Hyperparams {
    /// MO-PG sizes; the inner-loop fields get neutral values.
    pub fn mo_pg(epochs: usize, batch: usize, horizon: usize, step_size: f64, gamma: f64) -> Self {
        Self {
            epochs,
            inner_iters: 1,
            inner_batch: 1,
            batch,
            horizon,
            step_size,
            radius: f64::INFINITY,
            gamma,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn mo_tsivr_pg(
        epochs: usize,
        inner_iters: usize,
        inner_batch: usize,
        batch: usize,
        horizon: usize,
        step_size: f64,
        radius: f64,
        gamma: f64,
    ) -> Self {
        Self {
            epochs,
            inner_iters,
            inner_batch,
            batch,
            horizon,
            step_size,
            radius,
            gamma,
        }
    }

    pub fn validate(&self, algo: Algorithm) -> Result<()> {
        let positive = [("T", self.epochs), ("N", self.batch), ("H", self.horizon)];
        for (name, v) in positive {
            if v == 0 {
                return Err(MorlError::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(MorlError::Config(format!(
                "eta must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MorlError::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if algo == Algorithm::MoTsivrPg {
            if self.inner_iters == 0 {
                return Err(MorlError::Config("m must be >= 1".into()));
            }
            if self.inner_iters > 1 && self.inner_batch == 0 {
                return Err(MorlError::Config("B must be >= 1 when m > 1".into()));
            }
            if !(self.radius > 0.0) {
                return Err(MorlError::Config(format!(
                    "delta must be > 0, got {}",
                    self.radius
                )));
            }
        }
        Ok(())
    }
}

/// Episodes consumed by one epoch: `2N` for MO-PG, `2N + 2(m-1)B` for
/// MO-TSIVR-PG.
pub fn episodes_per_epoch(algo: Algorithm, hyper: &Hyperparams) -> u64 {
    let n = hyper.batch as u64;
    match algo {
        Algorithm::MoPg => 2 * n,
        Algorithm::MoTsivrPg => {
            2 * n + 2 * (hyper.inner_iters.saturating_sub(1) as u64) * hyper.inner_batch as u64
        }
    }
}

/// Parameter choices from the convergence theorems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// MO-PG, first-order stationarity.
    Thm1,
    /// MO-TSIVR-PG, first-order stationarity, sizes as stated in the theorem.
    Thm2,
    /// MO-TSIVR-PG, sizes as used in the proof (`B = M^2/eps`, `m = M/eps`).
    Thm2Proof,
    /// MO-PG, global optimality under concavity.
    Thm3,
    /// MO-TSIVR-PG, global optimality under concavity.
    Thm4,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Thm1,
        Preset::Thm2,
        Preset::Thm2Proof,
        Preset::Thm3,
        Preset::Thm4,
    ];

    pub fn algorithm(self) -> Algorithm {
        match self {
            Preset::Thm1 | Preset::Thm3 => Algorithm::MoPg,
            Preset::Thm2 | Preset::Thm2Proof | Preset::Thm4 => Algorithm::MoTsivrPg,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Thm1 => "thm1",
            Preset::Thm2 => "thm2",
            Preset::Thm2Proof => "thm2-proof",
            Preset::Thm3 => "thm3",
            Preset::Thm4 => "thm4",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = MorlError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| MorlError::Config(format!("unknown preset {s:?}")))
    }
}

/// Problem constants the step sizes depend on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub policy: PolicyConstants,
    /// `C`, sup of `|df/dJ_m|` on the box.
    pub grad_bound: f64,
    /// `L_f`.
    pub lipschitz: f64,
}

/// Ceiling that forgives representation error just above an integer, so
/// `ln(1/e^-1)` rounds to 1 rather than 2. Never returns less than 1.
fn ceil_count(x: f64) -> usize {
    let c = (x - 1e-9 * x.abs().max(1.0)).ceil();
    c.max(1.0) as usize
}

/// Instantiates a theorem's choice of `(T, m, B, N, H, eta, delta)` for `M`
/// objectives and target accuracy `eps`. Integer quantities are rounded up;
/// `delta = 1/(2GH)` for the MO-TSIVR-PG presets.
pub fn theorem_schedule(
    preset: Preset,
    objectives: usize,
    eps: f64,
    gamma: f64,
    constants: &ScheduleConstants,
) -> Result<Hyperparams> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(MorlError::Usage(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    if objectives == 0 {
        return Err(MorlError::Usage("M must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(MorlError::Usage(format!(
            "theorem step sizes need gamma in (0, 1), got {gamma}"
        )));
    }
    let m = objectives as f64;
    let inv = 1.0 / eps;
    let log_inv = inv.ln();
    let g = constants.policy.g;

    let horizon = match preset {
        Preset::Thm1 | Preset::Thm2 | Preset::Thm2Proof => ceil_count((m * inv).ln()),
        Preset::Thm3 | Preset::Thm4 => ceil_count((m * inv).ln() / (1.0 - gamma)),
    };
    let radius = match preset.algorithm() {
        Algorithm::MoPg => f64::INFINITY,
        Algorithm::MoTsivrPg => 1.0 / (2.0 * g * horizon as f64),
    };
    let tc = variance_constants(&ConstantInputs {
        policy: constants.policy,
        grad_bound: constants.grad_bound,
        lipschitz: constants.lipschitz,
        objectives,
        gamma,
        horizon,
        radius,
    })?;
    let l = tc.l_theta;
    let plain_eta = 1.0 / (2.0 * l);

    let (epochs, inner_iters, inner_batch, batch, step_size) = match preset {
        Preset::Thm1 => (
            ceil_count(m * inv * inv),
            1,
            1,
            ceil_count(m.powi(3) * inv * inv),
            plain_eta,
        ),
        Preset::Thm2 | Preset::Thm2Proof => {
            let (iters, inner) = if preset == Preset::Thm2 {
                let b = ceil_count(m.powf(1.5) * inv);
                (b, b)
            } else {
                (ceil_count(m * inv), ceil_count(m * m * inv))
            };
            let eta = plain_eta / (1.0 + tc.c3 / (m * l * l));
            (
                ceil_count(inv),
                iters,
                inner,
                ceil_count(m.powi(3) * inv * inv),
                eta,
            )
        }
        Preset::Thm3 => (
            ceil_count(m * m * inv),
            1,
            1,
            ceil_count(m.powi(4) * inv * inv),
            plain_eta,
        ),
        Preset::Thm4 => {
            let eta = 1.0 / (2.0 * l + 8.0 * tc.c3 / (m * l));
            (
                ceil_count(log_inv),
                ceil_count(m * m * inv * log_inv),
                ceil_count(m.powi(3) * inv * log_inv),
                ceil_count(m.powi(5) * inv * inv * log_inv * log_inv),
                eta,
            )
        }
    };
    Ok(Hyperparams {
        epochs,
        inner_iters,
        inner_batch,
        batch,
        horizon,
        step_size,
        radius,
        gamma,
    })
}
