//! Joint objectives `f(J)`, their gradients, the attainable-return box and
//! projection onto it.

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::mdp::discount_sum;

/// Offset inside the second square root of the treasure objective; the time
/// penalty accumulates to at most -100 over the default horizon.
pub const TREASURE_TIME_OFFSET: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarizationKind {
    /// `sqrt(J1 + sigma) + sqrt(100 + J2 + sigma)`
    SqrtTreasure,
    /// `-sum_m H / (J_m + sigma)` (alpha = 2)
    AlphaFairness { horizon: usize },
    /// Linear table of per-objective weights, `sum_m w_m J_m`.
    CustomTable { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarizationSpec {
    pub kind: ScalarizationKind,
    pub sigma: f64,
    /// Lipschitz constant of `grad f` on the box (sup-norm on the left).
    pub lipschitz: f64,
    /// Sup bound on the partial derivatives over the box.
    pub grad_bound: f64,
}

impl ScalarizationSpec {
    /// Builds a spec whose `lipschitz` and `grad_bound` are the analytic
    /// suprema over `omega`.
    pub fn new(kind: ScalarizationKind, sigma: f64, omega: &OmegaBox) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(MorlError::Config(format!("sigma must be > 0, got {sigma}")));
        }
        let lo = omega.lo();
        let (grad_bound, lipschitz) = match &kind {
            ScalarizationKind::SqrtTreasure => {
                if lo.len() != 2 {
                    return Err(MorlError::Config(
                        "sqrt-treasure needs exactly two objectives".into(),
                    ));
                }
                let a = lo[0] + sigma;
                let b = TREASURE_TIME_OFFSET + lo[1] + sigma;
                if !(a > 0.0 && b > 0.0) {
                    return Err(MorlError::Domain("box leaves the sqrt domain".into()));
                }
                (
                    (0.5 / a.sqrt()).max(0.5 / b.sqrt()),
                    (0.25 / a.powf(1.5)).max(0.25 / b.powf(1.5)),
                )
            }
            ScalarizationKind::AlphaFairness { horizon } => {
                let h = *horizon as f64;
                let min_shift = lo.iter().map(|l| l + sigma).fold(f64::INFINITY, f64::min);
                if !(min_shift > 0.0) {
                    return Err(MorlError::Domain("box reaches J + sigma <= 0".into()));
                }
                (h / min_shift.powi(2), 2.0 * h / min_shift.powi(3))
            }
            ScalarizationKind::CustomTable { weights } => {
                if weights.len() != lo.len() {
                    return Err(MorlError::Config(format!(
                        "{} weights for {} objectives",
                        weights.len(),
                        lo.len()
                    )));
                }
                // constant gradient: any positive Lipschitz constant is valid
                (weights.iter().fold(0.0f64, |m, w| m.max(w.abs())), 1.0)
            }
        };
        Self::with_constants(kind, sigma, lipschitz, grad_bound.max(f64::MIN_POSITIVE))
    }

    pub fn with_constants(
        kind: ScalarizationKind,
        sigma: f64,
        lipschitz: f64,
        grad_bound: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0 && lipschitz > 0.0 && grad_bound > 0.0) {
            return Err(MorlError::Config(format!(
                "sigma, L_f and C must be positive (got {sigma}, {lipschitz}, {grad_bound})"
            )));
        }
        Ok(Self {
            kind,
            sigma,
            lipschitz,
            grad_bound,
        })
    }

    fn check_dim(&self, j: &[f64]) -> Result<()> {
        let expected = match &self.kind {
            ScalarizationKind::SqrtTreasure => Some(2),
            ScalarizationKind::CustomTable { weights } => Some(weights.len()),
            ScalarizationKind::AlphaFairness { .. } => None,
        };
        match expected {
            Some(m) if m != j.len() => Err(MorlError::Config(format!(
                "scalarization expects {m} objectives, got {}",
                j.len()
            ))),
            _ => Ok(()),
        }
    }

    fn sqrt_args(&self, j: &[f64]) -> Result<(f64, f64)> {
        let a = j[0] + self.sigma;
        let b = TREASURE_TIME_OFFSET + j[1] + self.sigma;
        if !(a > 0.0 && b > 0.0) {
            return Err(MorlError::Domain(format!(
                "square-root argument not positive at J = {j:?}; project onto the box first"
            )));
        }
        Ok((a, b))
    }

    fn shifted(&self, x: f64) -> Result<f64> {
        let s = x + self.sigma;
        if !(s > 0.0) {
            return Err(MorlError::Domain(format!(
                "J_m + sigma = {s} <= 0; project onto the box first"
            )));
        }
        Ok(s)
    }

    /// `f(J)`.
    pub fn scalarize(&self, j: &[f64]) -> Result<f64> {
        self.check_dim(j)?;
        match &self.kind {
            ScalarizationKind::SqrtTreasure => {
                let (a, b) = self.sqrt_args(j)?;
                Ok(a.sqrt() + b.sqrt())
            }
            ScalarizationKind::AlphaFairness { horizon } => {
                let h = *horizon as f64;
                let mut total = 0.0;
                for &x in j {
                    total -= h / self.shifted(x)?;
                }
                Ok(total)
            }
            ScalarizationKind::CustomTable { weights } => {
                Ok(weights.iter().zip(j).map(|(w, x)| w * x).sum())
            }
        }
    }

    /// `grad_J f(J)`.
    pub fn scalarize_grad(&self, j: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(j)?;
        match &self.kind {
            ScalarizationKind::SqrtTreasure => {
                let (a, b) = self.sqrt_args(j)?;
                Ok(vec![0.5 / a.sqrt(), 0.5 / b.sqrt()])
            }
            ScalarizationKind::AlphaFairness { horizon } => {
                let h = *horizon as f64;
                j.iter()
                    .map(|&x| Ok(h / self.shifted(x)?.powi(2)))
                    .collect()
            }
            ScalarizationKind::CustomTable { weights } => Ok(weights.clone()),
        }
    }
}

/// Axis-aligned box `prod_m [lo_m, hi_m]` containing every attainable return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaBox {
    bounds: Vec<(f64, f64)>,
}

impl OmegaBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(m) = bounds.iter().position(|(lo, hi)| !(lo <= hi)) {
            return Err(MorlError::Config(format!(
                "box interval {m} is inverted or NaN"
            )));
        }
        Ok(Self { bounds })
    }

    /// `[r_min * Gamma, r_max * Gamma]` per objective with
    /// `Gamma = sum_{t<H} gamma^t`.
    pub fn from_rewards(reward_bounds: &[(f64, f64)], gamma: f64, horizon: usize) -> Result<Self> {
        let g = discount_sum(gamma, horizon);
        Self::new(
            reward_bounds
                .iter()
                .map(|&(lo, hi)| (lo * g, hi * g))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lo(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.0).collect()
    }

    pub fn contains(&self, j: &[f64]) -> bool {
        j.len() == self.bounds.len()
            && j.iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// Coordinate-wise clamp.
    pub fn project(&self, j: &[f64]) -> Vec<f64> {
        j.iter()
            .zip(&self.bounds)
            .map(|(x, &(lo, hi))| x.clamp(lo, hi))
            .collect()
    }
}

/// Free-function form of [`OmegaBox::from_rewards`].
pub fn omega_box(reward_bounds: &[(f64, f64)], gamma: f64, horizon: usize) -> Result<OmegaBox> {
    OmegaBox::from_rewards(reward_bounds, gamma, horizon)
}

/// Free-function form of [`OmegaBox::project`].
pub fn project_omega(j: &[f64], omega: &OmegaBox) -> Vec<f64> {
    omega.project(j)
}
