//! Differentiable stochastic policies.
//!
//! Parameters live in a flat `&[f64]`; the policy values here only carry the
//! shape. Tabular softmax stores logits row-major by state
//! (`theta[s * actions + a]`), linear softmax stores one weight vector per
//! action (`theta[a * features + k]`).

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::mdp::State;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SoftmaxPolicy {
    Tabular { states: usize, actions: usize },
    Linear { features: usize, actions: usize },
}

impl SoftmaxPolicy {
    pub fn tabular(states: usize, actions: usize) -> Self {
        SoftmaxPolicy::Tabular { states, actions }
    }

    pub fn linear(features: usize, actions: usize) -> Self {
        SoftmaxPolicy::Linear { features, actions }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SoftmaxPolicy::Tabular { states, actions } => states * actions,
            SoftmaxPolicy::Linear { features, actions } => features * actions,
        }
    }

    pub fn num_actions(&self) -> usize {
        match *self {
            SoftmaxPolicy::Tabular { actions, .. } | SoftmaxPolicy::Linear { actions, .. } => {
                actions
            }
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(MorlError::Config(format!(
                "parameter vector has length {}, policy expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, state: &State) -> Result<()> {
        match (self, state) {
            (SoftmaxPolicy::Tabular { states, .. }, State::Index(s)) if s < states => Ok(()),
            (SoftmaxPolicy::Linear { features, .. }, State::Features(phi))
                if phi.len() == *features =>
            {
                Ok(())
            }
            _ => Err(MorlError::Config(format!(
                "state {state:?} does not match policy {self:?}"
            ))),
        }
    }

    fn check(&self, theta: &[f64], state: &State) -> Result<()> {
        self.check_theta(theta)?;
        self.check_state(state)
    }

    fn fill_logits(&self, theta: &[f64], state: &State, out: &mut [f64]) {
        match (self, state) {
            (SoftmaxPolicy::Tabular { actions, .. }, State::Index(s)) => {
                out.copy_from_slice(&theta[s * actions..(s + 1) * actions]);
            }
            (SoftmaxPolicy::Linear { features, .. }, State::Features(phi)) => {
                for (a, o) in out.iter_mut().enumerate() {
                    let w = &theta[a * features..(a + 1) * features];
                    *o = w.iter().zip(phi).map(|(w, x)| w * x).sum();
                }
            }
            _ => unreachable!("state checked against policy"),
        }
    }

    /// Log-softmax of the logits, shifted by the max for stability.
    pub(crate) fn fill_log_probs(&self, theta: &[f64], state: &State, out: &mut [f64]) {
        self.fill_logits(theta, state, out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        for z in out.iter_mut() {
            *z -= lse;
        }
    }

    pub(crate) fn fill_probs(&self, theta: &[f64], state: &State, out: &mut [f64]) -> Result<()> {
        self.check(theta, state)?;
        self.fill_logits(theta, state, out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in out.iter_mut() {
            *z = (*z - max).exp();
            total += *z;
        }
        for z in out.iter_mut() {
            *z /= total;
        }
        Ok(())
    }

    /// `pi_theta(. | state)`.
    pub fn action_distribution(&self, theta: &[f64], state: &State) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_actions()];
        self.fill_probs(theta, state, &mut out)?;
        Ok(out)
    }

    pub fn log_prob(&self, theta: &[f64], state: &State, action: usize) -> Result<f64> {
        self.check(theta, state)?;
        self.check_action(action)?;
        let mut out = vec![0.0; self.num_actions()];
        self.fill_log_probs(theta, state, &mut out);
        Ok(out[action])
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.num_actions() {
            return Err(MorlError::Config(format!(
                "action {action} out of range for {} actions",
                self.num_actions()
            )));
        }
        Ok(())
    }

    /// `grad_theta log pi_theta(action | state)` as a dense vector.
    pub fn grad_log_prob(&self, theta: &[f64], state: &State, action: usize) -> Result<Vec<f64>> {
        self.check(theta, state)?;
        self.check_action(action)?;
        let mut probs = vec![0.0; self.num_actions()];
        self.fill_probs(theta, state, &mut probs)?;
        let mut out = vec![0.0; self.dim()];
        self.add_scaled_score(state, action, &probs, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * grad log pi(action | state)` given the action
    /// probabilities at that state. Touches only the affected block for the
    /// tabular case.
    pub(crate) fn add_scaled_score(
        &self,
        state: &State,
        action: usize,
        probs: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        match (self, state) {
            (SoftmaxPolicy::Tabular { actions, .. }, State::Index(s)) => {
                let block = &mut out[s * actions..(s + 1) * actions];
                for (b, (o, p)) in block.iter_mut().zip(probs).enumerate() {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    *o += scale * (indicator - p);
                }
            }
            (SoftmaxPolicy::Linear { features, .. }, State::Features(phi)) => {
                for (b, p) in probs.iter().enumerate() {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    let coef = scale * (indicator - p);
                    if coef == 0.0 {
                        continue;
                    }
                    let block = &mut out[b * features..(b + 1) * features];
                    for (o, x) in block.iter_mut().zip(phi) {
                        *o += coef * x;
                    }
                }
            }
            _ => unreachable!("state checked against policy"),
        }
    }
}

/// Linear-mean Gaussian policy with a fixed standard deviation, over a
/// scalar continuous action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub features: usize,
    pub std: f64,
}

impl GaussianPolicy {
    pub fn new(features: usize, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(MorlError::Config(format!(
                "Gaussian std must be > 0, got {std}"
            )));
        }
        Ok(Self { features, std })
    }

    pub fn dim(&self) -> usize {
        self.features
    }

    fn check(&self, theta: &[f64], phi: &[f64]) -> Result<()> {
        if theta.len() != self.features || phi.len() != self.features {
            return Err(MorlError::Config(format!(
                "Gaussian policy expects {} weights and features, got {} and {}",
                self.features,
                theta.len(),
                phi.len()
            )));
        }
        Ok(())
    }

    pub fn mean(&self, theta: &[f64], phi: &[f64]) -> Result<f64> {
        self.check(theta, phi)?;
        Ok(theta.iter().zip(phi).map(|(w, x)| w * x).sum())
    }

    pub fn log_prob(&self, theta: &[f64], phi: &[f64], action: f64) -> Result<f64> {
        let z = (action - self.mean(theta, phi)?) / self.std;
        Ok(-0.5 * z * z - (self.std * (2.0 * std::f64::consts::PI).sqrt()).ln())
    }

    /// `phi (a - mu) / std^2`.
    pub fn grad_log_prob(&self, theta: &[f64], phi: &[f64], action: f64) -> Result<Vec<f64>> {
        let coef = (action - self.mean(theta, phi)?) / (self.std * self.std);
        Ok(phi.iter().map(|x| coef * x).collect())
    }
}

/// Snapshot of a parameter vector together with its shape, as written to
/// run logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
    pub parameterization: Parameterization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parameterization {
    Softmax(SoftmaxPolicy),
    Gaussian(GaussianPolicy),
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>, parameterization: Parameterization) -> Result<Self> {
        let dim = match &parameterization {
            Parameterization::Softmax(p) => p.dim(),
            Parameterization::Gaussian(p) => p.dim(),
        };
        if theta.len() != dim {
            return Err(MorlError::Config(format!(
                "parameter vector has length {}, shape expects {dim}",
                theta.len()
            )));
        }
        Ok(Self {
            theta,
            parameterization,
        })
    }
}

/// Bounds on the score function and its Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConstants {
    /// `||grad log pi|| <= g`
    pub g: f64,
    /// `||hess log pi|| <= s`
    pub s: f64,
}

impl Default for PolicyConstants {
    /// Tabular softmax values.
    fn default() -> Self {
        Self {
            g: std::f64::consts::SQRT_2,
            s: 1.0,
        }
    }
}

impl PolicyConstants {
    pub fn new(g: f64, s: f64) -> Result<Self> {
        if !(g > 0.0 && s > 0.0) {
            return Err(MorlError::Config(format!(
                "policy constants must be positive, got G={g}, S={s}"
            )));
        }
        Ok(Self { g, s })
    }
}
