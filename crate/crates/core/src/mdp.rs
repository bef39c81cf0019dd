//! Vector-reward MDP abstraction, trajectories and discounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::policy::SoftmaxPolicy;
use crate::rng::{RngStream, StreamRng};

/// How states are presented to a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateEncoding {
    Tabular { states: usize },
    Featurized { dim: usize },
}

/// Static description shared by every environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub num_objectives: usize,
    pub gamma: f64,
    pub horizon: usize,
    /// Per-objective `(min, max)` of a single-step reward. Padding steps after
    /// absorption count as zero reward, so the bounds must contain 0 whenever
    /// an environment can terminate early.
    pub reward_bounds: Vec<(f64, f64)>,
    pub encoding: StateEncoding,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_objectives == 0 {
            return Err(MorlError::Config(
                "number of objectives must be >= 1".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(MorlError::Config(format!(
                "discount must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(MorlError::Config("horizon must be >= 1".into()));
        }
        if self.reward_bounds.len() != self.num_objectives {
            return Err(MorlError::Config(format!(
                "{} reward bounds for {} objectives",
                self.reward_bounds.len(),
                self.num_objectives
            )));
        }
        if let Some((m, _)) = self
            .reward_bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo <= hi))
        {
            return Err(MorlError::Config(format!(
                "reward bounds of objective {m} are inverted"
            )));
        }
        match self.encoding {
            StateEncoding::Tabular { states: 0 } | StateEncoding::Featurized { dim: 0 } => Err(
                MorlError::Config("state encoding must have size >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// A state as seen by the policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Index(usize),
    Features(Vec<f64>),
}

/// Finite-action environment with vector rewards.
///
/// `Internal` carries everything a running episode needs (including hidden
/// variables such as queue lengths). Implementations must be pure functions
/// of their inputs so trajectories can be sampled from many threads.
pub trait Environment: Sync {
    type Internal: Clone + Send;

    fn spec(&self) -> &EnvSpec;
    fn num_actions(&self) -> usize;
    fn reset(&self, rng: &mut StreamRng) -> Self::Internal;
    fn observe(&self, internal: &Self::Internal) -> State;
    /// Applies `action`, writes the reward vector into `reward` and returns
    /// `true` when the episode has reached an absorbing state.
    fn step(
        &self,
        internal: &mut Self::Internal,
        action: usize,
        rng: &mut StreamRng,
        reward: &mut [f64],
    ) -> bool;
}

/// Identifier of the parameter vector a trajectory was sampled under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SnapshotId(pub u64);

impl SnapshotId {
    /// FNV-1a over the bit patterns of `theta`.
    pub fn of(theta: &[f64]) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in theta {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        SnapshotId(h)
    }
}

/// Ordered `(state, action, reward)` triples. Rewards are stored flat,
/// `num_objectives` values per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    num_objectives: usize,
    states: Vec<State>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    pub origin: SnapshotId,
}

impl Trajectory {
    pub fn new(num_objectives: usize, origin: SnapshotId) -> Self {
        Self {
            num_objectives,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            origin,
        }
    }

    pub fn push(&mut self, state: State, action: usize, reward: &[f64]) {
        assert_eq!(reward.len(), self.num_objectives, "reward dimension");
        self.states.push(state);
        self.actions.push(action);
        self.rewards.extend_from_slice(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn num_objectives(&self) -> usize {
        self.num_objectives
    }

    pub fn state(&self, t: usize) -> &State {
        &self.states[t]
    }

    pub fn action(&self, t: usize) -> usize {
        self.actions[t]
    }

    pub fn reward(&self, t: usize) -> &[f64] {
        &self.rewards[t * self.num_objectives..(t + 1) * self.num_objectives]
    }

    pub fn steps(&self) -> impl Iterator<Item = (&State, usize, &[f64])> + '_ {
        self.states
            .iter()
            .zip(&self.actions)
            .zip(self.rewards.chunks_exact(self.num_objectives.max(1)))
            .map(|((s, &a), r)| (s, a, r))
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index(probs: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum; take the last supported action
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Rolls out one episode of at most `horizon` steps. All randomness (initial
/// state, actions, transitions) comes from `stream`.
pub fn sample_trajectory<E: Environment>(
    env: &E,
    policy: &SoftmaxPolicy,
    theta: &[f64],
    horizon: usize,
    stream: RngStream,
) -> Result<Trajectory> {
    policy.check_theta(theta)?;
    if policy.num_actions() != env.num_actions() {
        return Err(MorlError::Config(format!(
            "policy has {} actions, environment has {}",
            policy.num_actions(),
            env.num_actions()
        )));
    }
    if horizon == 0 {
        return Err(MorlError::Config("horizon must be >= 1".into()));
    }
    let m = env.spec().num_objectives;
    let mut rng = stream.rng();
    let mut internal = env.reset(&mut rng);
    let mut traj = Trajectory::new(m, SnapshotId::of(theta));
    let mut probs = vec![0.0; policy.num_actions()];
    let mut reward = vec![0.0; m];
    for _ in 0..horizon {
        let state = env.observe(&internal);
        policy.fill_probs(theta, &state, &mut probs)?;
        let action = sample_index(&probs, &mut rng);
        let done = env.step(&mut internal, action, &mut rng, &mut reward);
        traj.push(state, action, &reward);
        if done {
            break;
        }
    }
    Ok(traj)
}

/// `sum_t gamma^t r_t`, componentwise. Missing steps after absorption count as zero.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.num_objectives()];
    let mut discount = 1.0;
    for (_, _, r) in traj.steps() {
        for (o, x) in out.iter_mut().zip(r) {
            *o += discount * x;
        }
        discount *= gamma;
    }
    out
}

/// `sum_{t<H} gamma^t`.
pub fn discount_sum(gamma: f64, horizon: usize) -> f64 {
    if gamma == 1.0 {
        horizon as f64
    } else {
        (1.0 - gamma.powi(horizon as i32)) / (1.0 - gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discount_sum_examples() {
        assert_eq!(discount_sum(0.5, 3), 1.75);
        assert_eq!(discount_sum(1.0, 100), 100.0);
        let direct: f64 = (0..100).map(|t| 0.9999f64.powi(t)).sum();
        assert!((discount_sum(0.9999, 100) - direct).abs() < 1e-9);
        assert!((direct - 99.5066).abs() < 1e-4);
    }

    fn traj_from(rewards: &[Vec<f64>]) -> Trajectory {
        let mut t = Trajectory::new(rewards[0].len(), SnapshotId(0));
        for r in rewards {
            t.push(State::Index(0), 0, r);
        }
        t
    }

    #[test]
    fn discounted_return_examples() {
        let t = traj_from(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(discounted_return(&t, 0.5), vec![1.5, 1.5]);
        let t = traj_from(&vec![vec![0.0, 0.0]; 4]);
        assert_eq!(discounted_return(&t, 0.9), vec![0.0, 0.0]);
        let t = traj_from(&vec![vec![0.0, -1.0]; 37]);
        assert_eq!(discounted_return(&t, 1.0), vec![0.0, -37.0]);
    }

    #[test]
    fn spec_validation() {
        let ok = EnvSpec {
            num_objectives: 1,
            gamma: 1.0,
            horizon: 3,
            reward_bounds: vec![(0.0, 1.0)],
            encoding: StateEncoding::Tabular { states: 1 },
        };
        assert!(EnvSpec {
            gamma: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_ok());
        assert!(ok.validate().is_ok());
        let bad = [
            EnvSpec {
                gamma: -0.5,
                ..ok.clone()
            },
            EnvSpec {
                gamma: 1.5,
                ..ok.clone()
            },
            EnvSpec {
                reward_bounds: vec![(1.0, 0.0)],
                ..ok.clone()
            },
            EnvSpec {
                num_objectives: 0,
                reward_bounds: vec![],
                ..ok.clone()
            },
            EnvSpec {
                encoding: StateEncoding::Featurized { dim: 0 },
                ..ok.clone()
            },
        ];
        for b in bad {
            assert!(b.validate().is_err(), "{b:?}");
        }
    }

    proptest! {
        #[test]
        fn discounted_return_is_linear(
            rewards in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..20),
            gamma in 0.01f64..1.0,
            c in -3.0f64..3.0,
        ) {
            let base = discounted_return(&traj_from(&rewards), gamma);
            let scaled: Vec<Vec<f64>> = rewards.iter().map(|r| r.iter().map(|x| c * x).collect()).collect();
            let out = discounted_return(&traj_from(&scaled), gamma);
            for (a, b) in base.iter().zip(&out) {
                prop_assert!((c * a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
