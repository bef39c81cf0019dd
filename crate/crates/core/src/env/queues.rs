//! Server Queues.
//!
//! A single server faces `M` queues fed by independent Poisson arrivals. Each
//! step the server picks one queue: arrivals are added first, then the chosen
//! queue loses one client if it is non-empty, paying reward 1 on that
//! objective. Queue lengths are hidden; the policy sees how often each queue
//! has been served so far.

use rand_distr::{Distribution, Poisson};

use crate::error::{MorlError, Result};
use crate::mdp::{EnvSpec, Environment, State, StateEncoding};
use crate::rng::StreamRng;

/// Total offered load split evenly over the queues.
pub const DEFAULT_TOTAL_LOAD: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueState {
    pub t: usize,
    /// Hidden queue lengths.
    pub lengths: Vec<u64>,
    /// Service attempts per queue; the visible state.
    pub served: Vec<u64>,
    /// Clients that ever arrived per queue.
    pub arrivals: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct ServerQueues {
    rates: Vec<f64>,
    arrival_dists: Vec<Option<Poisson<f64>>>,
    spec: EnvSpec,
}

impl ServerQueues {
    pub fn default_rates(queues: usize) -> Vec<f64> {
        vec![DEFAULT_TOTAL_LOAD / queues.max(1) as f64; queues]
    }

    pub fn new(rates: Vec<f64>, horizon: usize, gamma: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(MorlError::Config(
                "server queues need at least one queue".into(),
            ));
        }
        let arrival_dists = rates
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    Ok(None)
                } else if l > 0.0 && l.is_finite() {
                    Poisson::new(l)
                        .map(Some)
                        .map_err(|e| MorlError::Config(format!("arrival rate {l}: {e}")))
                } else {
                    Err(MorlError::Config(format!(
                        "arrival rate must be >= 0, got {l}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let m = rates.len();
        let spec = EnvSpec {
            num_objectives: m,
            gamma,
            horizon,
            reward_bounds: vec![(0.0, 1.0); m],
            encoding: StateEncoding::Featurized { dim: m + 1 },
        };
        spec.validate()?;
        Ok(Self {
            rates,
            arrival_dists,
            spec,
        })
    }

    pub fn queues(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn initial_state(&self) -> QueueState {
        let m = self.queues();
        QueueState {
            t: 0,
            lengths: vec![0; m],
            served: vec![0; m],
            arrivals: vec![0; m],
        }
    }

    /// Serves queue `queue` for one step. Writes the reward and returns `done`.
    pub fn sq_step(
        &self,
        state: &mut QueueState,
        queue: usize,
        rng: &mut StreamRng,
        reward: &mut [f64],
    ) -> bool {
        assert!(queue < self.queues(), "queue index out of range");
        debug_assert!(state.t < self.spec.horizon);
        for (k, dist) in self.arrival_dists.iter().enumerate() {
            if let Some(d) = dist {
                let n = d.sample(rng) as u64;
                state.lengths[k] += n;
                state.arrivals[k] += n;
            }
        }
        reward.fill(0.0);
        if state.lengths[queue] > 0 {
            state.lengths[queue] -= 1;
            reward[queue] = 1.0;
        }
        state.served[queue] += 1;
        state.t += 1;
        state.t == self.spec.horizon
    }

    /// `(c_1/(t+1), ..., c_M/(t+1), 1)`.
    pub fn sq_observe(&self, state: &QueueState) -> Vec<f64> {
        let denom = (state.t + 1) as f64;
        state
            .served
            .iter()
            .map(|&c| c as f64 / denom)
            .chain(std::iter::once(1.0))
            .collect()
    }
}

impl Environment for ServerQueues {
    type Internal = QueueState;

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn num_actions(&self) -> usize {
        self.queues()
    }

    fn reset(&self, _rng: &mut StreamRng) -> QueueState {
        self.initial_state()
    }

    fn observe(&self, state: &QueueState) -> State {
        State::Features(self.sq_observe(state))
    }

    fn step(
        &self,
        state: &mut QueueState,
        action: usize,
        rng: &mut StreamRng,
        reward: &mut [f64],
    ) -> bool {
        self.sq_step(state, action, rng, reward)
    }
}

/// Number of visible states `binom(M + H - 1, M - 1)`, exactly.
pub fn sq_state_count(queues: usize, horizon: usize) -> Result<u64> {
    if queues == 0 || horizon == 0 {
        return Err(MorlError::Usage(
            "state count needs M >= 1 and H >= 1".into(),
        ));
    }
    let overflow =
        || MorlError::Overflow(format!("binom({}, {})", queues + horizon - 1, queues - 1));
    let n = (queues + horizon - 1) as u128;
    let k = (queues - 1).min(horizon) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) since acc = binom(n, i)
        acc = acc.checked_mul(n - i).ok_or_else(overflow)? / (i + 1);
    }
    u64::try_from(acc).map_err(|_| overflow())
}
