//! Benchmark environments.

pub mod dst;
pub mod queues;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{EnvSpec, Environment, State};
use crate::policy::SoftmaxPolicy;
use crate::rng::StreamRng;

pub use dst::{DeepSeaTreasure, DstAction, DstLayout};
pub use queues::{sq_state_count, QueueState, ServerQueues};

/// Serializable environment selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    Dst {
        horizon: usize,
        gamma: f64,
    },
    ServerQueues {
        queues: usize,
        horizon: usize,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrival_rates: Option<Vec<f64>>,
    },
}

impl EnvConfig {
    pub fn dst_default() -> Self {
        EnvConfig::Dst {
            horizon: dst::DEFAULT_HORIZON,
            gamma: 1.0,
        }
    }

    pub fn server_queues_default() -> Self {
        EnvConfig::ServerQueues {
            queues: 8,
            horizon: 100,
            gamma: 0.9999,
            arrival_rates: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Dst { .. } => "dst",
            EnvConfig::ServerQueues { .. } => "server-queues",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvConfig::Dst { horizon, .. } | EnvConfig::ServerQueues { horizon, .. } => *horizon,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            EnvConfig::Dst { gamma, .. } | EnvConfig::ServerQueues { gamma, .. } => *gamma,
        }
    }

    pub fn objectives(&self) -> usize {
        match self {
            EnvConfig::Dst { .. } => 2,
            EnvConfig::ServerQueues { queues, .. } => *queues,
        }
    }

    /// Same environment with horizon and discount replaced.
    pub fn with_horizon_gamma(&self, h: usize, g: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            EnvConfig::Dst { horizon, gamma } | EnvConfig::ServerQueues { horizon, gamma, .. } => {
                *horizon = h;
                *gamma = g;
            }
        }
        out
    }

    pub fn build(&self) -> Result<BenchmarkEnv> {
        Ok(match self {
            EnvConfig::Dst { horizon, gamma } => BenchmarkEnv::Dst(DeepSeaTreasure::new(
                DstLayout::default_map(),
                *horizon,
                *gamma,
            )?),
            EnvConfig::ServerQueues {
                queues,
                horizon,
                gamma,
                arrival_rates,
            } => {
                let rates = arrival_rates
                    .clone()
                    .unwrap_or_else(|| ServerQueues::default_rates(*queues));
                BenchmarkEnv::Queues(ServerQueues::new(rates, *horizon, *gamma)?)
            }
        })
    }
}

/// Either shipped benchmark behind one `Environment` impl.
#[derive(Clone, Debug)]
pub enum BenchmarkEnv {
    Dst(DeepSeaTreasure),
    Queues(ServerQueues),
}

#[derive(Clone, Debug)]
pub enum BenchmarkState {
    Dst((usize, usize)),
    Queues(QueueState),
}

impl BenchmarkEnv {
    /// Tabular softmax for DeepSeaTreasure, linear softmax over the service
    /// share features for Server Queues.
    pub fn default_policy(&self) -> SoftmaxPolicy {
        match self {
            BenchmarkEnv::Dst(e) => SoftmaxPolicy::tabular(e.layout().cells(), 4),
            BenchmarkEnv::Queues(e) => SoftmaxPolicy::linear(e.queues() + 1, e.queues()),
        }
    }
}

impl Environment for BenchmarkEnv {
    type Internal = BenchmarkState;

    fn spec(&self) -> &EnvSpec {
        match self {
            BenchmarkEnv::Dst(e) => e.spec(),
            BenchmarkEnv::Queues(e) => e.spec(),
        }
    }

    fn num_actions(&self) -> usize {
        match self {
            BenchmarkEnv::Dst(e) => e.num_actions(),
            BenchmarkEnv::Queues(e) => e.num_actions(),
        }
    }

    fn reset(&self, rng: &mut StreamRng) -> BenchmarkState {
        match self {
            BenchmarkEnv::Dst(e) => BenchmarkState::Dst(e.reset(rng)),
            BenchmarkEnv::Queues(e) => BenchmarkState::Queues(e.reset(rng)),
        }
    }

    fn observe(&self, internal: &BenchmarkState) -> State {
        match (self, internal) {
            (BenchmarkEnv::Dst(e), BenchmarkState::Dst(s)) => e.observe(s),
            (BenchmarkEnv::Queues(e), BenchmarkState::Queues(s)) => e.observe(s),
            _ => panic!("state does not belong to this environment"),
        }
    }

    fn step(
        &self,
        internal: &mut BenchmarkState,
        action: usize,
        rng: &mut StreamRng,
        reward: &mut [f64],
    ) -> bool {
        match (self, internal) {
            (BenchmarkEnv::Dst(e), BenchmarkState::Dst(s)) => e.step(s, action, rng, reward),
            (BenchmarkEnv::Queues(e), BenchmarkState::Queues(s)) => e.step(s, action, rng, reward),
            _ => panic!("state does not belong to this environment"),
        }
    }
}
