//! Exact computations on small tabular MDPs: forward-propagated values,
//! their parameter Jacobians and brute-force trajectory enumeration.
//! No trajectory is ever sampled here; every result is deterministic.

mod corpus;

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::mdp::{EnvSpec, Environment, SnapshotId, State, StateEncoding, Trajectory};
use crate::policy::SoftmaxPolicy;
use crate::rng::StreamRng;
use crate::scalarization::ScalarizationSpec;

pub use corpus::{generate_corpus, CorpusEntry, CORPUS_DENOMINATOR, CORPUS_SEED};

/// Default cap on the number of enumerated trajectories.
pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Explicit finite MDP. Episodes never terminate early; the horizon is
/// supplied by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    /// `transitions[s][a][s']`
    transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a][m]`
    rewards: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
    gamma: f64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err(MorlError::Config(format!(
            "{what} has a negative or NaN entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(MorlError::Config(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self {
            transitions,
            rewards,
            initial,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Checks shapes and that every distribution sums to one within 1e-12.
    pub fn validate(&self) -> Result<()> {
        let s = self.initial.len();
        if s == 0 {
            return Err(MorlError::Config(
                "tabular MDP needs at least one state".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(MorlError::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        check_distribution(&self.initial, "initial distribution")?;
        if self.transitions.len() != s || self.rewards.len() != s {
            return Err(MorlError::Config(
                "transition or reward table has the wrong number of states".into(),
            ));
        }
        let a = self.transitions[0].len();
        let m = self.rewards[0].first().map_or(0, Vec::len);
        if a == 0 || m == 0 {
            return Err(MorlError::Config(
                "tabular MDP needs actions and objectives".into(),
            ));
        }
        for st in 0..s {
            if self.transitions[st].len() != a || self.rewards[st].len() != a {
                return Err(MorlError::Config(format!(
                    "state {st} has the wrong number of actions"
                )));
            }
            for ac in 0..a {
                let p = &self.transitions[st][ac];
                if p.len() != s {
                    return Err(MorlError::Config(format!(
                        "P(.|{st},{ac}) has length {}",
                        p.len()
                    )));
                }
                check_distribution(p, &format!("P(.|{st},{ac})"))?;
                let r = &self.rewards[st][ac];
                if r.len() != m || r.iter().any(|x| !x.is_finite()) {
                    return Err(MorlError::Config(format!("r({st},{ac}) is malformed")));
                }
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn actions(&self) -> usize {
        self.transitions[0].len()
    }

    pub fn objectives(&self) -> usize {
        self.rewards[0][0].len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> &[f64] {
        &self.rewards[s][a]
    }

    /// Tabular softmax policy of matching shape.
    pub fn policy(&self) -> SoftmaxPolicy {
        SoftmaxPolicy::tabular(self.states(), self.actions())
    }

    /// Per-objective `(min, max)` over the reward table.
    pub fn reward_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.objectives())
            .map(|m| {
                self.rewards
                    .iter()
                    .flatten()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[m]), hi.max(r[m]))
                    })
            })
            .collect()
    }

    /// Samplable view with a fixed horizon.
    pub fn env(&self, horizon: usize) -> Result<TabularEnv<'_>> {
        let spec = EnvSpec {
            num_objectives: self.objectives(),
            gamma: self.gamma,
            horizon,
            reward_bounds: self.reward_bounds(),
            encoding: StateEncoding::Tabular {
                states: self.states(),
            },
        };
        spec.validate()?;
        Ok(TabularEnv { mdp: self, spec })
    }

    fn policy_table(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let policy = self.policy();
        (0..self.states())
            .map(|s| policy.action_distribution(theta, &State::Index(s)))
            .collect()
    }
}

pub struct TabularEnv<'a> {
    mdp: &'a TabularMdp,
    spec: EnvSpec,
}

fn draw(probs: &[f64], rng: &mut StreamRng) -> usize {
    crate::mdp::sample_index(probs, rng)
}

impl Environment for TabularEnv<'_> {
    type Internal = usize;

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn num_actions(&self) -> usize {
        self.mdp.actions()
    }

    fn reset(&self, rng: &mut StreamRng) -> usize {
        draw(&self.mdp.initial, rng)
    }

    fn observe(&self, s: &usize) -> State {
        State::Index(*s)
    }

    fn step(&self, s: &mut usize, action: usize, rng: &mut StreamRng, reward: &mut [f64]) -> bool {
        reward.copy_from_slice(self.mdp.reward(*s, action));
        *s = draw(self.mdp.transition(*s, action), rng);
        false
    }
}

/// `J^H(theta)` by propagating the state distribution forward `H` steps.
pub fn exact_truncated_value(mdp: &TabularMdp, theta: &[f64], horizon: usize) -> Result<Vec<f64>> {
    Ok(value_and_jacobian(mdp, theta, horizon, false)?.0)
}

/// `d J^H_m / d theta` as an `M x dim` matrix (row per objective).
pub fn exact_jacobian(mdp: &TabularMdp, theta: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>> {
    Ok(value_and_jacobian(mdp, theta, horizon, true)?.1)
}

/// `grad_theta f(J^H(theta))`.
pub fn exact_scalarized_gradient(
    mdp: &TabularMdp,
    theta: &[f64],
    horizon: usize,
    spec: &ScalarizationSpec,
) -> Result<Vec<f64>> {
    let (j, jac) = value_and_jacobian(mdp, theta, horizon, true)?;
    let dfdj = spec.scalarize_grad(&j)?;
    Ok(contract(&jac, &dfdj))
}

/// `(grad J^H(theta))^T w` for a fixed objective weighting `w`.
pub fn exact_weighted_gradient(
    mdp: &TabularMdp,
    theta: &[f64],
    horizon: usize,
    w: &[f64],
) -> Result<Vec<f64>> {
    if w.len() != mdp.objectives() {
        return Err(MorlError::Config(format!(
            "{} weights for {} objectives",
            w.len(),
            mdp.objectives()
        )));
    }
    Ok(contract(&exact_jacobian(mdp, theta, horizon)?, w))
}

fn contract(jac: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let dim = jac.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (row, wm) in jac.iter().zip(w) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += wm * x;
        }
    }
    out
}

/// Forward recursion on `d_t(s)` and, when asked, on its derivative
/// `dd_t(s, k)`.
fn value_and_jacobian(
    mdp: &TabularMdp,
    theta: &[f64],
    horizon: usize,
    with_jacobian: bool,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (ns, na, nm) = (mdp.states(), mdp.actions(), mdp.objectives());
    let dim = ns * na;
    let pi = mdp.policy_table(theta)?;
    let mut value = vec![0.0; nm];
    let mut jac = if with_jacobian {
        vec![vec![0.0; dim]; nm]
    } else {
        Vec::new()
    };
    let mut d = mdp.initial.clone();
    let mut dd = vec![vec![0.0; dim]; if with_jacobian { ns } else { 0 }];
    let mut discount = 1.0;
    for t in 0..horizon {
        let mut d_next = vec![0.0; ns];
        let mut dd_next = vec![vec![0.0; dim]; dd.len()];
        for s in 0..ns {
            for a in 0..na {
                let p = pi[s][a];
                let mass = d[s] * p;
                // derivative of d(s) pi(a|s) w.r.t. theta
                let mut dmass = Vec::new();
                if with_jacobian {
                    dmass = dd[s].iter().map(|x| x * p).collect();
                    for b in 0..na {
                        let indicator = if a == b { 1.0 } else { 0.0 };
                        dmass[s * na + b] += d[s] * p * (indicator - pi[s][b]);
                    }
                }
                let r = mdp.reward(s, a);
                for m in 0..nm {
                    value[m] += discount * mass * r[m];
                    if with_jacobian {
                        for (j, x) in jac[m].iter_mut().zip(&dmass) {
                            *j += discount * r[m] * x;
                        }
                    }
                }
                if t + 1 < horizon {
                    for (s2, q) in mdp.transition(s, a).iter().enumerate() {
                        d_next[s2] += mass * q;
                        if with_jacobian {
                            for (o, x) in dd_next[s2].iter_mut().zip(&dmass) {
                                *o += q * x;
                            }
                        }
                    }
                }
            }
        }
        d = d_next;
        dd = dd_next;
        discount *= mdp.gamma;
    }
    Ok((value, jac))
}

/// Probability of the state-action sequence of `traj` under `theta`.
pub fn trajectory_probability(mdp: &TabularMdp, theta: &[f64], traj: &Trajectory) -> Result<f64> {
    let pi = mdp.policy_table(theta)?;
    let mut prob = 1.0;
    let mut prev: Option<(usize, usize)> = None;
    for (state, action, _) in traj.steps() {
        let s = match state {
            State::Index(s) if *s < mdp.states() => *s,
            _ => {
                return Err(MorlError::Config(
                    "trajectory state is not a valid index".into(),
                ))
            }
        };
        if action >= mdp.actions() {
            return Err(MorlError::Config(format!("action {action} out of range")));
        }
        prob *= match prev {
            None => mdp.initial[s],
            Some((ps, pa)) => mdp.transition(ps, pa)[s],
        };
        prob *= pi[s][action];
        prev = Some((s, action));
    }
    Ok(prob)
}

/// `sum_tau Pr_theta(tau) functional(tau)` over every length-`H`
/// trajectory with positive probability. Refuses when `(|S| |A|)^H`
/// exceeds `budget`.
pub fn enumerate_expectation<F>(
    mdp: &TabularMdp,
    theta: &[f64],
    horizon: usize,
    budget: u128,
    mut functional: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&Trajectory) -> Result<Vec<f64>>,
{
    let (ns, na) = (mdp.states(), mdp.actions());
    let branch = (ns * na) as u128;
    let required = u32::try_from(horizon)
        .ok()
        .and_then(|h| branch.checked_pow(h))
        .unwrap_or(u128::MAX);
    if required > budget {
        return Err(MorlError::BudgetExceeded { required, budget });
    }
    let pi = mdp.policy_table(theta)?;
    let mut total: Option<Vec<f64>> = None;
    // odometer over (s_0, a_0, ..., s_{H-1}, a_{H-1})
    let mut digits = vec![0usize; horizon];
    loop {
        let mut prob = 1.0;
        for (t, &code) in digits.iter().enumerate() {
            let (s, a) = (code / na, code % na);
            prob *= if t == 0 {
                mdp.initial[s]
            } else {
                let prev = digits[t - 1];
                mdp.transition(prev / na, prev % na)[s]
            };
            prob *= pi[s][a];
            if prob == 0.0 {
                break;
            }
        }
        if prob > 0.0 {
            let mut traj = Trajectory::new(mdp.objectives(), SnapshotId::of(theta));
            for &code in &digits {
                let (s, a) = (code / na, code % na);
                traj.push(State::Index(s), a, mdp.reward(s, a));
            }
            let value = functional(&traj)?;
            match &mut total {
                None => total = Some(value.iter().map(|v| prob * v).collect()),
                Some(acc) => {
                    if acc.len() != value.len() {
                        return Err(MorlError::Usage("functional changed output length".into()));
                    }
                    for (o, v) in acc.iter_mut().zip(&value) {
                        *o += prob * v;
                    }
                }
            }
        }
        // advance
        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(total.unwrap_or_default());
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < ns * na {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_diff_grad<F>(f: F, theta: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            x[k] = theta[k] + step;
            let up = f(&x);
            x[k] = theta[k] - step;
            let down = f(&x);
            x[k] = theta[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}
