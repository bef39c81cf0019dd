use std::path::PathBuf;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::{Checkpoint, EpochRecord, TrainLog};
use super::theory::{variance_constants, ConstantInputs, TheoryConstants};
use super::{episodes_per_epoch, project_ball, Algorithm, Hyperparams};
use crate::error::{MorlError, Result};
use crate::estimators::{objective_weights, Estimator};
use crate::mdp::{sample_trajectory, Environment};
use crate::policy::{Parameterization, PolicyConstants, PolicyParams, SoftmaxPolicy};
use crate::rng::RngStream;
use crate::scalarization::{OmegaBox, ScalarizationSpec};

/// Epoch index reserved for the initialization stream.
const INIT_EPOCH: u64 = u64::MAX;

/// The objects a training run works on.
#[derive(Clone, Copy)]
pub struct Problem<'a, E: Environment> {
    pub env: &'a E,
    pub policy: &'a SoftmaxPolicy,
    pub spec: &'a ScalarizationSpec,
}

impl<'a, E: Environment> Problem<'a, E> {
    pub fn new(env: &'a E, policy: &'a SoftmaxPolicy, spec: &'a ScalarizationSpec) -> Self {
        Self { env, policy, spec }
    }

    /// Box of attainable returns for the run's discount and horizon.
    pub fn omega(&self, hyper: &Hyperparams) -> Result<OmegaBox> {
        OmegaBox::from_rewards(&self.env.spec().reward_bounds, hyper.gamma, hyper.horizon)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaInit {
    /// Uniform policy.
    #[default]
    Zeros,
    /// Independent `N(0, scale^2)` entries drawn from the run seed.
    Gaussian { scale: f64 },
}

impl ThetaInit {
    pub fn draw(self, dim: usize, run_seed: u64) -> Result<Vec<f64>> {
        match self {
            ThetaInit::Zeros => Ok(vec![0.0; dim]),
            ThetaInit::Gaussian { scale } => {
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(MorlError::Config(format!(
                        "init scale must be >= 0, got {scale}"
                    )));
                }
                let mut rng = RngStream::new(run_seed, INIT_EPOCH, 0, 0).rng();
                Ok((0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointPolicy {
    /// Save after every `every` completed epochs.
    pub every: usize,
    pub path: PathBuf,
    /// Print one progress line to standard error per checkpoint.
    pub report: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub run_seed: u64,
    pub init: ThetaInit,
    /// When false every `wall_ms` is zero, so logs compare bitwise.
    pub record_wall_time: bool,
    pub checkpoint: Option<CheckpointPolicy>,
    /// Used only for the diagnostic constants attached to the log.
    pub policy_constants: PolicyConstants,
}

impl TrainOptions {
    pub fn new(run_seed: u64) -> Self {
        Self {
            run_seed,
            init: ThetaInit::Zeros,
            record_wall_time: false,
            checkpoint: None,
            policy_constants: PolicyConstants::default(),
        }
    }
}

/// Reported after every parameter update.
#[derive(Clone, Copy, Debug)]
pub struct IterationEvent<'a> {
    pub epoch: usize,
    /// Inner iteration index `j` of the update `theta_j -> theta_{j+1}`.
    pub iteration: usize,
    pub before: &'a [f64],
    pub after: &'a [f64],
    /// Projected return estimate the update was computed at.
    pub j_hat: &'a [f64],
}

impl IterationEvent<'_> {
    pub fn step_norm(&self) -> f64 {
        self.before
            .iter()
            .zip(self.after)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub type Observer<'o> = Option<&'o mut dyn FnMut(&IterationEvent<'_>)>;

pub fn mo_pg_train<E: Environment>(
    problem: &Problem<'_, E>,
    hyper: &Hyperparams,
    options: &TrainOptions,
) -> Result<TrainLog> {
    run_training(Algorithm::MoPg, problem, hyper, options, None)
}

pub fn mo_tsivr_pg_train<E: Environment>(
    problem: &Problem<'_, E>,
    hyper: &Hyperparams,
    options: &TrainOptions,
) -> Result<TrainLog> {
    run_training(Algorithm::MoTsivrPg, problem, hyper, options, None)
}

/// Trains from scratch. Trajectories of a batch are sampled on the current
/// rayon pool; reductions run in trajectory order, so the log does not
/// depend on the pool size.
pub fn run_training<E: Environment>(
    algo: Algorithm,
    problem: &Problem<'_, E>,
    hyper: &Hyperparams,
    options: &TrainOptions,
    observer: Observer<'_>,
) -> Result<TrainLog> {
    hyper.validate(algo)?;
    let theta = options.init.draw(problem.policy.dim(), options.run_seed)?;
    let start = Checkpoint {
        algorithm: algo,
        seed: options.run_seed,
        next_epoch: 0,
        theta,
        records: Vec::new(),
        elapsed_ms: 0,
    };
    Trainer::new(algo, problem, hyper, options)?.run(start, observer)
}

/// Continues a run from a checkpoint written by the same configuration.
pub fn resume_training<E: Environment>(
    problem: &Problem<'_, E>,
    hyper: &Hyperparams,
    options: &TrainOptions,
    checkpoint: Checkpoint,
    observer: Observer<'_>,
) -> Result<TrainLog> {
    hyper.validate(checkpoint.algorithm)?;
    if checkpoint.seed != options.run_seed {
        return Err(MorlError::Config(format!(
            "checkpoint was written for seed {}, resuming with seed {}",
            checkpoint.seed, options.run_seed
        )));
    }
    if checkpoint.next_epoch > hyper.epochs || checkpoint.records.len() != checkpoint.next_epoch {
        return Err(MorlError::Config(format!(
            "checkpoint at epoch {} with {} records does not fit T = {}",
            checkpoint.next_epoch,
            checkpoint.records.len(),
            hyper.epochs
        )));
    }
    problem.policy.check_theta(&checkpoint.theta)?;
    Trainer::new(checkpoint.algorithm, problem, hyper, options)?.run(checkpoint, observer)
}

struct Trainer<'p, 'a, E: Environment> {
    algo: Algorithm,
    problem: &'p Problem<'a, E>,
    hyper: &'p Hyperparams,
    options: &'p TrainOptions,
    omega: OmegaBox,
    est: Estimator<'a>,
}

/// Sums of per-trajectory quantities over one batch.
struct BatchSum {
    value: Vec<f64>,
    steps: u64,
}

impl<'p, 'a, E: Environment> Trainer<'p, 'a, E> {
    fn new(
        algo: Algorithm,
        problem: &'p Problem<'a, E>,
        hyper: &'p Hyperparams,
        options: &'p TrainOptions,
    ) -> Result<Self> {
        let omega = problem.omega(hyper)?;
        if omega.dim() != problem.env.spec().num_objectives {
            return Err(MorlError::Config(
                "return box and environment disagree on M".into(),
            ));
        }
        Ok(Self {
            algo,
            problem,
            hyper,
            options,
            omega,
            est: Estimator::new(problem.policy, hyper.gamma),
        })
    }

    /// Samples trajectories `first .. first + count` of the stream under
    /// `theta` and sums `per_traj` over them in index order.
    fn batch<F>(
        &self,
        stream: RngStream,
        first: u64,
        count: usize,
        theta: &[f64],
        dim: usize,
        per_traj: F,
    ) -> Result<BatchSum>
    where
        F: Fn(&crate::mdp::Trajectory, &mut [f64]) -> Result<()> + Sync,
    {
        let parts: Vec<(Vec<f64>, u64)> = (0..count as u64)
            .into_par_iter()
            .map(|k| {
                let traj = sample_trajectory(
                    self.problem.env,
                    self.problem.policy,
                    theta,
                    self.hyper.horizon,
                    stream.with_trajectory(first + k),
                )?;
                let mut v = vec![0.0; dim];
                per_traj(&traj, &mut v)?;
                Ok((v, traj.len() as u64))
            })
            .collect::<Result<_>>()?;
        let mut value = vec![0.0; dim];
        let mut steps = 0;
        for (v, s) in &parts {
            for (o, x) in value.iter_mut().zip(v) {
                *o += x;
            }
            steps += s;
        }
        let n = count as f64;
        value.iter_mut().for_each(|x| *x /= n);
        Ok(BatchSum { value, steps })
    }

    /// `J` at `theta` from `N` on-policy trajectories, then `g` at the
    /// projected `J` from `N` fresh ones.
    fn anchor(&self, epoch: usize, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, u64)> {
        let n = self.hyper.batch;
        let m = self.omega.dim();
        let stream = RngStream::new(self.options.run_seed, epoch as u64, 0, 0);
        let ret = self.batch(stream, 0, n, theta, m, |traj, out| {
            self.est.add_return(traj, theta, theta, 1.0, out)
        })?;
        let p = self.omega.project(&ret.value);
        let dfdj = objective_weights(&p, self.problem.spec, &self.omega)?;
        let grad = self.batch(
            stream,
            n as u64,
            n,
            theta,
            self.problem.policy.dim(),
            |traj, out| self.est.add_gradient(traj, theta, theta, &dfdj, 1.0, out),
        )?;
        Ok((ret.value, p, grad.value, ret.steps + grad.steps))
    }

    fn constants(&self) -> Option<TheoryConstants> {
        let g = self.options.policy_constants.g;
        let radius = if self.hyper.radius.is_finite() {
            self.hyper.radius
        } else {
            1.0 / (2.0 * g * self.hyper.horizon as f64)
        };
        variance_constants(&ConstantInputs {
            policy: self.options.policy_constants,
            grad_bound: self.problem.spec.grad_bound,
            lipschitz: self.problem.spec.lipschitz,
            objectives: self.omega.dim(),
            gamma: self.hyper.gamma,
            horizon: self.hyper.horizon,
            radius,
        })
        .ok()
        .filter(|c| {
            [c.l_theta, c.d_j, c.c1, c.c2, c.c3]
                .iter()
                .all(|x| x.is_finite())
        })
    }

    fn run(&self, start: Checkpoint, mut observer: Observer<'_>) -> Result<TrainLog> {
        let clock = Instant::now();
        let per_epoch = episodes_per_epoch(self.algo, self.hyper);
        let Checkpoint {
            next_epoch,
            mut theta,
            mut records,
            elapsed_ms,
            ..
        } = start;
        let mut episodes = records.last().map_or(0, |r| r.episodes);
        let mut steps = records.last().map_or(0, |r| r.steps);
        for epoch in next_epoch..self.hyper.epochs {
            let theta_norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (f_value, epoch_steps) = match self.algo {
                Algorithm::MoPg => self.mo_pg_epoch(epoch, &mut theta, &mut observer)?,
                Algorithm::MoTsivrPg => self.tsivr_epoch(epoch, &mut theta, &mut observer)?,
            };
            episodes += per_epoch;
            steps += epoch_steps;
            let wall_ms = if self.options.record_wall_time {
                elapsed_ms + clock.elapsed().as_millis() as u64
            } else {
                0
            };
            records.push(EpochRecord {
                epoch,
                episodes,
                steps,
                f_value,
                theta_norm,
                wall_ms,
            });
            if let Some(cp) = &self.options.checkpoint {
                let done = epoch + 1;
                if cp.every > 0 && done % cp.every == 0 && done < self.hyper.epochs {
                    Checkpoint {
                        algorithm: self.algo,
                        seed: self.options.run_seed,
                        next_epoch: done,
                        theta: theta.clone(),
                        records: records.clone(),
                        elapsed_ms: wall_ms,
                    }
                    .save(&cp.path)?;
                    if cp.report {
                        eprintln!(
                            "{} seed {}: epoch {done}/{} f = {f_value:.6}",
                            self.algo, self.options.run_seed, self.hyper.epochs
                        );
                    }
                }
            }
        }
        Ok(TrainLog {
            algorithm: self.algo,
            hyper: self.hyper.clone(),
            scalarization: self.problem.spec.clone(),
            seed: self.options.run_seed,
            records,
            final_params: PolicyParams::new(
                theta,
                Parameterization::Softmax(self.problem.policy.clone()),
            )?,
            constants: self.constants(),
        })
    }

    fn mo_pg_epoch(
        &self,
        epoch: usize,
        theta: &mut Vec<f64>,
        observer: &mut Observer<'_>,
    ) -> Result<(f64, u64)> {
        let (_, p, g, steps) = self.anchor(epoch, theta)?;
        let f = self.problem.spec.scalarize(&p)?;
        let next: Vec<f64> = theta
            .iter()
            .zip(&g)
            .map(|(t, d)| t + self.hyper.step_size * d)
            .collect();
        if let Some(obs) = observer.as_mut() {
            obs(&IterationEvent {
                epoch,
                iteration: 0,
                before: theta,
                after: &next,
                j_hat: &p,
            });
        }
        *theta = next;
        Ok((f, steps))
    }

    fn tsivr_epoch(
        &self,
        epoch: usize,
        theta: &mut Vec<f64>,
        observer: &mut Observer<'_>,
    ) -> Result<(f64, u64)> {
        let h = self.hyper;
        let m_obj = self.omega.dim();
        let dim = self.problem.policy.dim();
        let (mut j, mut p, mut g, mut steps) = self.anchor(epoch, theta)?;
        let f = self.problem.spec.scalarize(&p)?;
        let mut prev = theta.clone();
        for it in 0..h.inner_iters {
            if it > 0 {
                let stream = RngStream::new(self.options.run_seed, epoch as u64, it as u64, 0);
                let cur: &[f64] = theta;
                let old: &[f64] = &prev;
                let dj = self.batch(stream, 0, h.inner_batch, cur, m_obj, |traj, out| {
                    self.est.add_return(traj, cur, cur, 1.0, out)?;
                    self.est.add_return(traj, cur, old, -1.0, out)
                })?;
                let j_new: Vec<f64> = dj.value.iter().zip(&j).map(|(d, x)| d + x).collect();
                let p_new = self.omega.project(&j_new);
                let w_new = objective_weights(&p_new, self.problem.spec, &self.omega)?;
                let w_old = objective_weights(&p, self.problem.spec, &self.omega)?;
                let dg = self.batch(
                    stream,
                    h.inner_batch as u64,
                    h.inner_batch,
                    cur,
                    dim,
                    |traj, out| {
                        self.est.add_gradient(traj, cur, cur, &w_new, 1.0, out)?;
                        self.est.add_gradient(traj, cur, old, &w_old, -1.0, out)
                    },
                )?;
                g = dg.value.iter().zip(&g).map(|(d, x)| d + x).collect();
                j = j_new;
                p = p_new;
                steps += dj.steps + dg.steps;
            }
            let ascent: Vec<f64> = theta
                .iter()
                .zip(&g)
                .map(|(t, d)| t + h.step_size * d)
                .collect();
            let next = project_ball(&ascent, theta, h.radius);
            if let Some(obs) = observer.as_mut() {
                obs(&IterationEvent {
                    epoch,
                    iteration: it,
                    before: theta,
                    after: &next,
                    j_hat: &p,
                });
            }
            prev = std::mem::replace(theta, next);
        }
        Ok((f, steps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::scalarization::ScalarizationKind;

    fn dst_setup() -> (crate::env::BenchmarkEnv, SoftmaxPolicy, ScalarizationSpec) {
        let env = EnvConfig::Dst {
            horizon: 20,
            gamma: 1.0,
        }
        .build()
        .unwrap();
        let policy = env.default_policy();
        let omega = OmegaBox::from_rewards(&env.spec().reward_bounds, 1.0, 20).unwrap();
        let spec = ScalarizationSpec::new(ScalarizationKind::SqrtTreasure, 1.0, &omega).unwrap();
        (env, policy, spec)
    }

    #[test]
    fn accounting_matches_formula() {
        let (env, policy, spec) = dst_setup();
        let problem = Problem::new(&env, &policy, &spec);
        let hyper = Hyperparams::mo_tsivr_pg(3, 3, 2, 4, 20, 0.1, 0.5, 1.0);
        let log = run_training(
            Algorithm::MoTsivrPg,
            &problem,
            &hyper,
            &TrainOptions::new(1),
            None,
        )
        .unwrap();
        assert_eq!(log.records.len(), 3);
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.episodes, (i as u64 + 1) * (2 * 4 + 2 * 2 * 2));
        }
        assert!(log.records.windows(2).all(|w| w[0].steps <= w[1].steps));
    }

    #[test]
    fn inner_steps_respect_radius() {
        let (env, policy, spec) = dst_setup();
        let problem = Problem::new(&env, &policy, &spec);
        let hyper = Hyperparams::mo_tsivr_pg(2, 4, 3, 6, 20, 5.0, 0.05, 1.0);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        let mut obs = |e: &IterationEvent<'_>| {
            worst = worst.max(e.step_norm());
            count += 1;
        };
        run_training(
            Algorithm::MoTsivrPg,
            &problem,
            &hyper,
            &TrainOptions::new(3),
            Some(&mut obs),
        )
        .unwrap();
        assert_eq!(count, 8);
        assert!(worst <= 0.05 + 1e-12, "{worst}");
    }

    #[test]
    fn single_inner_iteration_reproduces_mo_pg() {
        let (env, policy, spec) = dst_setup();
        let problem = Problem::new(&env, &policy, &spec);
        let a = Hyperparams::mo_pg(4, 5, 20, 0.3, 1.0);
        let b = Hyperparams::mo_tsivr_pg(4, 1, 1, 5, 20, 0.3, f64::INFINITY, 1.0);
        let opts = TrainOptions::new(11);
        let la = run_training(Algorithm::MoPg, &problem, &a, &opts, None).unwrap();
        let lb = run_training(Algorithm::MoTsivrPg, &problem, &b, &opts, None).unwrap();
        assert_eq!(la.final_params.theta, lb.final_params.theta);
        assert_eq!(la.records, lb.records);
    }

    #[test]
    fn gaussian_init_is_seeded() {
        let a = ThetaInit::Gaussian { scale: 0.1 }.draw(16, 5).unwrap();
        assert_eq!(a, ThetaInit::Gaussian { scale: 0.1 }.draw(16, 5).unwrap());
        assert_ne!(a, ThetaInit::Gaussian { scale: 0.1 }.draw(16, 6).unwrap());
        assert!(ThetaInit::Gaussian { scale: -1.0 }.draw(2, 0).is_err());
        assert_eq!(ThetaInit::Zeros.draw(3, 0).unwrap(), vec![0.0; 3]);
    }
}
