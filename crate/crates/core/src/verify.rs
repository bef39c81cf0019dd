//! Self-checks against the exact oracle and the documented invariants,
//! reported as a pass/fail table.

use rand::Rng;

use crate::algorithms::{
    episodes_per_epoch, project_ball, run_training, theorem_schedule, Algorithm, Hyperparams,
    IterationEvent, Preset, Problem, ScheduleConstants, TrainOptions,
};
use crate::env::EnvConfig;
use crate::error::Result;
use crate::estimators::{objective_weights, Estimator};
use crate::mdp::{discounted_return, Environment, State};
use crate::oracle::{
    enumerate_expectation, exact_scalarized_gradient, exact_truncated_value,
    exact_weighted_gradient, finite_diff_grad, generate_corpus, CorpusEntry, TabularMdp,
    CORPUS_SEED, DEFAULT_BUDGET,
};
use crate::policy::{PolicyConstants, SoftmaxPolicy};
use crate::rng::{RngStream, StreamRng};
use crate::scalarization::{OmegaBox, ScalarizationKind, ScalarizationSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `|a - b| / max(1, |b|)`, maximized over components.
pub fn max_scaled_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn max_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn uniform_theta(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Alpha-fairness with an offset that keeps the whole box inside its
/// domain; works for any number of objectives.
pub fn corpus_objective(omega: &OmegaBox, horizon: usize) -> Result<ScalarizationSpec> {
    let lowest = omega.lo().into_iter().fold(0.0f64, f64::min);
    ScalarizationSpec::new(
        ScalarizationKind::AlphaFairness { horizon },
        1.0 - lowest,
        omega,
    )
}

/// Worst discrepancies between enumerated estimator expectations and exact
/// values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UnbiasednessReport {
    pub cases: usize,
    pub return_error: f64,
    pub gradient_error: f64,
    pub total_probability_error: f64,
}

/// For each corpus MDP and `pairs` seeded `(theta_1, theta_2)`, compares
/// `E_{theta_1}[J(tau|theta_1, theta_2)]` with `J^H(theta_2)` and
/// `E_{theta_1}[g(tau|theta_1, theta_2, J_hat)]` with
/// `(grad J^H(theta_2))^T grad f(J_hat)` for a random `J_hat` in the box.
pub fn unbiasedness(corpus: &[CorpusEntry], pairs: usize, seed: u64) -> Result<UnbiasednessReport> {
    let mut report = UnbiasednessReport::default();
    for (i, entry) in corpus.iter().enumerate() {
        let mdp = &entry.mdp;
        let h = entry.horizon;
        let policy = mdp.policy();
        let est = Estimator::new(&policy, mdp.gamma());
        let omega = OmegaBox::from_rewards(&mdp.reward_bounds(), mdp.gamma(), h)?;
        let spec = corpus_objective(&omega, h)?;
        let mut rng = RngStream::new(seed, i as u64, 0, 0).rng();
        for _ in 0..pairs {
            let t1 = uniform_theta(policy.dim(), &mut rng);
            let t2 = uniform_theta(policy.dim(), &mut rng);
            let j_hat: Vec<f64> = omega
                .bounds()
                .iter()
                .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect();
            let total = enumerate_expectation(mdp, &t1, h, DEFAULT_BUDGET, |_| Ok(vec![1.0]))?;
            let ret = enumerate_expectation(mdp, &t1, h, DEFAULT_BUDGET, |tr| {
                est.estimate_return(tr, &t1, &t2)
            })?;
            let grad = enumerate_expectation(mdp, &t1, h, DEFAULT_BUDGET, |tr| {
                est.estimate_gradient(tr, &t1, &t2, &j_hat, &spec, &omega)
            })?;
            let exact_j = exact_truncated_value(mdp, &t2, h)?;
            let w = objective_weights(&j_hat, &spec, &omega)?;
            let exact_g = exact_weighted_gradient(mdp, &t2, h, &w)?;
            report.cases += 1;
            report.total_probability_error =
                report.total_probability_error.max((total[0] - 1.0).abs());
            report.return_error = report.return_error.max(max_abs_error(&ret, &exact_j));
            report.gradient_error = report.gradient_error.max(max_abs_error(&grad, &exact_g));
        }
    }
    Ok(report)
}

/// Worst DP-versus-enumeration gap of `J^H` over the corpus.
pub fn dp_matches_enumeration(corpus: &[CorpusEntry]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for entry in corpus {
        let theta = vec![0.25; entry.mdp.policy().dim()];
        let g = entry.mdp.gamma();
        let e = enumerate_expectation(&entry.mdp, &theta, entry.horizon, DEFAULT_BUDGET, |t| {
            Ok(discounted_return(t, g))
        })?;
        worst = worst.max(max_abs_error(
            &e,
            &exact_truncated_value(&entry.mdp, &theta, entry.horizon)?,
        ));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientCheckReport {
    pub scalarize_grad: f64,
    pub grad_log_prob: f64,
    pub exact_gradient: f64,
}

/// Central-difference comparisons on `n` seeded inputs each. Errors are
/// `|analytic - fd| / max(1, |fd|)`.
pub fn gradient_checks(n: usize, seed: u64) -> Result<GradientCheckReport> {
    let mut report = GradientCheckReport::default();
    let mut rng = RngStream::new(seed, 0, 0, 0).rng();
    let dst_box = OmegaBox::from_rewards(&[(0.0, 23.7), (-1.0, 0.0)], 1.0, 100)?;
    let sqrt = ScalarizationSpec::new(ScalarizationKind::SqrtTreasure, 1.0, &dst_box)?;
    let sq_box = OmegaBox::from_rewards(&[(0.0, 1.0); 4], 0.99, 50)?;
    let fair = ScalarizationSpec::new(
        ScalarizationKind::AlphaFairness { horizon: 50 },
        1.0,
        &sq_box,
    )?;
    for k in 0..n {
        let (spec, omega) = if k % 2 == 0 {
            (&sqrt, &dst_box)
        } else {
            (&fair, &sq_box)
        };
        let j: Vec<f64> = omega
            .bounds()
            .iter()
            .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
            .collect();
        let analytic = spec.scalarize_grad(&j)?;
        let fd = finite_diff_grad(|x| spec.scalarize(x).unwrap_or(f64::NAN), &j, 1e-5);
        report.scalarize_grad = report.scalarize_grad.max(max_scaled_error(&analytic, &fd));
    }
    let policies = [SoftmaxPolicy::tabular(3, 4), SoftmaxPolicy::linear(5, 3)];
    for k in 0..n {
        let policy = &policies[k % 2];
        let theta = uniform_theta(policy.dim(), &mut rng);
        let state = match policy {
            SoftmaxPolicy::Tabular { states, .. } => State::Index(rng.random_range(0..*states)),
            SoftmaxPolicy::Linear { features, .. } => State::Features(
                (0..*features)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            ),
        };
        let action = rng.random_range(0..policy.num_actions());
        let analytic = policy.grad_log_prob(&theta, &state, action)?;
        let fd = finite_diff_grad(
            |x| policy.log_prob(x, &state, action).unwrap_or(f64::NAN),
            &theta,
            1e-5,
        );
        report.grad_log_prob = report.grad_log_prob.max(max_scaled_error(&analytic, &fd));
    }
    for entry in generate_corpus(CORPUS_SEED).iter().step_by(3) {
        let mdp: &TabularMdp = &entry.mdp;
        let omega = OmegaBox::from_rewards(&mdp.reward_bounds(), mdp.gamma(), entry.horizon)?;
        let spec = corpus_objective(&omega, entry.horizon)?;
        let theta = uniform_theta(mdp.policy().dim(), &mut rng);
        let analytic = exact_scalarized_gradient(mdp, &theta, entry.horizon, &spec)?;
        let fd = finite_diff_grad(
            |x| {
                exact_truncated_value(mdp, x, entry.horizon)
                    .and_then(|j| spec.scalarize(&j))
                    .unwrap_or(f64::NAN)
            },
            &theta,
            1e-5,
        );
        report.exact_gradient = report.exact_gradient.max(max_scaled_error(&analytic, &fd));
    }
    Ok(report)
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn from_result(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    report(name, &r, |v| v.clone())
}

fn report<T>(
    name: &'static str,
    r: &Result<T>,
    judge: impl Fn(&T) -> (bool, String),
) -> CheckResult {
    match r {
        Ok(v) => {
            let (passed, detail) = judge(v);
            check(name, passed, detail)
        }
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

/// The full table. Takes a few seconds.
pub fn run_checks() -> Vec<CheckResult> {
    let corpus = generate_corpus(CORPUS_SEED);
    let mut out = Vec::new();

    let unbiased = unbiasedness(&corpus, 2, 7);
    out.push(report("total probability", &unbiased, |r| {
        (
            r.total_probability_error <= 1e-12,
            format!("{:.2e}", r.total_probability_error),
        )
    }));
    out.push(report("return estimator unbiased", &unbiased, |r| {
        (
            r.return_error <= 1e-10,
            format!("{:.2e} over {} cases", r.return_error, r.cases),
        )
    }));
    out.push(report("gradient estimator unbiased", &unbiased, |r| {
        (
            r.gradient_error <= 1e-8,
            format!("{:.2e} over {} cases", r.gradient_error, r.cases),
        )
    }));
    out.push(from_result(
        "DP value = enumeration",
        dp_matches_enumeration(&corpus).map(|e| (e <= 1e-10, format!("{e:.2e}"))),
    ));
    let grads = gradient_checks(100, 11);
    out.push(report(
        "scalarize_grad vs finite differences",
        &grads,
        |g| {
            (
                g.scalarize_grad <= 1e-6,
                format!("{:.2e}", g.scalarize_grad),
            )
        },
    ));
    out.push(report("grad_log_prob vs finite differences", &grads, |g| {
        (g.grad_log_prob <= 1e-6, format!("{:.2e}", g.grad_log_prob))
    }));
    out.push(report(
        "exact gradient vs finite differences",
        &grads,
        |g| {
            (
                g.exact_gradient <= 1e-6,
                format!("{:.2e}", g.exact_gradient),
            )
        },
    ));
    out.push(from_result(
        "training accounting and radius",
        training_invariants(),
    ));
    out.push(from_result(
        "determinism across pool sizes",
        pool_determinism(),
    ));
    out.push(from_result("theorem presets", preset_examples()));
    let p = project_ball(&[3.0, 4.0], &[0.0, 0.0], 1.0);
    out.push(check(
        "ball projection",
        (p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12,
        format!("({:.3}, {:.3})", p[0], p[1]),
    ));
    out
}

fn small_dst() -> Result<(crate::env::BenchmarkEnv, ScalarizationSpec)> {
    let env = EnvConfig::Dst {
        horizon: 15,
        gamma: 1.0,
    }
    .build()?;
    let omega = OmegaBox::from_rewards(&env.spec().reward_bounds, 1.0, 15)?;
    let spec = ScalarizationSpec::new(ScalarizationKind::SqrtTreasure, 1.0, &omega)?;
    Ok((env, spec))
}

fn training_invariants() -> Result<(bool, String)> {
    let (env, spec) = small_dst()?;
    let policy = env.default_policy();
    let problem = Problem::new(&env, &policy, &spec);
    let hyper = Hyperparams::mo_tsivr_pg(3, 4, 3, 6, 15, 1.0, 0.05, 1.0);
    let mut worst: f64 = 0.0;
    let mut obs = |e: &IterationEvent<'_>| worst = worst.max(e.step_norm());
    let log = run_training(
        Algorithm::MoTsivrPg,
        &problem,
        &hyper,
        &TrainOptions::new(1),
        Some(&mut obs),
    )?;
    let per = episodes_per_epoch(Algorithm::MoTsivrPg, &hyper);
    let accounting = log
        .records
        .iter()
        .enumerate()
        .all(|(i, r)| r.episodes == (i as u64 + 1) * per);
    Ok((
        accounting && worst <= 0.05 + 1e-12,
        format!("{per} episodes/epoch, largest inner step {worst:.4}"),
    ))
}

fn pool_determinism() -> Result<(bool, String)> {
    let (env, spec) = small_dst()?;
    let policy = env.default_policy();
    let problem = Problem::new(&env, &policy, &spec);
    let hyper = Hyperparams::mo_tsivr_pg(3, 3, 4, 8, 15, 0.5, 1.0, 1.0);
    let mut logs = Vec::new();
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::MorlError::Config(e.to_string()))?;
        logs.push(pool.install(|| {
            run_training(
                Algorithm::MoTsivrPg,
                &problem,
                &hyper,
                &TrainOptions::new(3),
                None,
            )
        })?);
    }
    Ok((logs[0] == logs[1], "1 vs 4 threads".into()))
}

fn preset_examples() -> Result<(bool, String)> {
    let consts = ScheduleConstants {
        policy: PolicyConstants::default(),
        grad_bound: 1.0,
        lipschitz: 1.0,
    };
    let t2 = theorem_schedule(Preset::Thm2, 4, 0.5, 0.9, &consts)?;
    let t1 = theorem_schedule(Preset::Thm1, 1, 0.1, 0.9, &consts)?;
    let ok = (t2.inner_iters, t2.inner_batch, t2.batch) == (16, 16, 256)
        && (t1.epochs, t1.batch) == (100, 100);
    Ok((
        ok,
        format!(
            "thm2 (m, B, N) = ({}, {}, {})",
            t2.inner_iters, t2.inner_batch, t2.batch
        ),
    ))
}
