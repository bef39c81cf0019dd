//! Importance-weighted return and policy-gradient estimators.
//!
//! A trajectory `tau` sampled under `theta_1` is reweighted towards
//! `theta_2` with
//!
//! ```text
//! w_t = prod_{h<=t} pi_{theta_2}(a_h|s_h) / pi_{theta_1}(a_h|s_h)
//! ```
//!
//! Return estimate: `J(tau) = sum_t gamma^t w_t r_t`.
//!
//! Gradient estimate, with `c_h = sum_m df/dJ_m(J_hat) r_m(s_h, a_h)`:
//!
//! ```text
//! g(tau) = sum_t grad log pi_{theta_2}(a_t|s_t) * sum_{h>=t} w_h gamma^h c_h
//! ```
//!
//! The weight of a reward is the ratio of the prefix that produced it, which
//! keeps `E_{theta_1}[g] = (grad J^H(theta_2))^T grad f(J_hat)` exact for
//! any pair of parameters. When `theta_1 == theta_2` every weight is exactly
//! one and this is the usual reward-to-go REINFORCE estimator.

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::mdp::Trajectory;
use crate::policy::SoftmaxPolicy;
use crate::scalarization::{OmegaBox, ScalarizationSpec};

/// A return estimate and its projection onto the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub j: Vec<f64>,
    pub projected: Vec<f64>,
}

impl ReturnEstimate {
    pub fn new(j: Vec<f64>, omega: &OmegaBox) -> Self {
        let projected = omega.project(&j);
        Self { j, projected }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub batch_size: usize,
}

/// Estimators for one policy shape and discount.
#[derive(Clone, Copy, Debug)]
pub struct Estimator<'a> {
    pub policy: &'a SoftmaxPolicy,
    pub gamma: f64,
}

impl<'a> Estimator<'a> {
    pub fn new(policy: &'a SoftmaxPolicy, gamma: f64) -> Self {
        Self { policy, gamma }
    }

    fn check(&self, behavior: &[f64], target: &[f64]) -> Result<()> {
        self.policy.check_theta(behavior)?;
        self.policy.check_theta(target)
    }

    /// All weights `w_0 .. w_{len-1}`, accumulated in log space.
    pub fn is_weights(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
    ) -> Result<Vec<f64>> {
        self.check(behavior, target)?;
        if behavior == target {
            return Ok(vec![1.0; traj.len()]);
        }
        let a = self.policy.num_actions();
        let mut lp_b = vec![0.0; a];
        let mut lp_t = vec![0.0; a];
        let mut log_w = 0.0;
        let mut out = Vec::with_capacity(traj.len());
        for (t, (state, action, _)) in traj.steps().enumerate() {
            self.policy.check_state(state)?;
            self.policy.fill_log_probs(behavior, state, &mut lp_b);
            self.policy.fill_log_probs(target, state, &mut lp_t);
            if lp_b[action] == f64::NEG_INFINITY {
                return Err(MorlError::DegenerateSupport { step: t });
            }
            log_w += lp_t[action] - lp_b[action];
            out.push(log_w.exp());
        }
        Ok(out)
    }

    /// `w_t(tau | behavior, target)`.
    pub fn is_weight(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
        t: usize,
    ) -> Result<f64> {
        if t >= traj.len() {
            return Err(MorlError::Precondition(format!(
                "weight index {t} outside trajectory of length {}",
                traj.len()
            )));
        }
        Ok(self.is_weights(traj, behavior, target)?[t])
    }

    /// Importance-weighted discounted return.
    pub fn estimate_return(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; traj.num_objectives()];
        self.add_return(traj, behavior, target, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale * J(tau | behavior, target)`.
    pub(crate) fn add_return(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
        scale: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let weights = self.is_weights(traj, behavior, target)?;
        let mut discount = 1.0;
        for ((_, _, r), w) in traj.steps().zip(&weights) {
            let c = scale * discount * w;
            for (o, x) in out.iter_mut().zip(r) {
                *o += c * x;
            }
            discount *= self.gamma;
        }
        Ok(())
    }

    /// Off-policy gradient estimate of `f(J(target))` with the objective
    /// gradient frozen at `j_hat`, which must lie in `omega`.
    pub fn estimate_gradient(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
        j_hat: &[f64],
        spec: &ScalarizationSpec,
        omega: &OmegaBox,
    ) -> Result<Vec<f64>> {
        let dfdj = objective_weights(j_hat, spec, omega)?;
        let mut out = vec![0.0; self.policy.dim()];
        self.add_gradient(traj, behavior, target, &dfdj, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale * g(tau | behavior, target)` for precomputed
    /// `dfdj = grad f(J_hat)`.
    pub(crate) fn add_gradient(
        &self,
        traj: &Trajectory,
        behavior: &[f64],
        target: &[f64],
        dfdj: &[f64],
        scale: f64,
        out: &mut [f64],
    ) -> Result<()> {
        self.check(behavior, target)?;
        let n = traj.len();
        let a = self.policy.num_actions();
        let on_policy = behavior == target;
        // target probabilities per step, needed again for the score pass
        let mut probs = vec![0.0; n * a];
        let mut lp_b = vec![0.0; a];
        let mut suffix = vec![0.0; n + 1];
        let mut log_w = 0.0;
        let mut discount = 1.0;
        for (t, (state, action, r)) in traj.steps().enumerate() {
            let p = &mut probs[t * a..(t + 1) * a];
            self.policy.fill_probs(target, state, p)?;
            let w = if on_policy {
                1.0
            } else {
                self.policy.fill_log_probs(behavior, state, &mut lp_b);
                if lp_b[action] == f64::NEG_INFINITY {
                    return Err(MorlError::DegenerateSupport { step: t });
                }
                log_w += p[action].ln() - lp_b[action];
                log_w.exp()
            };
            let c: f64 = dfdj.iter().zip(r).map(|(d, x)| d * x).sum();
            suffix[t] = w * discount * c;
            discount *= self.gamma;
        }
        // reverse scan: suffix[t] = sum_{h >= t} w_h gamma^h c_h
        for t in (0..n).rev() {
            suffix[t] += suffix[t + 1];
        }
        for (t, (state, action, _)) in traj.steps().enumerate() {
            let coef = scale * suffix[t];
            if coef != 0.0 {
                self.policy
                    .add_scaled_score(state, action, &probs[t * a..(t + 1) * a], coef, out);
            }
        }
        Ok(())
    }
}

/// `grad f(j_hat)` after checking `j_hat` lies in the box.
pub fn objective_weights(
    j_hat: &[f64],
    spec: &ScalarizationSpec,
    omega: &OmegaBox,
) -> Result<Vec<f64>> {
    if !omega.contains(j_hat) {
        return Err(MorlError::Precondition(format!(
            "J_hat = {j_hat:?} lies outside the return box; project it first"
        )));
    }
    spec.scalarize_grad(j_hat)
}

/// Arithmetic mean of equal-length vectors, summed in index order.
pub fn batch_mean(items: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = items
        .first()
        .ok_or_else(|| MorlError::Usage("batch mean of an empty batch".into()))?;
    let mut out = vec![0.0; first.len()];
    for item in items {
        if item.len() != out.len() {
            return Err(MorlError::Usage(format!(
                "batch items have lengths {} and {}",
                out.len(),
                item.len()
            )));
        }
        for (o, x) in out.iter_mut().zip(item) {
            *o += x;
        }
    }
    let n = items.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{discounted_return, SnapshotId, State};
    use crate::scalarization::ScalarizationKind;

    fn two_action_traj(actions: &[usize], rewards: &[[f64; 2]]) -> Trajectory {
        let mut t = Trajectory::new(2, SnapshotId(0));
        for (a, r) in actions.iter().zip(rewards) {
            t.push(State::Index(0), *a, r);
        }
        t
    }

    fn fairness(m: usize) -> (ScalarizationSpec, OmegaBox) {
        let omega = OmegaBox::from_rewards(&vec![(0.0, 1.0); m], 0.9, 3).unwrap();
        let spec =
            ScalarizationSpec::new(ScalarizationKind::AlphaFairness { horizon: 3 }, 1.0, &omega)
                .unwrap();
        (spec, omega)
    }

    #[test]
    fn on_policy_weights_are_exactly_one() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 0.9);
        let traj = two_action_traj(&[0, 1, 1, 0], &[[1.0, 0.0]; 4]);
        let theta = [0.37, -1.4];
        assert_eq!(est.is_weights(&traj, &theta, &theta).unwrap(), vec![1.0; 4]);
        assert_eq!(
            est.estimate_return(&traj, &theta, &theta).unwrap(),
            discounted_return(&traj, 0.9)
        );
    }

    #[test]
    fn hand_computed_ratio() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 1.0);
        let traj = two_action_traj(&[0], &[[0.0, 0.0]]);
        let w = est
            .is_weight(&traj, &[0.0, 0.0], &[3f64.ln(), 0.0], 0)
            .unwrap();
        assert!((w - 1.5).abs() < 1e-14);
        assert!(est.is_weight(&traj, &[0.0, 0.0], &[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn weights_are_multiplicative() {
        let policy = SoftmaxPolicy::tabular(1, 3);
        let est = Estimator::new(&policy, 1.0);
        let traj = two_action_traj(&[0, 2, 1, 1, 0], &[[0.0, 0.0]; 5]);
        let b = [0.2, -0.3, 0.9];
        let t = [-0.5, 0.4, 0.1];
        let w = est.is_weights(&traj, &b, &t).unwrap();
        let pb = policy.action_distribution(&b, &State::Index(0)).unwrap();
        let pt = policy.action_distribution(&t, &State::Index(0)).unwrap();
        let mut direct = 1.0;
        for (i, &a) in [0, 2, 1, 1, 0].iter().enumerate() {
            let ratio = pt[a] / pb[a];
            if i > 0 {
                assert!((w[i] - w[i - 1] * ratio).abs() <= 1e-12 * w[i]);
            }
            direct *= ratio;
            assert!((w[i] - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn zero_rewards_give_zero_estimates() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 0.9);
        let traj = two_action_traj(&[0, 1, 0], &[[0.0, 0.0]; 3]);
        let (spec, omega) = fairness(2);
        let b = [0.3, 0.1];
        let t = [-0.2, 0.6];
        assert_eq!(est.estimate_return(&traj, &b, &t).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            est.estimate_gradient(&traj, &b, &t, &[0.5, 0.5], &spec, &omega)
                .unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn single_step_hand_expansion() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 0.9);
        let (spec, omega) = fairness(2);
        let theta = [0.4, -0.1];
        let j_hat = [0.2, 1.1];
        let traj = two_action_traj(&[1], &[[0.3, 0.8]]);
        let g = est
            .estimate_gradient(&traj, &theta, &theta, &j_hat, &spec, &omega)
            .unwrap();
        let score = policy.grad_log_prob(&theta, &State::Index(0), 1).unwrap();
        let d = spec.scalarize_grad(&j_hat).unwrap();
        let c = d[0] * 0.3 + d[1] * 0.8;
        for (gi, si) in g.iter().zip(&score) {
            assert!((gi - si * c).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_requires_projected_j_hat() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 0.9);
        let (spec, omega) = fairness(2);
        let traj = two_action_traj(&[1], &[[0.3, 0.8]]);
        let err = est
            .estimate_gradient(&traj, &[0.0; 2], &[0.0; 2], &[-0.5, 0.1], &spec, &omega)
            .unwrap_err();
        assert!(matches!(err, MorlError::Precondition(_)));
    }

    #[test]
    fn dimension_errors() {
        let policy = SoftmaxPolicy::tabular(1, 2);
        let est = Estimator::new(&policy, 0.9);
        let traj = two_action_traj(&[1], &[[0.3, 0.8]]);
        assert!(matches!(
            est.estimate_return(&traj, &[0.0; 3], &[0.0; 2]),
            Err(MorlError::Config(_))
        ));
    }

    #[test]
    fn batch_mean_examples() {
        let v = vec![1.5, -2.0, 0.25];
        assert_eq!(batch_mean(&[v.clone()]).unwrap(), v);
        assert_eq!(
            batch_mean(&[v.clone(), v.iter().map(|x| -x).collect()]).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(batch_mean(&vec![v.clone(); 7]).unwrap(), v);
        assert!(matches!(batch_mean(&[]), Err(MorlError::Usage(_))));
        assert!(batch_mean(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
