//! Smoothness and variance constants from the convergence analysis. They
//! feed step-size presets and diagnostics, never the update rule.

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};
use crate::policy::PolicyConstants;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantInputs {
    pub policy: PolicyConstants,
    /// `C`
    pub grad_bound: f64,
    /// `L_f`
    pub lipschitz: f64,
    /// `M`
    pub objectives: usize,
    pub gamma: f64,
    pub horizon: usize,
    /// `delta`
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Smoothness of `theta -> f(J(theta))`: `M C S / (1-gamma)^2`.
    pub l_theta: f64,
    /// Truncation-bias coefficient: the gradient gap between infinite and
    /// `H`-step returns is at most `d_j * gamma^H`.
    pub d_j: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    g: f64,
    s: f64,
    horizon: usize,
    radius: f64,
}

impl TheoryConstants {
    /// Importance-weight variance coefficient
    /// `C_w(t) = t (2 t G^2 + S)(exp(2 G H delta) + 1)`.
    pub fn c_omega(&self, t: usize) -> f64 {
        let t = t as f64;
        t * (2.0 * t * self.g * self.g + self.s)
            * ((2.0 * self.g * self.horizon as f64 * self.radius).exp() + 1.0)
    }
}

/// Evaluates `L_theta`, `D_J`, `C_1`, `C_2`, `C_3`. The first term of `C_1`
/// uses `(1-gamma)^6` in the denominator.
pub fn variance_constants(inputs: &ConstantInputs) -> Result<TheoryConstants> {
    let ConstantInputs {
        policy: PolicyConstants { g, s },
        grad_bound: c,
        lipschitz: lf,
        objectives,
        gamma,
        horizon,
        radius,
    } = *inputs;
    if !(g > 0.0 && s > 0.0 && c > 0.0 && lf > 0.0 && radius > 0.0)
        || objectives == 0
        || horizon == 0
    {
        return Err(MorlError::Config(
            "G, S, C, L_f, M, H and delta must all be positive".into(),
        ));
    }
    if gamma >= 1.0 || gamma <= 0.0 {
        return Err(MorlError::Domain(format!(
            "constants diverge unless gamma lies in (0, 1); got {gamma}"
        )));
    }
    let m = objectives as f64;
    let h = horizon as f64;
    let q = 1.0 - gamma;
    let gh = gamma.powi(horizon as i32);

    let l_theta = m * c * s / q.powi(2);
    let bracket = m.sqrt() * lf * (1.0 - gh - h * gh * q) / q + c * (1.0 + h * q);
    let d_j = m * g / q.powi(2) * bracket;
    let c1 =
        21.0 * m.powi(3) * g * g * lf * lf / q.powi(6) + 9.0 * m * m * c * c * g * g / q.powi(4);
    let c2 = 3.0 * m * m * g * g / q.powi(4) * bracket * bracket;
    let is_factor = (2.0 * g * h * radius).exp() + 1.0;
    let c3 = 9.0 * m * m * c * c * s * s / q.powi(4)
        + 18.0 * m * m * g * g * h * (2.0 * g * g + s) * is_factor / q.powi(5)
            * (12.0 * c * c + 4.0 * m * lf * lf / (3.0 * q * q));
    Ok(TheoryConstants {
        l_theta,
        d_j,
        c1,
        c2,
        c3,
        g,
        s,
        horizon,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(m: usize) -> ConstantInputs {
        ConstantInputs {
            policy: PolicyConstants::new(1.3, 0.7).unwrap(),
            grad_bound: 1.0,
            lipschitz: 0.5,
            objectives: m,
            gamma: 0.5,
            horizon: 4,
            radius: 0.1,
        }
    }

    #[test]
    fn smoothness_constant() {
        let tc = variance_constants(&ConstantInputs {
            policy: PolicyConstants::new(1.0, 1.0).unwrap(),
            grad_bound: 1.0,
            objectives: 2,
            ..inputs(2)
        })
        .unwrap();
        assert_eq!(tc.l_theta, 8.0);
    }

    #[test]
    fn c_omega_at_zero_vanishes() {
        let tc = variance_constants(&inputs(2)).unwrap();
        assert_eq!(tc.c_omega(0), 0.0);
        let expected = 3.0 * (6.0 * 1.3 * 1.3 + 0.7) * ((2.0f64 * 1.3 * 4.0 * 0.1).exp() + 1.0);
        assert!((tc.c_omega(3) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn gamma_one_is_domain_error() {
        let e = variance_constants(&ConstantInputs {
            gamma: 1.0,
            ..inputs(2)
        })
        .unwrap_err();
        assert!(matches!(e, MorlError::Domain(_)));
    }

    #[test]
    fn all_nonnegative() {
        for m in 1..6 {
            let tc = variance_constants(&inputs(m)).unwrap();
            for v in [tc.l_theta, tc.d_j, tc.c1, tc.c2, tc.c3] {
                assert!(v >= 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn scaling_in_objectives_term_by_term() {
        let (g, s, c, lf, q) = (1.3f64, 0.7f64, 1.0f64, 0.5f64, 0.5f64);
        let base = variance_constants(&inputs(3)).unwrap();
        let double = variance_constants(&inputs(6)).unwrap();
        assert!((double.l_theta / base.l_theta - 2.0).abs() < 1e-12);

        // C1: cubic term and quadratic term
        let t1 = |m: f64| 21.0 * m.powi(3) * g * g * lf * lf / q.powi(6);
        let t2 = |m: f64| 9.0 * m * m * c * c * g * g / q.powi(4);
        assert!((t1(6.0) / t1(3.0) - 8.0).abs() < 1e-12);
        assert!((t2(6.0) / t2(3.0) - 4.0).abs() < 1e-12);
        let ratio = (8.0 * t1(3.0) + 4.0 * t2(3.0)) / (t1(3.0) + t2(3.0));
        assert!((double.c1 / base.c1 - ratio).abs() < 1e-12);

        // C3: M^2 leading factor with an M^3 correction inside the bracket
        let h = 4.0;
        let e = (2.0 * g * h * 0.1).exp() + 1.0;
        let a = |m: f64| 9.0 * m * m * c * c * s * s / q.powi(4);
        let b =
            |m: f64| 18.0 * m * m * g * g * h * (2.0 * g * g + s) * e / q.powi(5) * 12.0 * c * c;
        let d = |m: f64| {
            18.0 * m * m * g * g * h * (2.0 * g * g + s) * e / q.powi(5) * 4.0 * m * lf * lf
                / (3.0 * q * q)
        };
        assert!((a(6.0) / a(3.0) - 4.0).abs() < 1e-12);
        assert!((b(6.0) / b(3.0) - 4.0).abs() < 1e-12);
        assert!((d(6.0) / d(3.0) - 8.0).abs() < 1e-12);
        let total = |m: f64| a(m) + b(m) + d(m);
        assert!((base.c3 - total(3.0)).abs() < 1e-9 * total(3.0));
        assert!((double.c3 / base.c3 - total(6.0) / total(3.0)).abs() < 1e-12);
    }
}
