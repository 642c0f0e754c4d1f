//! Follower dynamics in strict-feedback form and the analytic leader signal.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Ground-truth state of one follower; the output is the first component.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub states: DVector<f64>,
}

impl PlantState {
    pub fn output(&self) -> f64 {
        self.states[0]
    }
}

/// Per-stage nonlinearity descriptors.
#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsSpec {
    /// All nonlinearities identically zero (pure integrator chain).
    Zero { order: usize },
    /// The worked two-stage example: `f1 = x1/(1+x2^2)`,
    /// `f2 = coeff * sin(x1 - x2) * exp(-(x1^2 + x2^4))`.
    ///
    /// Note f1 reads x2, which steps outside the strict-feedback class;
    /// it is reproduced literally since only the simulator evaluates it.
    Example { coeff: f64 },
    /// User-specified closed-form stage nonlinearities.
    Custom { stages: Vec<Expr> },
}

impl DynamicsSpec {
    pub fn order(&self) -> usize {
        match self {
            DynamicsSpec::Zero { order } => *order,
            DynamicsSpec::Example { .. } => 2,
            DynamicsSpec::Custom { stages } => stages.len(),
        }
    }

    /// Value of f_m (1-based stage) at the given full state.
    pub fn nonlinearity(&self, stage: usize, x: &DVector<f64>) -> f64 {
        match self {
            DynamicsSpec::Zero { .. } => 0.0,
            DynamicsSpec::Example { coeff } => {
                let (x1, x2) = (x[0], x[1]);
                if stage == 1 {
                    x1 / (1.0 + x2 * x2)
                } else {
                    coeff * (x1 - x2).sin() * (-(x1 * x1 + x2.powi(4))).exp()
                }
            }
            DynamicsSpec::Custom { stages } => stages[stage - 1].eval(x.as_slice()),
        }
    }
}

/// `xdot_m = x_{m+1} + f_m` for m < n, `xdot_n = u + f_n`.
pub fn follower_derivative(
    state: &PlantState,
    control: f64,
    spec: &DynamicsSpec,
) -> Result<DVector<f64>> {
    let n = spec.order();
    if state.states.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.states.len(),
        });
    }
    if state.states.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { agent: 0, time: 0.0 });
    }
    Ok(DVector::from_fn(n, |m, _| {
        let drive = if m + 1 < n { state.states[m + 1] } else { control };
        drive + spec.nonlinearity(m + 1, &state.states)
    }))
}

/// Analytic leader signal with derivatives of every order.
#[derive(Debug, Clone, PartialEq)]
pub enum LeaderModel {
    Sine { amplitude: f64, frequency: f64 },
    Constant { value: f64 },
}

/// Value and first `n` derivatives of the leader signal at time `t`
/// (a vector of length `n + 1`).
pub fn leader_eval(model: &LeaderModel, t: f64, n: usize) -> Vec<f64> {
    match model {
        LeaderModel::Constant { value } => {
            let mut out = vec![0.0; n + 1];
            out[0] = *value;
            out
        }
        LeaderModel::Sine { amplitude, frequency } => (0..=n)
            .map(|q| {
                // d^q/dt^q A sin(wt) = A w^q sin(wt + q pi/2)
                amplitude
                    * frequency.powi(q as i32)
                    * (frequency * t + q as f64 * std::f64::consts::FRAC_PI_2).sin()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example() -> DynamicsSpec {
        DynamicsSpec::Example { coeff: 0.15 }
    }

    fn st(x: &[f64]) -> PlantState {
        PlantState {
            states: DVector::from_row_slice(x),
        }
    }

    #[test]
    fn example_dynamics_at_origin() {
        let d = follower_derivative(&st(&[0.0, 0.0]), 0.0, &example()).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn example_dynamics_at_ones() {
        let d = follower_derivative(&st(&[1.0, 1.0]), 0.0, &example()).unwrap();
        assert_relative_eq!(d[0], 1.5, max_relative = 1e-12);
        assert_relative_eq!(d[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn example_dynamics_with_control() {
        let d = follower_derivative(&st(&[1.0, 0.0]), 2.0, &example()).unwrap();
        assert_relative_eq!(d[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(d[1], 2.0 + 0.15 * 1.0f64.sin() * (-1.0f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(d[1], 2.046436, max_relative = 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(follower_derivative(&st(&[0.0]), 0.0, &example()).is_err());
    }

    #[test]
    fn leader_sine_derivatives() {
        let m = LeaderModel::Sine {
            amplitude: 3.0,
            frequency: 2.0,
        };
        let d = leader_eval(&m, 0.0, 2);
        assert_relative_eq!(d[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(d[1], 6.0, max_relative = 1e-12);
        assert_relative_eq!(d[2], 0.0, epsilon = 1e-12);
        let d = leader_eval(&m, std::f64::consts::FRAC_PI_4, 2);
        assert_relative_eq!(d[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(d[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(d[2], -12.0, max_relative = 1e-12);
    }

    #[test]
    fn leader_constant() {
        let m = LeaderModel::Constant { value: 4.2 };
        assert_eq!(leader_eval(&m, 7.0, 2), vec![4.2, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn example_second_stage_globally_bounded(x1 in -20.0..20.0f64, x2 in -20.0..20.0f64) {
            let f2 = example().nonlinearity(2, &DVector::from_row_slice(&[x1, x2]));
            prop_assert!(f2.abs() <= 0.15 + 1e-15);
        }

        #[test]
        fn zero_spec_is_strict_feedback(x1 in -5.0..5.0f64, bump in -5.0..5.0f64) {
            // perturbing downstream states must not change upstream stages
            let spec = DynamicsSpec::Zero { order: 3 };
            let a = DVector::from_row_slice(&[x1, 0.0, 0.0]);
            let b = DVector::from_row_slice(&[x1, bump, bump]);
            prop_assert_eq!(spec.nonlinearity(1, &a), spec.nonlinearity(1, &b));
        }

        #[test]
        fn leader_derivatives_match_finite_differences(t in 0.0..10.0f64) {
            let m = LeaderModel::Sine { amplitude: 3.0, frequency: 2.0 };
            let h = 1e-4;
            for q in 1..=2usize {
                let plus = leader_eval(&m, t + h, q)[q - 1];
                let minus = leader_eval(&m, t - h, q)[q - 1];
                let central = (plus - minus) / (2.0 * h);
                prop_assert!((central - leader_eval(&m, t, q)[q]).abs() <= 1e-5);
            }
        }
    }
}
