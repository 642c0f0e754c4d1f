//! Backstepping virtual controls, adaptive laws, event output, and the
//! trigger rule.
//!
//! Every stage term built on `(|gamma| - kappa)` powers or `sg` is gated by
//! the dead-zone indicator, so each virtual control is exactly zero inside
//! its dead zone. Outside the zone `sg` reduces to the hard sign, which is
//! what the formulas below use directly.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::switching::{switched_error, DeadZone};

/// All per-agent design constants, one entry per backstepping stage where
/// vector-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kappa: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub p_exp: f64,
    pub q_exp: f64,
    pub m_bar: f64,
    pub xi: f64,
    pub xi_star: f64,
    pub epsilon: f64,
}

impl ControllerParams {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if n < 2 {
            return Err(Error::Validation(
                "controller needs at least two backstepping stages".into(),
            ));
        }
        for (name, v) in [
            ("a", &self.a),
            ("b", &self.b),
            ("kappa", &self.kappa),
            ("r", &self.r),
            ("rho", &self.rho),
        ] {
            if v.len() != n {
                return Err(Error::Validation(format!(
                    "parameter vector {name} has length {}, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "parameter vector {name} must be strictly positive"
                )));
            }
        }
        if !(self.p_exp > 1.0) {
            return Err(Error::Validation(format!("p_exp must exceed 1, got {}", self.p_exp)));
        }
        if !(self.q_exp > 0.0 && self.q_exp < 1.0) {
            return Err(Error::Validation(format!(
                "q_exp must lie in (0, 1), got {}",
                self.q_exp
            )));
        }
        for (name, v) in [
            ("m_bar", self.m_bar),
            ("xi", self.xi),
            ("xi_star", self.xi_star),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.xi > self.xi_star) {
            return Err(Error::Validation(format!(
                "xi > xi_star violated: xi = {}, xi_star = {}",
                self.xi, self.xi_star
            )));
        }
        Ok(())
    }

    fn dead_zone(&self, stage: usize) -> DeadZone {
        DeadZone::new(self.kappa[stage]).expect("validated kappa")
    }
}

/// Per-stage norm-bound estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub phi_hat: Vec<f64>,
}

/// Zero-order-hold bookkeeping for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    pub held_control: f64,
    pub last_event_time: Option<f64>,
    pub event_times: Vec<f64>,
}

impl TriggerState {
    pub fn new() -> Self {
        Self {
            held_control: 0.0,
            last_event_time: None,
            event_times: Vec::new(),
        }
    }

    /// Latch a new control value at an event instant.
    pub fn fire(&mut self, w: f64, t: f64) {
        self.held_control = w;
        self.last_event_time = Some(t);
        self.event_times.push(t);
    }
}

impl Default for TriggerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Common gated stage pieces: `(base, sign, A)` outside the dead zone.
fn stage_pieces(gamma: f64, dz: DeadZone) -> Option<(f64, f64, f64)> {
    if gamma.abs() < dz.kappa() {
        return None;
    }
    let base = gamma.abs() - dz.kappa();
    let sign = gamma.signum();
    Some((base, sign, base * sign))
}

/// Stage-1 virtual control. `g1` is the basis-norm gain, `s_i` the coupling.
pub fn virtual_control_first(
    gamma1: f64,
    phi_hat1: f64,
    g1: f64,
    s_i: f64,
    params: &ControllerParams,
) -> Result<f64> {
    if !(s_i > 0.0) {
        return Err(Error::ZeroCoupling { agent: 0 });
    }
    let dz = params.dead_zone(0);
    let Some((base, sign, a_sw)) = stage_pieces(gamma1, dz) else {
        return Ok(0.0);
    };
    let p2 = 2.0 * params.p_exp - 1.0;
    let q2 = 2.0 * params.q_exp - 1.0;
    let term = params.a[0] * base.powf(p2) * sign
        + params.b[0] * base.powf(q2) * sign
        + 0.25 * a_sw * s_i * s_i
        + phi_hat1 * g1 * (a_sw * g1 / params.m_bar).tanh()
        + 0.5 * base * sign * s_i
        + (params.kappa[1] + 1.0) * sign * s_i;
    let alpha = -term / s_i;
    if !alpha.is_finite() {
        return Err(Error::NonFiniteResult { agent: 0 });
    }
    Ok(alpha)
}

/// Mid-stage virtual control for 1-based stage `2 <= stage <= n-1`.
pub fn virtual_control_mid(
    gamma: f64,
    phi_hat: f64,
    g: f64,
    stage: usize,
    params: &ControllerParams,
) -> Result<f64> {
    let n = params.order();
    if stage < 2 || stage > n - 1 {
        return Err(Error::Validation(format!(
            "mid-stage index {stage} out of range 2..={}",
            n - 1
        )));
    }
    let idx = stage - 1;
    let dz = params.dead_zone(idx);
    let Some((base, sign, a_sw)) = stage_pieces(gamma, dz) else {
        return Ok(0.0);
    };
    let p2 = 2.0 * params.p_exp - 1.0;
    let q2 = 2.0 * params.q_exp - 1.0;
    let term = params.a[idx] * base.powf(p2) * sign
        + params.b[idx] * base.powf(q2) * sign
        + phi_hat * g * (a_sw * g / params.m_bar).tanh()
        + base * sign
        + (params.kappa[idx + 1] + 1.0) * sign;
    let alpha = -term;
    if !alpha.is_finite() {
        return Err(Error::NonFiniteResult { agent: 0 });
    }
    Ok(alpha)
}

/// Final-stage virtual control; the half-quadratic term replaces the
/// `(kappa + 1)` push of the mid stages.
pub fn control_law_final(
    gamma_n: f64,
    phi_hat_n: f64,
    g_n: f64,
    params: &ControllerParams,
) -> Result<f64> {
    let idx = params.order() - 1;
    let dz = params.dead_zone(idx);
    let Some((base, sign, a_sw)) = stage_pieces(gamma_n, dz) else {
        return Ok(0.0);
    };
    let p2 = 2.0 * params.p_exp - 1.0;
    let q2 = 2.0 * params.q_exp - 1.0;
    let term = params.a[idx] * base.powf(p2) * sign
        + params.b[idx] * base.powf(q2) * sign
        + 0.5 * base * sign
        + phi_hat_n * g_n * (a_sw * g_n / params.m_bar).tanh();
    let alpha = -term;
    if !alpha.is_finite() {
        return Err(Error::NonFiniteResult { agent: 0 });
    }
    Ok(alpha)
}

/// Adaptive-law derivative `r A g tanh(A g / m_bar) - rho phi_hat`.
pub fn adaptive_law(a_sw: f64, g: f64, phi_hat: f64, r: f64, rho: f64, m_bar: f64) -> f64 {
    r * a_sw * g * (a_sw * g / m_bar).tanh() - rho * phi_hat
}

/// Candidate event-triggered control `w = alpha_n - xi tanh(A_n xi / eps)`.
pub fn event_output(alpha_n: f64, a_n: f64, params: &ControllerParams) -> f64 {
    alpha_n - params.xi * (a_n * params.xi / params.epsilon).tanh()
}

/// Trigger rule: fire once the candidate drifts from the hold by `xi_star`.
pub fn should_trigger(w_now: f64, state: &TriggerState, params: &ControllerParams) -> bool {
    (w_now - state.held_control).abs() >= params.xi_star
}

/// Full per-agent stage evaluation from one step snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEval {
    /// Error coordinates gamma_1..gamma_n.
    pub gamma: Vec<f64>,
    /// Virtual controls alpha_1..alpha_n.
    pub alpha: Vec<f64>,
    /// Switched errors A_1..A_n.
    pub switched: Vec<f64>,
    /// Candidate control w.
    pub w: f64,
}

/// Evaluate the backstepping chain for one agent. `gamma1` is the consensus
/// error, `gains_g` holds the per-stage basis-norm gains, and estimates from
/// the agent's observer stand in for the unmeasured states.
pub fn backstepping_chain(
    gamma1: f64,
    coupling: f64,
    estimates: &DVector<f64>,
    phi_hat: &[f64],
    gains_g: &[f64],
    params: &ControllerParams,
) -> Result<ChainEval> {
    let n = params.order();
    if estimates.len() != n || phi_hat.len() != n || gains_g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: estimates.len().min(phi_hat.len()).min(gains_g.len()),
        });
    }
    let mut gamma = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut switched = vec![0.0; n];

    gamma[0] = gamma1;
    switched[0] = switched_error(gamma[0], params.dead_zone(0));
    alpha[0] = virtual_control_first(gamma[0], phi_hat[0], gains_g[0], coupling, params)?;

    for idx in 1..n {
        gamma[idx] = estimates[idx] - alpha[idx - 1];
        switched[idx] = switched_error(gamma[idx], params.dead_zone(idx));
        alpha[idx] = if idx + 1 < n {
            virtual_control_mid(gamma[idx], phi_hat[idx], gains_g[idx], idx + 1, params)?
        } else {
            control_law_final(gamma[idx], phi_hat[idx], gains_g[idx], params)?
        };
    }

    let w = event_output(alpha[n - 1], switched[n - 1], params);
    if !w.is_finite() {
        return Err(Error::NonFiniteResult { agent: 0 });
    }
    Ok(ChainEval {
        gamma,
        alpha,
        switched,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_params() -> ControllerParams {
        ControllerParams {
            a: vec![15.0, 2.0],
            b: vec![35.0, 5.0],
            kappa: vec![0.6, 0.8],
            r: vec![1.0, 1.0],
            rho: vec![1.0, 1.0],
            p_exp: 2.0,
            q_exp: 0.5,
            m_bar: 1.0,
            xi: 5.5,
            xi_star: 5.0,
            epsilon: 25.0,
        }
    }

    #[test]
    fn validate_catches_bad_params() {
        assert!(table_params().validate().is_ok());
        let mut p = table_params();
        p.xi_star = 6.0;
        assert!(p.validate().is_err());
        let mut p = table_params();
        p.q_exp = 1.5;
        assert!(p.validate().is_err());
        let mut p = table_params();
        p.a[1] = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn first_stage_zero_at_origin() {
        let p = table_params();
        assert_eq!(virtual_control_first(0.0, 3.0, 1.5, 1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn first_stage_hand_value() {
        // gamma = 1.6, kappa = 0.6 -> base 1, A = 1, s = 1, g = 1, phi = 0
        let p = table_params();
        let alpha = virtual_control_first(1.6, 0.0, 1.0, 1.0, &p).unwrap();
        assert_relative_eq!(alpha, -52.55, max_relative = 1e-12);
    }

    #[test]
    fn first_stage_gated_inside_zone() {
        let p = table_params();
        // ungated literal form would contribute b * base^0 = 35 here
        assert_eq!(virtual_control_first(0.3, 7.0, 2.0, 1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn mid_stage_hand_value() {
        let mut p = table_params();
        p.a = vec![15.0, 2.0, 2.0];
        p.b = vec![35.0, 5.0, 5.0];
        p.kappa = vec![0.6, 1.0, 0.8];
        p.r = vec![1.0; 3];
        p.rho = vec![1.0; 3];
        let alpha = virtual_control_mid(2.0, 0.0, 1.0, 2, &p).unwrap();
        assert_relative_eq!(alpha, -9.8, max_relative = 1e-12);
        let with_phi = virtual_control_mid(2.0, 1.0, 2.0, 2, &p).unwrap();
        assert_relative_eq!(with_phi - alpha, -2.0 * 2.0f64.tanh(), max_relative = 1e-12);
    }

    #[test]
    fn final_stage_hand_value() {
        let p = table_params();
        let alpha = control_law_final(1.8, 0.0, 1.0, &p).unwrap();
        assert_relative_eq!(alpha, -7.5, max_relative = 1e-12);
        assert_eq!(control_law_final(0.0, 0.0, 1.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn adaptive_law_values() {
        assert_relative_eq!(adaptive_law(0.0, 1.0, 4.0, 1.0, 1.0, 1.0), -4.0);
        assert_relative_eq!(adaptive_law(1.0, 1.0, 0.0, 1.0, 1.0, 1.0), 1.0f64.tanh());
        assert_relative_eq!(adaptive_law(0.0, 3.0, 10.0, 2.0, 1.0, 1.0), -10.0);
    }

    #[test]
    fn event_output_values() {
        let p = table_params();
        assert_eq!(event_output(-3.0, 0.0, &p), -3.0);
        // saturation
        let w = event_output(-3.0, 100.0, &p);
        assert_relative_eq!(w, -3.0 - p.xi, max_relative = 1e-8);
        let w = event_output(-7.5, 1.0, &p);
        assert_relative_eq!(w, -7.5 - 5.5 * (1.0 * 5.5 / 25.0f64).tanh(), max_relative = 1e-12);
        // frozen direct evaluation of -7.5 - 5.5 tanh(0.22)
        assert_relative_eq!(w, -8.690849338211660, max_relative = 1e-12);
    }

    #[test]
    fn trigger_threshold() {
        let p = table_params();
        let mut t = TriggerState::new();
        assert!(!should_trigger(0.0, &t, &p));
        assert!(!should_trigger(4.9, &t, &p));
        assert!(should_trigger(5.0, &t, &p));
        assert!(should_trigger(5.1, &t, &p));
        t.fire(5.1, 0.25);
        assert_eq!(t.held_control, 5.1);
        assert_eq!(t.event_times, vec![0.25]);
        assert!(!should_trigger(5.1, &t, &p));
    }

    #[test]
    fn chain_error_coordinates() {
        let p = table_params();
        let eval = backstepping_chain(
            0.0,
            1.0,
            &DVector::from_row_slice(&[0.0, 1.0]),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &p,
        )
        .unwrap();
        // alpha_1 = 0 inside the zone, so gamma_2 = xhat_2 - alpha_1 = 1.0
        assert_eq!(eval.gamma[1], 1.0);
        assert_eq!(eval.alpha[0], 0.0);

        let eval = backstepping_chain(
            1.6,
            1.0,
            &DVector::from_row_slice(&[0.0, 1.0]),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &p,
        )
        .unwrap();
        assert_relative_eq!(eval.gamma[1], 1.0 - (-52.55), max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn dead_zone_quiescence(g1 in -0.59..0.59f64, g2 in -0.79..0.79f64,
                                phi1 in 0.0..10.0f64, phi2 in 0.0..10.0f64) {
            let p = table_params();
            // put xhat_2 so that gamma_2 = g2 given alpha_1 = 0
            let eval = backstepping_chain(
                g1, 1.0,
                &DVector::from_row_slice(&[0.0, g2]),
                &[phi1, phi2], &[1.5, 1.5], &p,
            ).unwrap();
            prop_assert_eq!(eval.alpha[0], 0.0);
            prop_assert_eq!(eval.alpha[1], 0.0);
            prop_assert_eq!(eval.w, 0.0);
            let t = TriggerState::new();
            prop_assert!(!should_trigger(eval.w, &t, &p));
            // adaptive law reduces to pure leakage
            prop_assert_eq!(adaptive_law(eval.switched[0], 1.5, phi1, 1.0, 1.0, 1.0), -phi1);
        }

        #[test]
        fn lemma1_inequality(a in -10.0..10.0f64, lambda in 1e-6..5.0f64) {
            let gap = a.abs() - a * (a / lambda).tanh();
            prop_assert!(gap >= -1e-12);
            prop_assert!(gap <= 0.2785 * lambda + 1e-12);
        }

        #[test]
        fn adaptive_first_term_nonneg(a_sw in -50.0..50.0f64, g in 1.0..5.0f64,
                                      r in 0.1..5.0f64, m_bar in 0.1..5.0f64) {
            let first = r * a_sw * g * (a_sw * g / m_bar).tanh();
            prop_assert!(first >= 0.0);
        }

        #[test]
        fn odd_symmetry_with_zero_phi(gamma in -5.0..5.0f64, g in 1.0..3.0f64) {
            let p = table_params();
            let plus = virtual_control_first(gamma, 0.0, g, 2.0, &p).unwrap();
            let minus = virtual_control_first(-gamma, 0.0, g, 2.0, &p).unwrap();
            prop_assert!((plus + minus).abs() <= 1e-10);
            let fp = control_law_final(gamma, 0.0, g, &p).unwrap();
            let fm = control_law_final(-gamma, 0.0, g, &p).unwrap();
            prop_assert!((fp + fm).abs() <= 1e-10);
        }
    }
}
