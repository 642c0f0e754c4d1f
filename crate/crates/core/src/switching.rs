//! Dead-zone smooth-sign machinery shared by every controller stage.
//!
//! `sg` saturates the error direction smoothly inside the dead zone,
//! `dead_zone_indicator` gates the controller off inside the zone, and
//! `switched_error` is the composite error that drives both the virtual
//! controls and the adaptive laws.

use crate::error::{Error, Result};

/// Dead-zone radius for one backstepping stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadZone {
    kappa: f64,
}

impl DeadZone {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Validation(format!(
                "dead-zone radius kappa must be positive and finite, got {kappa}"
            )));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Smooth sign function. Unit sign outside the dead zone, a smooth
/// roll-off `g / ((k^2 - g^2) + |g|)` inside, zero at the origin.
pub fn sg(gamma: f64, dz: DeadZone) -> f64 {
    let k = dz.kappa;
    if gamma == 0.0 {
        return 0.0;
    }
    if gamma.abs() >= k {
        gamma.signum()
    } else {
        gamma / ((k * k - gamma * gamma) + gamma.abs())
    }
}

/// Indicator of being outside the dead zone: 1 when |gamma| >= kappa, else 0.
pub fn dead_zone_indicator(gamma: f64, dz: DeadZone) -> f64 {
    if gamma.abs() >= dz.kappa {
        1.0
    } else {
        0.0
    }
}

/// Composite switched error `(|gamma| - kappa) * sg(gamma) * f(gamma)`.
/// Zero inside the dead zone, nonnegative times the error direction outside.
pub fn switched_error(gamma: f64, dz: DeadZone) -> f64 {
    let f = dead_zone_indicator(gamma, dz);
    if f == 0.0 {
        return 0.0;
    }
    (gamma.abs() - dz.kappa) * sg(gamma, dz)
}
