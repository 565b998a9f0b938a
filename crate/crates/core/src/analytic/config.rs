use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DsaError, Result};

/// |cos θ| below this is treated as exactly zero.
///
/// `cos(π/2)` evaluates to ~6e-17 in f64, and grid construction adds a few ulp
/// of error in θ; without the snap the balance singularity at θ = π/2 would
/// show up as enormous finite numbers instead of a typed error.
pub const COS_THETA_SNAP: f64 = 8.0 * f64::EPSILON;

/// Pre- and post-selection of the classically mixed spin.
///
/// The pre-selected state is `α²|↑⟩⟨↑| + β²|↓⟩⟨↓|`, summarised by the imbalance
/// `B = α² − β²`. The post-selection accepts a spin-up record with probability
/// `a² = cos²(θ/2)` and a spin-down record with `b² = sin²(θ/2)`; `y = cos θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpsConfig {
    alpha2: f64,
    beta2: f64,
    imbalance: f64,
    theta: f64,
    a2: f64,
    b2: f64,
    cos_theta: f64,
}

impl PpsConfig {
    /// Builds the configuration from the imbalance `B ∈ [−1, 1]` and `θ ∈ [0, π]`.
    pub fn new(imbalance: f64, theta: f64) -> Result<Self> {
        if !imbalance.is_finite() || !(-1.0..=1.0).contains(&imbalance) {
            return Err(DsaError::invalid("B", format!("{imbalance} is outside [-1, 1]")));
        }
        let (theta, a2, b2, cos_theta) = post_selection(theta)?;
        let beta2 = (1.0 - imbalance) / 2.0;
        Ok(Self {
            alpha2: 1.0 - beta2,
            beta2,
            imbalance,
            theta,
            a2,
            b2,
            cos_theta,
        })
    }

    /// Builds the configuration from the spin-up weight `α² ∈ [0, 1]` and `θ`.
    pub fn from_alpha2(alpha2: f64, theta: f64) -> Result<Self> {
        if !alpha2.is_finite() || !(0.0..=1.0).contains(&alpha2) {
            return Err(DsaError::invalid("alpha2", format!("{alpha2} is outside [0, 1]")));
        }
        let (theta, a2, b2, cos_theta) = post_selection(theta)?;
        Ok(Self {
            alpha2,
            beta2: 1.0 - alpha2,
            imbalance: 2.0 * alpha2 - 1.0,
            theta,
            a2,
            b2,
            cos_theta,
        })
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    /// `B = α² − β²`.
    pub fn imbalance(&self) -> f64 {
        self.imbalance
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Acceptance probability of a spin-up record, `cos²(θ/2)`.
    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// Acceptance probability of a spin-down record, `sin²(θ/2)`.
    pub fn b2(&self) -> f64 {
        self.b2
    }

    /// `y = cos θ`.
    pub fn cos_theta(&self) -> f64 {
        self.cos_theta
    }

    /// `sin² θ`, evaluated as `(1 − y)(1 + y)` so that it is exactly zero at θ ∈ {0, π}.
    pub fn sin2_theta(&self) -> f64 {
        (1.0 - self.cos_theta) * (1.0 + self.cos_theta)
    }

    /// `B·y`.
    pub fn by(&self) -> f64 {
        self.imbalance * self.cos_theta
    }
}

fn post_selection(theta: f64) -> Result<(f64, f64, f64, f64)> {
    if !theta.is_finite() || !(0.0..=PI).contains(&theta) {
        return Err(DsaError::invalid("theta", format!("{theta} is outside [0, pi]")));
    }
    let mut y = theta.cos();
    if y.abs() < COS_THETA_SNAP {
        y = 0.0;
    }
    let b2 = (1.0 - y) / 2.0;
    Ok((theta, 1.0 - b2, b2, y))
}

/// Gaussian meter: records are centred at `±d` with standard deviation `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterConfig {
    d: f64,
    sigma: f64,
    g: f64,
}

impl MeterConfig {
    pub fn new(d: f64, sigma: f64) -> Result<Self> {
        if !d.is_finite() {
            return Err(DsaError::invalid("d", "must be finite"));
        }
        check_sigma(sigma)?;
        let r = d / (2.0 * sigma);
        Ok(Self { d, sigma, g: r * r })
    }

    /// Builds a meter from the measurement strength `g = (d/2σ)²`, with `d ≥ 0`.
    pub fn from_strength(g: f64, sigma: f64) -> Result<Self> {
        if !g.is_finite() || g < 0.0 {
            return Err(DsaError::invalid("g", format!("{g} must be a finite non-negative number")));
        }
        check_sigma(sigma)?;
        Ok(Self {
            d: 2.0 * sigma * g.sqrt(),
            sigma,
            g,
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Measurement strength `g = (d/2σ)²`.
    pub fn g(&self) -> f64 {
        self.g
    }

    /// `σ²/d² = 1/(4g)`.
    pub fn sigma2_over_d2(&self) -> Result<f64> {
        if self.g == 0.0 {
            return Err(DsaError::invalid("d", "d = 0 leaves sigma^2/d^2 undefined"));
        }
        Ok(1.0 / (4.0 * self.g))
    }

    /// Same meter shifted to a different `d`, keeping `σ`.
    pub fn with_d(&self, d: f64) -> Result<Self> {
        Self::new(d, self.sigma)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(DsaError::invalid("sigma", format!("{sigma} must be a finite positive number")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(PpsConfig::new(1.5, 0.3).is_err());
        assert!(PpsConfig::new(0.2, -0.1).is_err());
        assert!(PpsConfig::new(0.2, 3.2).is_err());
        assert!(PpsConfig::from_alpha2(-0.01, 0.0).is_err());
        assert!(matches!(
            MeterConfig::new(0.1, 0.0),
            Err(DsaError::InvalidParameter { ref key, .. }) if key == "sigma"
        ));
        assert!(MeterConfig::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn cos_theta_snaps_at_right_angle() {
        let p = PpsConfig::new(0.4, PI / 2.0).unwrap();
        assert_eq!(p.cos_theta(), 0.0);
        assert_eq!(p.a2(), 0.5);
        let p = PpsConfig::new(0.4, PI * 100.0 / 200.0).unwrap();
        assert_eq!(p.by(), 0.0);
        assert_eq!(PpsConfig::new(0.4, PI).unwrap().cos_theta(), -1.0);
        assert_eq!(PpsConfig::new(0.4, 0.0).unwrap().sin2_theta(), 0.0);
    }

    #[test]
    fn strength_round_trip() {
        let m = MeterConfig::from_strength(0.1, 1.0).unwrap();
        assert_eq!(m.sigma2_over_d2().unwrap(), 2.5);
        let back = MeterConfig::new(m.d(), m.sigma()).unwrap();
        assert!((back.g() - 0.1).abs() < 1e-16);
    }

    proptest! {
        #[test]
        fn pps_invariants(b in -1.0f64..=1.0, theta in 0.0f64..=PI) {
            let p = PpsConfig::new(b, theta).unwrap();
            prop_assert_eq!(p.alpha2() + p.beta2(), 1.0);
            prop_assert_eq!(p.a2() + p.b2(), 1.0);
            prop_assert!((p.alpha2() - p.beta2() - p.imbalance()).abs() <= 2.0 * f64::EPSILON);
            prop_assert!((1.0 - 2.0 * p.b2() - p.cos_theta()).abs() <= 2.0 * f64::EPSILON);
            prop_assert!((p.a2() - (theta / 2.0).cos().powi(2)).abs() < 1e-14);
        }

        #[test]
        fn alpha2_parameterisation(alpha2 in 0.0f64..=1.0, theta in 0.0f64..=PI) {
            let p = PpsConfig::from_alpha2(alpha2, theta).unwrap();
            prop_assert_eq!(p.alpha2() + p.beta2(), 1.0);
            prop_assert!((p.alpha2() - p.beta2() - p.imbalance()).abs() <= 2.0 * f64::EPSILON);
            prop_assert!((-1.0..=1.0).contains(&p.imbalance()));
        }

        #[test]
        fn meter_strength(d in -10.0f64..10.0, sigma in 0.01f64..10.0) {
            let m = MeterConfig::new(d, sigma).unwrap();
            let expect = (d / (2.0 * sigma)).powi(2);
            prop_assert!((m.g() - expect).abs() <= 4.0 * f64::EPSILON * expect);
            prop_assert!(m.g() >= 0.0);
        }
    }
}
