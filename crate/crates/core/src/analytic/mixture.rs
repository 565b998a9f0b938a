use std::f64::consts::PI;

use super::{MeterConfig, PpsConfig};
use crate::error::{DsaError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

impl GaussianComponent {
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.weight * (-0.5 * z * z).exp() / (self.width * (2.0 * PI).sqrt())
    }
}

/// Weighted sum of Gaussians, e.g. the PSA density `α²a²P↑(x) + β²b²P↓(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensity {
    components: Vec<GaussianComponent>,
    normalized: bool,
}

impl MixtureDensity {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        for c in &components {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(DsaError::invalid("weight", format!("{} must be finite and >= 0", c.weight)));
            }
            if !(c.width > 0.0 && c.width.is_finite()) {
                return Err(DsaError::invalid("width", format!("{} must be finite and > 0", c.width)));
            }
            if !c.center.is_finite() {
                return Err(DsaError::invalid("center", "must be finite"));
            }
        }
        Ok(Self {
            components,
            normalized: false,
        })
    }

    /// Unnormalized PSA density `P̃1(x)`; integrates to `p_f`.
    pub fn psa(pps: &PpsConfig, meter: &MeterConfig) -> Self {
        Self::two_point(pps.alpha2() * pps.a2(), pps.beta2() * pps.b2(), meter)
    }

    /// Unnormalized PSR density `P̃2(x)`; integrates to `p_f̄`.
    pub fn psr(pps: &PpsConfig, meter: &MeterConfig) -> Self {
        Self::two_point(pps.alpha2() * pps.b2(), pps.beta2() * pps.a2(), meter)
    }

    /// Density of all records before post-selection, `α²P↑(x) + β²P↓(x)`.
    pub fn total(pps: &PpsConfig, meter: &MeterConfig) -> Self {
        Self::two_point(pps.alpha2(), pps.beta2(), meter)
    }

    fn two_point(w_up: f64, w_down: f64, meter: &MeterConfig) -> Self {
        let c = |weight, center| GaussianComponent {
            weight,
            center,
            width: meter.sigma(),
        };
        Self {
            components: vec![c(w_up, meter.d()), c(w_down, -meter.d())],
            normalized: false,
        }
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Rescales weights to sum to one. Fails on an all-zero mixture.
    pub fn normalize(&self) -> Result<Self> {
        let w = self.total_weight();
        if w <= 0.0 {
            return Err(DsaError::invalid("weight", "cannot normalize a mixture with zero total weight"));
        }
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight / w,
                ..*c
            })
            .collect();
        Ok(Self {
            components,
            normalized: true,
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.pdf(x)).sum()
    }

    /// Mean of the normalized density.
    pub fn mean(&self) -> f64 {
        let w = self.total_weight();
        self.components.iter().map(|c| c.weight * c.center).sum::<f64>() / w
    }

    /// Variance of the normalized density.
    pub fn variance(&self) -> f64 {
        let w = self.total_weight();
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.width * c.width + (c.center - m) * (c.center - m)))
            .sum::<f64>()
            / w
    }

    /// Smallest and largest component centre.
    pub fn center_range(&self) -> Option<(f64, f64)> {
        let mut it = self.components.iter().map(|c| c.center);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), c| (lo.min(c), hi.max(c))))
    }

    pub fn max_width(&self) -> f64 {
        self.components.iter().map(|c| c.width).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psa_plus_psr_is_total() {
        let pps = PpsConfig::new(0.3, 1.1).unwrap();
        let m = MeterConfig::new(0.4, 0.9).unwrap();
        let (p1, p2, tot) = (MixtureDensity::psa(&pps, &m), MixtureDensity::psr(&pps, &m), MixtureDensity::total(&pps, &m));
        for x in [-2.0, -0.3, 0.0, 0.5, 3.0] {
            assert!((p1.pdf(x) + p2.pdf(x) - tot.pdf(x)).abs() < 1e-15);
        }
        assert!((p1.total_weight() - (1.0 + pps.by()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalize() {
        let m = MixtureDensity::new(vec![
            GaussianComponent { weight: 2.0, center: 1.0, width: 1.0 },
            GaussianComponent { weight: 6.0, center: -1.0, width: 2.0 },
        ])
        .unwrap()
        .normalize()
        .unwrap();
        assert!(m.is_normalized());
        assert!((m.total_weight() - 1.0).abs() < 1e-12);
        assert!((m.mean() + 0.5).abs() < 1e-15);
        assert!(MixtureDensity::new(vec![GaussianComponent { weight: -1.0, center: 0.0, width: 1.0 }]).is_err());
    }
}
