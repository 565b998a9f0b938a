//! Biased DSA: the PSR channel enters the difference with a weight `β`.
//!
//! Amplification is singular at `β = η = p_f/p_f̄`. Variances come in two forms:
//! the exact one (realized weights replaced by expected counts) and the
//! `β ≃ η` approximation; the SNR reported as `snr` is the approximate form
//! `√(N p_f)·F̃(y)/√(σ1² + ησ2²)`, which is the one that carries the
//! zero-lines at `y = 0`.

use super::{
    check_count, psa_psr_means, require_both_channels, subensemble_variances,
    subensemble_variances_over_d2, MeterConfig, PpsConfig,
};
use crate::error::{finite, DsaError, Result};

/// `η = p_f/p_f̄`.
pub fn eta(pps: &PpsConfig) -> Result<f64> {
    let (pf, pfbar) = require_both_channels(pps)?;
    Ok(pf / pfbar)
}

/// `F̃(y) = F(y) − F(−y) = 2y(1 − B²)d/(1 − B²y²)`.
pub fn f_tilde(pps: &PpsConfig, meter: &MeterConfig) -> Result<f64> {
    require_both_channels(pps)?;
    Ok(f_tilde_per_d(pps) * meter.d())
}

fn f_tilde_per_d(pps: &PpsConfig) -> f64 {
    let b = pps.imbalance();
    let y = pps.cos_theta();
    2.0 * y * (1.0 - b * b) / (1.0 - b * b * y * y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdsaSignal {
    /// `(η⟨x⟩_f − β⟨x⟩_f̄)/(η − β)`.
    pub exact: f64,
    /// `η/(η − β)·F̃(y)`, valid near `β ≃ η`.
    pub approx: f64,
    pub eta: f64,
}

pub fn bdsa_signal(pps: &PpsConfig, meter: &MeterConfig, beta: f64) -> Result<BdsaSignal> {
    check_beta(beta)?;
    let eta = eta(pps)?;
    let gap = eta - beta;
    if gap == 0.0 {
        return Err(DsaError::SingularBias { beta });
    }
    let (xf, xfbar) = psa_psr_means(pps, meter)?;
    let exact = (eta * xf - beta * xfbar) / gap;
    let approx = eta / gap * f_tilde(pps, meter)?;
    Ok(BdsaSignal {
        exact: finite(exact, "bdsa signal")?,
        approx: finite(approx, "bdsa signal (approximate)")?,
        eta,
    })
}

/// Precision of the biased estimator. Each field states which form it uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdsaPrecision {
    /// Exact: `(p_f σ1² + β² p_f̄ σ2²)/(N p_β²)` with `p_β = p_f − β p_f̄`.
    pub variance: f64,
    /// `β ≃ η` form: `p_f (σ1² + ησ2²)/(N p_β²)`.
    pub variance_approx: f64,
    /// `β ≃ η` form: `√(N p_f)·|F̃(y)|/√(σ1² + ησ2²)`.
    pub snr: f64,
    /// Exact: `|x̄_β| / √variance`.
    pub snr_exact: f64,
    /// `snr / R_cm`, approximate form; `None` when `d = 0`.
    pub reduced_snr: Option<f64>,
}

pub fn bdsa_variance_snr(pps: &PpsConfig, meter: &MeterConfig, beta: f64, n: u64) -> Result<BdsaPrecision> {
    let n = check_count(n)?;
    check_beta(beta)?;
    let (pf, pfbar) = require_both_channels(pps)?;
    let p_beta = p_beta(pf, pfbar, beta)?;
    let eta = pf / pfbar;
    let (v1, v2) = subensemble_variances(pps, meter)?;
    let denom = n * p_beta * p_beta;
    let variance = finite((pf * v1 + beta * beta * pfbar * v2) / denom, "bdsa variance")?;
    let variance_approx = finite(pf * (v1 + eta * v2) / denom, "bdsa variance (approximate)")?;
    let snr = (n * pf).sqrt() * f_tilde(pps, meter)?.abs() / (v1 + eta * v2).sqrt();
    let signal = bdsa_signal(pps, meter, beta)?;
    let snr_exact = signal.exact.abs() / variance.sqrt();
    let reduced_snr = if meter.d() == 0.0 {
        None
    } else {
        Some(bdsa_reduced_snr(pps, meter, beta)?)
    };
    Ok(BdsaPrecision {
        variance,
        variance_approx,
        snr: finite(snr, "bdsa snr")?,
        snr_exact: finite(snr_exact, "bdsa snr (exact)")?,
        reduced_snr,
    })
}

/// Reduced BDSA SNR `√p_f·|F̃(y)/d|·σ/√(σ1² + ησ2²)` (approximate form).
pub fn bdsa_reduced_snr(pps: &PpsConfig, meter: &MeterConfig, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let (pf, pfbar) = require_both_channels(pps)?;
    p_beta(pf, pfbar, beta)?;
    let eta = pf / pfbar;
    let (r1, r2) = subensemble_variances_over_d2(pps, meter)?;
    let r0 = meter.sigma2_over_d2()?;
    let reduced = pf.sqrt() * f_tilde_per_d(pps).abs() / ((r1 + eta * r2) / r0).sqrt();
    finite(reduced, "bdsa reduced snr")
}

fn p_beta(pf: f64, pfbar: f64, beta: f64) -> Result<f64> {
    let p = pf - beta * pfbar;
    if p == 0.0 {
        return Err(DsaError::SingularBias { beta });
    }
    Ok(p)
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() {
        return Err(DsaError::invalid("beta_bias", "must be finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{dsa_signal, dsa_variance};
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_bias_is_psa_mean() {
        let m = MeterConfig::new(0.2, 1.0).unwrap();
        let p = PpsConfig::new(0.3, 0.8).unwrap();
        let s = bdsa_signal(&p, &m, 0.0).unwrap();
        let (xf, _) = psa_psr_means(&p, &m).unwrap();
        assert_eq!(s.exact, xf);
    }

    #[test]
    fn unit_bias_is_unbiased_dsa() {
        let m = MeterConfig::new(0.2, 1.3).unwrap();
        for (b, t) in [(0.2, 0.3), (0.5, 1.0), (-0.7, 2.5), (0.9, 0.05)] {
            let p = PpsConfig::new(b, t).unwrap();
            let s = bdsa_signal(&p, &m, 1.0).unwrap();
            let x = dsa_signal(&p, &m).unwrap();
            assert!((s.exact - x).abs() <= 1e-12 * x.abs());
            let v = bdsa_variance_snr(&p, &m, 1.0, 5000).unwrap().variance;
            let vd = dsa_variance(&p, &m, 5000).unwrap();
            assert!((v - vd).abs() <= 1e-12 * vd);
        }
    }

    #[test]
    fn singular_where_eta_matches() {
        // (1 + By)/(1 − By) = 2 at By = 1/3; B = 0.5 gives y = 2/3.
        let m = MeterConfig::new(0.1, 1.0).unwrap();
        let theta = (2.0f64 / 3.0).acos();
        let p = PpsConfig::new(0.5, theta).unwrap();
        let eta = eta(&p).unwrap();
        assert!((eta - 2.0).abs() < 1e-14);
        assert_eq!(bdsa_signal(&p, &m, eta), Err(DsaError::SingularBias { beta: eta }));
        let near = bdsa_signal(&PpsConfig::new(0.5, theta + 1e-6).unwrap(), &m, 2.0).unwrap();
        assert!(near.exact.abs() > 1e3 * m.d());
    }

    #[test]
    fn f_tilde_matches_difference_of_means() {
        let m = MeterConfig::new(0.7, 1.0).unwrap();
        for (b, t) in [(0.1, 0.2), (0.5, 1.3), (-0.4, 2.9)] {
            let p = PpsConfig::new(b, t).unwrap();
            let (xf, xfbar) = psa_psr_means(&p, &m).unwrap();
            assert!((f_tilde(&p, &m).unwrap() - (xf - xfbar)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_line_and_endpoints() {
        let m = MeterConfig::from_strength(0.1, 1.0).unwrap();
        for beta in [0.4, 2.0, 7.0] {
            let p = PpsConfig::new(0.35, PI / 2.0).unwrap();
            assert_eq!(bdsa_variance_snr(&p, &m, beta, 100).unwrap().snr, 0.0);
            for t in [0.0, PI] {
                let r = bdsa_reduced_snr(&PpsConfig::new(0.35, t).unwrap(), &m, beta).unwrap();
                assert!(r < 1.0 && r > 0.9, "{r}");
                assert!((r - (1.0f64 - 0.35 * 0.35).sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn approx_close_to_exact_near_ridge() {
        let m = MeterConfig::new(0.1, 1.0).unwrap();
        let p = PpsConfig::new(0.5, (2.0f64 / 3.0).acos() + 1e-4).unwrap();
        let s = bdsa_signal(&p, &m, 2.0).unwrap();
        assert!((s.exact / s.approx - 1.0).abs() < 1e-3);
        let v = bdsa_variance_snr(&p, &m, 2.0, 10_000).unwrap();
        assert!((v.variance / v.variance_approx - 1.0).abs() < 1e-3);
        assert!((v.snr_exact / v.snr - 1.0).abs() < 1e-2);
    }
}
