//! Closed-form layer: post-selection probabilities, sub-ensemble moments,
//! ratio factors, the DSA/BDSA signals, their variances and SNRs.
//!
//! Everything here is a pure function of [`PpsConfig`] and [`MeterConfig`].
//! Structural singularities (`B = 0`, `B·y = 0`, an empty sub-ensemble,
//! `β = η`) come back as typed errors rather than non-finite numbers.
//! Variances use the expected counts `N·p_f` and `N·p_f̄`.

mod bdsa;
mod config;
mod mixture;
mod weak_value;

pub use bdsa::{bdsa_reduced_snr, bdsa_signal, bdsa_variance_snr, eta, f_tilde, BdsaPrecision, BdsaSignal};
pub use config::{MeterConfig, PpsConfig, COS_THETA_SNAP};
pub use mixture::{GaussianComponent, MixtureDensity};
pub use weak_value::{weak_value, SpinState, WeakValueMode};

use crate::error::{finite, Channel, DsaError, Result};

/// PSA and PSR probabilities `(p_f, p_f̄) = ((1 + By)/2, (1 − By)/2)`.
pub fn postselection_probs(pps: &PpsConfig) -> (f64, f64) {
    let by = pps.by();
    ((1.0 + by) / 2.0, (1.0 - by) / 2.0)
}

pub(crate) fn require_both_channels(pps: &PpsConfig) -> Result<(f64, f64)> {
    let (pf, pfbar) = postselection_probs(pps);
    if pf <= 0.0 {
        return Err(DsaError::DegeneratePostselection { channel: Channel::Psa });
    }
    if pfbar <= 0.0 {
        return Err(DsaError::DegeneratePostselection { channel: Channel::Psr });
    }
    Ok((pf, pfbar))
}

/// `F(y)/d = (B + y)/(1 + By)`; the PSR counterpart is `F(−y)/d`.
fn mean_per_d(imbalance: f64, y: f64) -> f64 {
    (imbalance + y) / (1.0 + imbalance * y)
}

/// Sub-ensemble means `(⟨x⟩_f, ⟨x⟩_f̄) = (F(y), F(−y))`.
pub fn psa_psr_means(pps: &PpsConfig, meter: &MeterConfig) -> Result<(f64, f64)> {
    let (xf, xfbar) = psa_psr_means_per_d(pps)?;
    Ok((xf * meter.d(), xfbar * meter.d()))
}

/// Sub-ensemble means in units of `d`.
pub fn psa_psr_means_per_d(pps: &PpsConfig) -> Result<(f64, f64)> {
    require_both_channels(pps)?;
    let (b, y) = (pps.imbalance(), pps.cos_theta());
    Ok((mean_per_d(b, y), mean_per_d(b, -y)))
}

/// Ratio factors `β1 = (1 + By)/(2By)` and `β2 = (1 − By)/(2By)`; `β1 − β2 = 1`.
pub fn ratio_factors(pps: &PpsConfig) -> Result<(f64, f64)> {
    let by = pps.by();
    if by == 0.0 {
        return Err(DsaError::DegenerateBalance);
    }
    let beta1 = finite((1.0 + by) / (2.0 * by), "ratio factor beta1")?;
    let beta2 = finite((1.0 - by) / (2.0 * by), "ratio factor beta2")?;
    Ok((beta1, beta2))
}

fn check_dsa_defined(pps: &PpsConfig) -> Result<()> {
    if pps.imbalance() == 0.0 {
        return Err(DsaError::DegeneratePreselection);
    }
    if pps.cos_theta() == 0.0 {
        return Err(DsaError::DegenerateBalance);
    }
    Ok(())
}

/// The DSA difference signal `x̄ = d/B`, independent of the post-selection.
pub fn dsa_signal(pps: &PpsConfig, meter: &MeterConfig) -> Result<f64> {
    check_dsa_defined(pps)?;
    finite(meter.d() / pps.imbalance(), "dsa signal")
}

/// The difference signal assembled from its parts, `β1·⟨x⟩_f − β2·⟨x⟩_f̄`.
///
/// Algebraically equal to [`dsa_signal`]; kept as an independent route.
pub fn dsa_signal_from_means(pps: &PpsConfig, meter: &MeterConfig) -> Result<f64> {
    check_dsa_defined(pps)?;
    let (beta1, beta2) = ratio_factors(pps)?;
    let (xf, xfbar) = psa_psr_means(pps, meter)?;
    finite(beta1 * xf - beta2 * xfbar, "dsa signal")
}

/// Sub-ensemble variances `σ²_{1,2} = σ² + d²(1 − B²)sin²θ/(1 ± B cos θ)²`.
pub fn subensemble_variances(pps: &PpsConfig, meter: &MeterConfig) -> Result<(f64, f64)> {
    let (e1, e2) = excess_variance_per_d2(pps)?;
    let s2 = meter.sigma() * meter.sigma();
    let d2 = meter.d() * meter.d();
    Ok((s2 + d2 * e1, s2 + d2 * e2))
}

/// `σ²_{1,2}/d²`, evaluated as `σ²/d² + (excess)` so that the θ = 0 value is exactly `1/(4g)`.
pub fn subensemble_variances_over_d2(pps: &PpsConfig, meter: &MeterConfig) -> Result<(f64, f64)> {
    let (e1, e2) = excess_variance_per_d2(pps)?;
    let base = meter.sigma2_over_d2()?;
    Ok((base + e1, base + e2))
}

/// `σ²_k/d²` for one channel; only that channel needs non-zero probability.
pub fn channel_variance_over_d2(pps: &PpsConfig, meter: &MeterConfig, channel: Channel) -> Result<f64> {
    let (pf, pfbar) = postselection_probs(pps);
    let (p, sign) = match channel {
        Channel::Psa => (pf, 1.0),
        Channel::Psr => (pfbar, -1.0),
    };
    if p <= 0.0 {
        return Err(DsaError::DegeneratePostselection { channel });
    }
    let b = pps.imbalance();
    let denom = 1.0 + sign * pps.by();
    let excess = (1.0 - b * b) * pps.sin2_theta() / (denom * denom);
    finite(meter.sigma2_over_d2()? + excess, "sub-ensemble variance")
}

fn excess_variance_per_d2(pps: &PpsConfig) -> Result<(f64, f64)> {
    require_both_channels(pps)?;
    let b = pps.imbalance();
    let by = pps.by();
    let num = (1.0 - b * b) * pps.sin2_theta();
    let e1 = num / ((1.0 + by) * (1.0 + by));
    let e2 = num / ((1.0 - by) * (1.0 - by));
    Ok((finite(e1, "PSA variance")?, finite(e2, "PSR variance")?))
}

pub(crate) fn check_count(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(DsaError::invalid("N", "particle count must be at least 1"));
    }
    Ok(n as f64)
}

/// Variance of the DCSV estimator, `β1²σ1²/N1 + β2²σ2²/N2` with `N1 = N·p_f`, `N2 = N·p_f̄`.
pub fn dsa_variance(pps: &PpsConfig, meter: &MeterConfig, n: u64) -> Result<f64> {
    let n = check_count(n)?;
    let (beta1, beta2) = ratio_factors(pps)?;
    let (pf, pfbar) = require_both_channels(pps)?;
    let (v1, v2) = subensemble_variances(pps, meter)?;
    let var = beta1 * beta1 * v1 / (n * pf) + beta2 * beta2 * v2 / (n * pfbar);
    finite(var, "dsa variance")
}

/// SNR of the unbiased DSA scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub snr: f64,
    /// `snr / R_cm` with `R_cm = √N·|d|/σ`; lies in `[0, 1]`.
    pub reduced: f64,
}

/// Closed-form SNR
/// `R = 2√N|cos θ|·[g(1 − B²cos²θ)/(4g(1 − B²)sin²θ + 1 − B²cos²θ)]^{1/2}`.
///
/// Defined for every `B` including 0 (it does not go through `d/B`); zero at θ = π/2.
pub fn dsa_snr(pps: &PpsConfig, meter: &MeterConfig, n: u64) -> Result<Snr> {
    let n = check_count(n)?;
    if meter.d() == 0.0 {
        return Err(DsaError::invalid("d", "the SNR needs a non-zero shift d"));
    }
    let reduced = reduced_snr_closed_form(pps.imbalance(), pps.cos_theta(), meter.g());
    let snr = 2.0 * n.sqrt() * meter.g().sqrt() * reduced;
    Ok(Snr {
        snr: finite(snr, "dsa snr")?,
        reduced: finite(reduced, "dsa reduced snr")?,
    })
}

fn reduced_snr_closed_form(b: f64, y: f64, g: f64) -> f64 {
    let one_minus_b2y2 = 1.0 - b * b * y * y;
    let noise = 4.0 * g * (1.0 - b * b) * (1.0 - y) * (1.0 + y);
    let denom = noise + one_minus_b2y2;
    if denom == 0.0 {
        // |B| = |y| = 1: both terms vanish together and the ratio tends to 1.
        return y.abs();
    }
    y.abs() * (one_minus_b2y2 / denom).sqrt()
}

/// `|x̄| / √D[x̂]`, the SNR computed from the signal and variance routes.
pub fn dsa_snr_ratio_route(pps: &PpsConfig, meter: &MeterConfig, n: u64) -> Result<f64> {
    let signal = dsa_signal(pps, meter)?;
    let var = dsa_variance(pps, meter, n)?;
    finite(signal.abs() / var.sqrt(), "dsa snr")
}

/// Conventional-measurement SNR `R_cm = √N·|d|/σ`.
pub fn conventional_snr(meter: &MeterConfig, n: u64) -> Result<f64> {
    let n = check_count(n)?;
    Ok(n.sqrt() * meter.d().abs() / meter.sigma())
}
