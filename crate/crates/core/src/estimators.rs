//! Difference-signal estimators on sampled data.
//!
//! The unbiased DCSV estimate is `x̂ = β1·Ȳ1 − β2·Ȳ2` with realized weights
//! `β1 = N1/(N1 − N2)`, `β2 = N2/(N1 − N2)`; the biased one uses
//! `β̃1 = N1/(N1 − βN2)`, `β̃2 = βN2/(N1 − βN2)`. Both report
//! `D[x̂] = w1²s1²/N1 + w2²s2²/N2` with sample variances `s²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, MeterConfig, PpsConfig};
use crate::error::{finite, DsaError, Result};
use crate::sampler::{sample_batch, ChannelStats, Histogram, Imperfection, SampleBatch, SplitHistograms};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorMode {
    Unbiased,
    Biased(f64),
}

impl EstimatorMode {
    fn bias(&self) -> f64 {
        match *self {
            EstimatorMode::Unbiased => 1.0,
            EstimatorMode::Biased(beta) => beta,
        }
    }
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorMode::Unbiased => f.write_str("unbiased"),
            EstimatorMode::Biased(beta) => write!(f, "biased({beta})"),
        }
    }
}

/// Count, mean and unbiased sample variance of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSummary {
    pub count: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ChannelSummary {
    pub fn from_stats(stats: &ChannelStats) -> Option<Self> {
        Some(Self {
            count: stats.count as f64,
            mean: stats.mean()?,
            variance: stats.sample_variance()?,
        })
    }

    /// Weighted summary of a binned channel, records placed at bin centres.
    pub fn from_bins(centers: &[f64], weights: &[f64]) -> Option<Self> {
        let count: f64 = weights.iter().sum();
        if count < 2.0 {
            return None;
        }
        let mean = centers.iter().zip(weights).map(|(c, w)| c * w).sum::<f64>() / count;
        let ss: f64 = centers.iter().zip(weights).map(|(c, w)| w * (c - mean) * (c - mean)).sum();
        Some(Self {
            count,
            mean,
            variance: ss / (count - 1.0),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateFlags {
    /// The batch carries injected background records.
    pub background_injected: bool,
    /// `|N1 − βN2|` is within three standard deviations of zero.
    pub near_singular: bool,
    /// Computed from binned data rather than exact sums.
    pub from_histogram: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsaEstimate {
    pub xbar: f64,
    pub variance: f64,
    pub snr: f64,
    pub d_hat: f64,
    pub n1: f64,
    pub n2: f64,
    pub mode: EstimatorMode,
    pub flags: EstimateFlags,
}

/// Core of both estimators, on channel summaries.
pub fn estimate_from_summaries(
    psa: &ChannelSummary,
    psr: &ChannelSummary,
    pps: &PpsConfig,
    mode: EstimatorMode,
) -> Result<DsaEstimate> {
    let (n1, n2) = (psa.count, psr.count);
    if n1 < 2.0 || n2 < 2.0 {
        return Err(DsaError::InsufficientData { n1, n2 });
    }
    let beta = mode.bias();
    let denom = n1 - beta * n2;
    if denom.abs() < 1.0 {
        return Err(match mode {
            EstimatorMode::Unbiased => DsaError::BalancedCounts { n1, n2 },
            EstimatorMode::Biased(beta) => DsaError::RealizedSingularBias { n1, n2, beta },
        });
    }
    let w1 = n1 / denom;
    let w2 = beta * n2 / denom;
    let xbar = finite(w1 * psa.mean - w2 * psr.mean, "difference signal")?;
    let variance = finite(w1 * w1 * psa.variance / n1 + w2 * w2 * psr.variance / n2, "estimator variance")?;
    if variance <= 0.0 {
        return Err(DsaError::NonFinite("snr (zero estimator variance)"));
    }
    let d_hat = match mode {
        EstimatorMode::Unbiased => {
            if pps.imbalance() == 0.0 {
                return Err(DsaError::DegeneratePreselection);
            }
            pps.imbalance() * xbar
        }
        EstimatorMode::Biased(beta) => xbar / biased_sensitivity(pps, beta)?,
    };
    Ok(DsaEstimate {
        xbar,
        variance,
        snr: xbar.abs() / variance.sqrt(),
        d_hat: finite(d_hat, "extracted d")?,
        n1,
        n2,
        mode,
        flags: EstimateFlags {
            near_singular: denom.abs() < 3.0 * (n1 + beta * beta * n2).sqrt(),
            ..EstimateFlags::default()
        },
    })
}

/// `∂x̄_β/∂d`: the exact biased signal is linear in `d`, so this is its value at `d = 1`.
fn biased_sensitivity(pps: &PpsConfig, beta: f64) -> Result<f64> {
    let unit = MeterConfig::new(1.0, 1.0)?;
    let k = analytic::bdsa_signal(pps, &unit, beta)?.exact;
    if k == 0.0 {
        return Err(DsaError::ZeroSensitivity);
    }
    Ok(k)
}

fn batch_summaries(batch: &SampleBatch) -> Result<(ChannelSummary, ChannelSummary)> {
    let insufficient = || DsaError::InsufficientData {
        n1: batch.n1() as f64,
        n2: batch.n2() as f64,
    };
    let s1 = ChannelSummary::from_stats(&batch.psa).ok_or_else(insufficient)?;
    let s2 = ChannelSummary::from_stats(&batch.psr).ok_or_else(insufficient)?;
    Ok((s1, s2))
}

/// Unbiased DSA estimate from exact sufficient statistics; `d̂ = B·x̄`.
///
/// `pps` supplies `B`; it normally equals `batch.pps`.
pub fn estimate_dsa(batch: &SampleBatch, pps: &PpsConfig) -> Result<DsaEstimate> {
    estimate_batch(batch, pps, EstimatorMode::Unbiased)
}

/// Biased DSA estimate; `d̂` inverts the exact `x̄_β(d)` relation.
pub fn estimate_bdsa(batch: &SampleBatch, pps: &PpsConfig, beta: f64) -> Result<DsaEstimate> {
    if !beta.is_finite() {
        return Err(DsaError::invalid("beta_bias", "must be finite"));
    }
    estimate_batch(batch, pps, EstimatorMode::Biased(beta))
}

pub fn estimate_batch(batch: &SampleBatch, pps: &PpsConfig, mode: EstimatorMode) -> Result<DsaEstimate> {
    let (s1, s2) = batch_summaries(batch)?;
    let mut est = estimate_from_summaries(&s1, &s2, pps, mode)?;
    est.flags.background_injected = batch.imperfection.background_per_channel > 0;
    Ok(est)
}

/// Estimate from histograms recovered by [`crate::sampler::postprocess_split`].
pub fn estimate_from_split(split: &SplitHistograms, pps: &PpsConfig, mode: EstimatorMode) -> Result<DsaEstimate> {
    let centers: Vec<f64> = split.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let n1: f64 = split.psa.iter().sum();
    let n2: f64 = split.psr.iter().sum();
    let insufficient = || DsaError::InsufficientData { n1, n2 };
    let s1 = ChannelSummary::from_bins(&centers, &split.psa).ok_or_else(insufficient)?;
    let s2 = ChannelSummary::from_bins(&centers, &split.psr).ok_or_else(insufficient)?;
    let mut est = estimate_from_summaries(&s1, &s2, pps, mode)?;
    est.flags.from_histogram = true;
    Ok(est)
}

/// Mean of the normalized difference histogram `(n1(x) − n2(x))/(N1 − N2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSignal {
    pub xbar: f64,
    pub d_hat: f64,
    /// `Σ_x (n1(x) − n2(x))` over in-range bins.
    pub count_difference: i64,
}

/// Difference-histogram route: channel-identical additive background cancels
/// bin by bin, so this signal is exactly invariant under it. Under/overflow
/// records are excluded.
pub fn difference_histogram_signal(psa: &Histogram, psr: &Histogram, pps: &PpsConfig) -> Result<DifferenceSignal> {
    let diff = psa.difference(psr)?;
    let inner = &diff[1..diff.len() - 1];
    let count_difference: i64 = inner.iter().sum();
    if count_difference == 0 {
        return Err(DsaError::BalancedCounts {
            n1: psa.in_range_total() as f64,
            n2: psr.in_range_total() as f64,
        });
    }
    if pps.imbalance() == 0.0 {
        return Err(DsaError::DegeneratePreselection);
    }
    let moment: f64 = psa.centers().iter().zip(inner).map(|(c, &k)| c * k as f64).sum();
    let xbar = moment / count_difference as f64;
    Ok(DifferenceSignal {
        xbar,
        d_hat: pps.imbalance() * xbar,
        count_difference,
    })
}

/// Conventional measurement without post-selection: every particle is
/// prepared spin-up (`B = 1`) and `d̂` is the plain sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionalEstimate {
    pub d_hat: f64,
    pub variance: f64,
    pub n: u64,
}

pub fn conventional_estimate(meter: &MeterConfig, n: u64, seed: u64, imperfection: &Imperfection) -> Result<ConventionalEstimate> {
    let pps = PpsConfig::new(1.0, 0.0)?;
    let batch = sample_batch(&pps, meter, n, seed, imperfection, false)?;
    let s = ChannelSummary::from_stats(&batch.psa).ok_or(DsaError::InsufficientData {
        n1: batch.n1() as f64,
        n2: 0.0,
    })?;
    Ok(ConventionalEstimate {
        d_hat: s.mean,
        variance: s.variance / s.count,
        n,
    })
}

/// Shift of `d̂` caused by a common misalignment offset `ε`, DSA versus conventional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetResponse {
    pub epsilon: f64,
    /// `d̂(ε) − d̂(0)` for the DSA estimator, same seed.
    pub dsa_shift: f64,
    /// `B·ε`.
    pub dsa_expected_shift: f64,
    /// Standard error of the DSA `d̂` at `ε`.
    pub dsa_standard_error: f64,
    pub dsa_d_hat: f64,
    pub conventional_shift: f64,
    /// `ε`.
    pub conventional_expected_shift: f64,
    pub conventional_standard_error: f64,
    pub conventional_d_hat: f64,
}

/// Runs paired simulations (offset 0 and `ε`, same seed) for both schemes.
pub fn offset_response(pps: &PpsConfig, meter: &MeterConfig, n: u64, seed: u64, epsilon: f64) -> Result<OffsetResponse> {
    let clean = estimate_dsa(&sample_batch(pps, meter, n, seed, &Imperfection::default(), false)?, pps)?;
    let shifted = estimate_dsa(&sample_batch(pps, meter, n, seed, &Imperfection::offset(epsilon), false)?, pps)?;
    let conv_clean = conventional_estimate(meter, n, seed, &Imperfection::default())?;
    let conv_shifted = conventional_estimate(meter, n, seed, &Imperfection::offset(epsilon))?;
    Ok(OffsetResponse {
        epsilon,
        dsa_shift: shifted.d_hat - clean.d_hat,
        dsa_expected_shift: pps.imbalance() * epsilon,
        dsa_standard_error: pps.imbalance().abs() * shifted.variance.sqrt(),
        dsa_d_hat: shifted.d_hat,
        conventional_shift: conv_shifted.d_hat - conv_clean.d_hat,
        conventional_expected_shift: epsilon,
        conventional_standard_error: conv_shifted.variance.sqrt(),
        conventional_d_hat: conv_shifted.d_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    /// Replicates requested.
    pub m: usize,
    /// Replicates that hit a degeneracy and were left out.
    pub excluded: usize,
    pub mode: EstimatorMode,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    /// Analytic signal (`d/B`, or the exact biased signal).
    pub analytic_mean: f64,
    /// Analytic variance with expected counts.
    pub analytic_variance: f64,
    /// `empirical_variance / analytic_variance`.
    pub ratio: f64,
    /// Extra variance from binomial fluctuation of the realized counts, which
    /// the closed-form variance (conditional on the counts) leaves out.
    pub count_noise_variance: f64,
    /// `empirical_variance / (analytic_variance + count_noise_variance)`.
    pub total_ratio: f64,
    /// Mean of the per-replicate variance estimates (realized counts).
    pub mean_estimated_variance: f64,
    pub mean_n1: f64,
    pub mean_n2: f64,
    pub expected_n1: f64,
    pub expected_n2: f64,
}

/// Minimum number of replicates.
pub const MIN_REPLICATES: usize = 30;

/// `M` independent runs with seeds `base_seed + i`.
pub fn replicate_study(
    pps: &PpsConfig,
    meter: &MeterConfig,
    n: u64,
    m: usize,
    base_seed: u64,
    mode: EstimatorMode,
) -> Result<ReplicateSummary> {
    let seeds: Vec<u64> = (0..m as u64).map(|i| base_seed.wrapping_add(i)).collect();
    replicate_study_with_seeds(pps, meter, n, &seeds, mode, &Imperfection::default())
}

/// Delta-method variance of `x̄` due to the multinomial split `N1 + N2 = N`.
///
/// With `x̄ = (N1·m1 − β·N2·m2)/(N1 − β·N2)` and `N2 = N − N1`,
/// `∂x̄/∂N1 = (x_f + β·x_f̄ − (1 + β)·x̄)/(N·(p_f − β·p_f̄))` and `Var N1 = N·p_f·p_f̄`.
pub fn count_noise_variance(pps: &PpsConfig, meter: &MeterConfig, n: u64, mode: EstimatorMode) -> Result<f64> {
    let (pf, pfbar) = analytic::require_both_channels(pps)?;
    let (xf, xfbar) = analytic::psa_psr_means(pps, meter)?;
    let (beta, xbar) = match mode {
        EstimatorMode::Unbiased => (1.0, analytic::dsa_signal(pps, meter)?),
        EstimatorMode::Biased(beta) => (beta, analytic::bdsa_signal(pps, meter, beta)?.exact),
    };
    let n = n as f64;
    let slope = (xf + beta * xfbar - (1.0 + beta) * xbar) / (n * (pf - beta * pfbar));
    finite(slope * slope * n * pf * pfbar, "count-noise variance")
}

pub fn replicate_study_with_seeds(
    pps: &PpsConfig,
    meter: &MeterConfig,
    n: u64,
    seeds: &[u64],
    mode: EstimatorMode,
    imperfection: &Imperfection,
) -> Result<ReplicateSummary> {
    let m = seeds.len();
    if m < MIN_REPLICATES {
        return Err(DsaError::invalid("M", format!("need at least {MIN_REPLICATES} replicates, got {m}")));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(DsaError::SeedReuse(w[0]));
    }
    let (analytic_mean, analytic_variance) = match mode {
        EstimatorMode::Unbiased => (analytic::dsa_signal(pps, meter)?, analytic::dsa_variance(pps, meter, n)?),
        EstimatorMode::Biased(beta) => (
            analytic::bdsa_signal(pps, meter, beta)?.exact,
            analytic::bdsa_variance_snr(pps, meter, beta, n)?.variance,
        ),
    };

    let count_noise_variance = count_noise_variance(pps, meter, n, mode)?;

    let results: Vec<Result<DsaEstimate>> = seeds
        .par_iter()
        .map(|&seed| estimate_batch(&sample_batch(pps, meter, n, seed, imperfection, false)?, pps, mode))
        .collect();
    let mut estimates = Vec::with_capacity(m);
    let mut excluded = 0;
    for r in results {
        match r {
            Ok(e) => estimates.push(e),
            Err(e) if e.is_degeneracy() => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if estimates.len() < 2 {
        return Err(DsaError::InsufficientData {
            n1: estimates.len() as f64,
            n2: 0.0,
        });
    }
    let k = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.xbar).sum::<f64>() / k;
    let var = estimates.iter().map(|e| (e.xbar - mean).powi(2)).sum::<f64>() / (k - 1.0);
    if var == 0.0 {
        return Err(DsaError::SeedReuse(seeds[0]));
    }
    let (pf, pfbar) = analytic::postselection_probs(pps);
    Ok(ReplicateSummary {
        m,
        excluded,
        mode,
        empirical_mean: mean,
        empirical_variance: var,
        analytic_mean,
        analytic_variance,
        ratio: var / analytic_variance,
        count_noise_variance,
        total_ratio: var / (analytic_variance + count_noise_variance),
        mean_estimated_variance: estimates.iter().map(|e| e.variance).sum::<f64>() / k,
        mean_n1: estimates.iter().map(|e| e.n1).sum::<f64>() / k,
        mean_n2: estimates.iter().map(|e| e.n2).sum::<f64>() / k,
        expected_n1: n as f64 * pf,
        expected_n2: n as f64 * pfbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(count: f64, mean: f64, variance: f64) -> ChannelSummary {
        ChannelSummary { count, mean, variance }
    }

    #[test]
    fn balanced_counts_rejected() {
        let p = PpsConfig::new(0.2, 0.3).unwrap();
        let s = summary(500.0, 0.1, 1.0);
        assert_eq!(
            estimate_from_summaries(&s, &s, &p, EstimatorMode::Unbiased),
            Err(DsaError::BalancedCounts { n1: 500.0, n2: 500.0 })
        );
        assert!(matches!(
            estimate_from_summaries(&summary(1.0, 0.0, 0.0), &s, &p, EstimatorMode::Unbiased),
            Err(DsaError::InsufficientData { .. })
        ));
        assert!(matches!(
            estimate_from_summaries(&summary(1000.0, 0.0, 1.0), &s, &p, EstimatorMode::Biased(2.0)),
            Err(DsaError::RealizedSingularBias { .. })
        ));
    }

    #[test]
    fn realized_weights_differ_by_one() {
        let p = PpsConfig::new(0.5, 0.3).unwrap();
        let s1 = summary(700.0, 1.0, 1.0);
        let s2 = summary(300.0, 1.0, 1.0);
        // Equal sub-ensemble means: x̄ = (β1 − β2)·mean = mean.
        let e = estimate_from_summaries(&s1, &s2, &p, EstimatorMode::Unbiased).unwrap();
        assert!((e.xbar - 1.0).abs() < 1e-15);
        assert!((e.d_hat - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_bias_is_psa_mean() {
        let p = PpsConfig::new(0.5, 0.3).unwrap();
        let e = estimate_from_summaries(&summary(700.0, 0.37, 1.0), &summary(300.0, -0.2, 1.0), &p, EstimatorMode::Biased(0.0)).unwrap();
        assert_eq!(e.xbar, 0.37);
        assert!((e.variance - 1.0 / 700.0).abs() < 1e-18);
    }

    #[test]
    fn unit_bias_matches_unbiased() {
        let p = PpsConfig::new(0.3, 0.9).unwrap();
        let m = MeterConfig::new(0.2, 1.0).unwrap();
        let batch = sample_batch(&p, &m, 50_000, 9, &Imperfection::default(), false).unwrap();
        let u = estimate_dsa(&batch, &p).unwrap();
        let b = estimate_bdsa(&batch, &p, 1.0).unwrap();
        assert_eq!((u.xbar, u.variance, u.snr, u.n1, u.n2), (b.xbar, b.variance, b.snr, b.n1, b.n2));
        assert!((u.d_hat - b.d_hat).abs() <= 1e-12 * u.d_hat.abs());
        assert_eq!(u.flags, b.flags);
    }

    #[test]
    fn seed_reuse_detected() {
        let p = PpsConfig::new(0.5, 0.5).unwrap();
        let m = MeterConfig::new(0.2, 1.0).unwrap();
        let seeds = vec![5u64; 40];
        assert_eq!(
            replicate_study_with_seeds(&p, &m, 1000, &seeds, EstimatorMode::Unbiased, &Imperfection::default()),
            Err(DsaError::SeedReuse(5))
        );
        assert!(replicate_study(&p, &m, 1000, 10, 0, EstimatorMode::Unbiased).is_err());
    }

    #[test]
    fn difference_route_balanced() {
        let h = Histogram::from_counts(vec![0.0, 1.0, 2.0], vec![3, 4], 0, 0).unwrap();
        let p = PpsConfig::new(0.5, 0.5).unwrap();
        assert!(matches!(difference_histogram_signal(&h, &h, &p), Err(DsaError::BalancedCounts { .. })));
        let h2 = Histogram::from_counts(vec![0.0, 1.0, 2.0], vec![1, 2], 0, 0).unwrap();
        let s = difference_histogram_signal(&h, &h2, &p).unwrap();
        // Δ = (2, 2) at centres 0.5, 1.5.
        assert_eq!(s.count_difference, 4);
        assert!((s.xbar - 1.0).abs() < 1e-15);
    }
}
