//! Seedable Monte Carlo model of the classical Stern-Gerlach measurement.
//!
//! Each particle is generated from three draws, in this order, on a
//! `ChaCha8Rng` seeded with `seed_from_u64(seed)` (stream 0):
//!
//! 1. spin: up if `u < α²`, with `u` uniform on `[0, 1)`;
//! 2. position: `x = ±d + σ·z + ε` with `z` standard normal;
//! 3. post-selection: accepted if `u' < a²` (up) or `u' < b²` (down).
//!
//! Background records come from the same seed on stream 1, so injecting them
//! never perturbs the particle stream. Partitioned runs use
//! `seed = base_seed + partition_index` (wrapping) and merge in index order.

mod histogram;

pub use histogram::{default_range, postprocess_split, Histogram, SplitHistograms};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{MeterConfig, PpsConfig};
use crate::error::{DsaError, Result};

const BACKGROUND_STREAM: u64 = 1;

/// Running sums of one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub count: u64,
    pub sum: f64,
    pub sumsq: f64,
}

impl ChannelStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merged(&self, other: &ChannelStats) -> ChannelStats {
        ChannelStats {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sumsq: self.sumsq + other.sumsq,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Unbiased sample variance, `None` below two records.
    pub fn sample_variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        Some(((self.sumsq - n * mean * mean) / (n - 1.0)).max(0.0))
    }
}

/// Injected systematic imperfections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Imperfection {
    /// Common displacement `ε` added to every particle record.
    pub offset: f64,
    /// Uniform background records added identically to each channel.
    pub background_per_channel: u64,
    /// Window for the background; `None` means the default histogram range.
    pub background_window: Option<(f64, f64)>,
}

impl Imperfection {
    pub fn offset(offset: f64) -> Self {
        Self {
            offset,
            ..Self::default()
        }
    }

    pub fn background(per_channel: u64) -> Self {
        Self {
            background_per_channel: per_channel,
            ..Self::default()
        }
    }

    fn resolved(&self, meter: &MeterConfig) -> Result<Self> {
        if !self.offset.is_finite() {
            return Err(DsaError::invalid("offset", "must be finite"));
        }
        let window = self.background_window.unwrap_or_else(|| default_range(meter));
        if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
            return Err(DsaError::invalid("background_window", "needs finite lo < hi"));
        }
        Ok(Self {
            background_window: Some(window),
            ..*self
        })
    }
}

/// Sufficient statistics of one Monte Carlo run (or a merge of several).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub pps: PpsConfig,
    pub meter: MeterConfig,
    /// Offset and background window as used; `background_per_channel` counts
    /// the records actually injected into each channel.
    pub imperfection: Imperfection,
    /// Seeds of every run merged into this batch, ascending.
    pub seeds: Vec<u64>,
    /// Particles generated (background excluded).
    pub n_total: u64,
    pub psa: ChannelStats,
    pub psr: ChannelStats,
    pub hist_psa: Option<Histogram>,
    pub hist_psr: Option<Histogram>,
}

impl SampleBatch {
    /// A batch with no records, the identity of [`merge_batches`].
    pub fn empty(pps: &PpsConfig, meter: &MeterConfig, imperfection: &Imperfection, histograms: bool) -> Result<Self> {
        let imperfection = Imperfection {
            background_per_channel: 0,
            ..imperfection.resolved(meter)?
        };
        let hist = if histograms {
            Some(Histogram::default_for(meter)?)
        } else {
            None
        };
        Ok(Self {
            pps: *pps,
            meter: *meter,
            imperfection,
            seeds: Vec::new(),
            n_total: 0,
            psa: ChannelStats::default(),
            psr: ChannelStats::default(),
            hist_psa: hist.clone(),
            hist_psr: hist,
        })
    }

    pub fn n1(&self) -> u64 {
        self.psa.count
    }

    pub fn n2(&self) -> u64 {
        self.psr.count
    }

    /// The seed of a single-run batch.
    pub fn seed(&self) -> Option<u64> {
        match self.seeds.as_slice() {
            [s] => Some(*s),
            _ => None,
        }
    }

    /// Unsplit record histogram `n(x) = n1(x) + n2(x)`, if histograms were kept.
    pub fn total_histogram(&self) -> Option<Histogram> {
        match (&self.hist_psa, &self.hist_psr) {
            (Some(a), Some(b)) => a.merged(b).ok(),
            _ => None,
        }
    }
}

/// Generates `n` particles for one configuration and seed.
pub fn sample_batch(
    pps: &PpsConfig,
    meter: &MeterConfig,
    n: u64,
    seed: u64,
    imperfection: &Imperfection,
    histograms: bool,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(DsaError::invalid("N", "particle count must be at least 1"));
    }
    let mut batch = SampleBatch::empty(pps, meter, imperfection, histograms)?;
    batch.seeds.push(seed);
    batch.n_total = n;

    let (alpha2, a2, b2) = (pps.alpha2(), pps.a2(), pps.b2());
    let (d, sigma, offset) = (meter.d(), meter.sigma(), imperfection.offset);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let up = rng.random::<f64>() < alpha2;
        let z: f64 = rng.sample(StandardNormal);
        let x = if up { d } else { -d } + sigma * z + offset;
        let accepted = rng.random::<f64>() < if up { a2 } else { b2 };
        if accepted {
            batch.psa.push(x);
            if let Some(h) = batch.hist_psa.as_mut() {
                h.fill(x);
            }
        } else {
            batch.psr.push(x);
            if let Some(h) = batch.hist_psr.as_mut() {
                h.fill(x);
            }
        }
    }

    let count = imperfection.background_per_channel;
    if count > 0 {
        let (lo, hi) = batch.imperfection.background_window.expect("resolved window");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(BACKGROUND_STREAM);
        for _ in 0..count {
            let x = lo + (hi - lo) * rng.random::<f64>();
            batch.psa.push(x);
            batch.psr.push(x);
            for h in [batch.hist_psa.as_mut(), batch.hist_psr.as_mut()].into_iter().flatten() {
                h.fill(x);
            }
        }
        batch.imperfection.background_per_channel = count;
    }
    Ok(batch)
}

/// Component-wise sum of two batches drawn with the same settings and distinct seeds.
pub fn merge_batches(a: &SampleBatch, b: &SampleBatch) -> Result<SampleBatch> {
    if a.pps != b.pps || a.meter != b.meter {
        return Err(DsaError::ConfigMismatch("pre/post-selection or meter settings differ".into()));
    }
    if a.imperfection.offset != b.imperfection.offset
        || a.imperfection.background_window != b.imperfection.background_window
    {
        return Err(DsaError::ConfigMismatch("imperfection settings differ".into()));
    }
    if let Some(s) = a.seeds.iter().find(|s| b.seeds.contains(s)) {
        return Err(DsaError::SeedReuse(*s));
    }
    let merge_hist = |x: &Option<Histogram>, y: &Option<Histogram>| -> Result<Option<Histogram>> {
        match (x, y) {
            (None, None) => Ok(None),
            (Some(x), Some(y)) => Ok(Some(x.merged(y)?)),
            _ => Err(DsaError::ConfigMismatch("one batch has histograms, the other does not".into())),
        }
    };
    let mut seeds: Vec<u64> = a.seeds.iter().chain(&b.seeds).copied().collect();
    seeds.sort_unstable();
    Ok(SampleBatch {
        pps: a.pps,
        meter: a.meter,
        imperfection: Imperfection {
            background_per_channel: a.imperfection.background_per_channel + b.imperfection.background_per_channel,
            ..a.imperfection
        },
        seeds,
        n_total: a.n_total + b.n_total,
        psa: a.psa.merged(&b.psa),
        psr: a.psr.merged(&b.psr),
        hist_psa: merge_hist(&a.hist_psa, &b.hist_psa)?,
        hist_psr: merge_hist(&a.hist_psr, &b.hist_psr)?,
    })
}

/// Splits `total` into `parts` near-equal pieces, larger pieces first.
fn split_count(total: u64, parts: u64, index: u64) -> u64 {
    total / parts + u64::from(index < total % parts)
}

/// Runs `partitions` independent batches concurrently and merges them in index order.
///
/// Partition `i` draws `N/partitions` particles (remainder to the first ones)
/// with seed `base_seed + i`; background records are split the same way.
/// The result depends only on the arguments, not on thread scheduling.
pub fn sample_partitioned(
    pps: &PpsConfig,
    meter: &MeterConfig,
    n: u64,
    base_seed: u64,
    partitions: u64,
    imperfection: &Imperfection,
    histograms: bool,
) -> Result<SampleBatch> {
    if partitions == 0 || partitions > n {
        return Err(DsaError::invalid("partitions", format!("need 1 <= partitions <= N, got {partitions}")));
    }
    let parts: Vec<Result<SampleBatch>> = (0..partitions)
        .into_par_iter()
        .map(|i| {
            let imp = Imperfection {
                background_per_channel: split_count(imperfection.background_per_channel, partitions, i),
                ..*imperfection
            };
            sample_batch(pps, meter, split_count(n, partitions, i), base_seed.wrapping_add(i), &imp, histograms)
        })
        .collect();
    let mut acc = SampleBatch::empty(pps, meter, imperfection, histograms)?;
    for part in parts {
        acc = merge_batches(&acc, &part?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PpsConfig, MeterConfig) {
        (PpsConfig::new(0.2, 0.5).unwrap(), MeterConfig::new(0.1, 1.0).unwrap())
    }

    #[test]
    fn deterministic() {
        let (p, m) = setup();
        let a = sample_batch(&p, &m, 10_000, 7, &Imperfection::default(), true).unwrap();
        let b = sample_batch(&p, &m, 10_000, 7, &Imperfection::default(), true).unwrap();
        assert_eq!(a, b);
        let c = sample_batch(&p, &m, 10_000, 8, &Imperfection::default(), true).unwrap();
        assert_ne!(a.psa, c.psa);
    }

    #[test]
    fn counts_add_up() {
        let (p, m) = setup();
        let a = sample_batch(&p, &m, 5_000, 1, &Imperfection::default(), true).unwrap();
        assert_eq!(a.n1() + a.n2(), 5_000);
        assert_eq!(a.hist_psa.as_ref().unwrap().total(), a.n1());
        assert_eq!(a.hist_psr.as_ref().unwrap().total(), a.n2());
        let b = sample_batch(&p, &m, 5_000, 1, &Imperfection::background(300), true).unwrap();
        assert_eq!(b.n1() + b.n2(), 5_000 + 2 * 300);
        assert_eq!(b.hist_psa.as_ref().unwrap().total(), b.n1());
    }

    #[test]
    fn pure_up_channel_accepts_everything() {
        let p = PpsConfig::from_alpha2(1.0, 0.0).unwrap();
        let m = MeterConfig::new(0.3, 1.0).unwrap();
        let b = sample_batch(&p, &m, 100_000, 3, &Imperfection::default(), false).unwrap();
        assert_eq!(b.n1(), 100_000);
        let mean = b.psa.mean().unwrap();
        assert!((mean - 0.3).abs() < 5.0 * (1.0 / 100_000f64).sqrt());
    }

    #[test]
    fn rejects_zero_particles() {
        let (p, m) = setup();
        assert!(sample_batch(&p, &m, 0, 1, &Imperfection::default(), false).is_err());
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let (p, m) = setup();
        let imp = Imperfection::default();
        let a = sample_batch(&p, &m, 3_000, 1, &imp, true).unwrap();
        let b = sample_batch(&p, &m, 4_000, 2, &imp, true).unwrap();
        let e = SampleBatch::empty(&p, &m, &imp, true).unwrap();
        assert_eq!(merge_batches(&a, &e).unwrap(), a);
        assert_eq!(merge_batches(&a, &b).unwrap(), merge_batches(&b, &a).unwrap());
    }

    #[test]
    fn merge_rejects_mismatch() {
        let (p, m) = setup();
        let a = sample_batch(&p, &m, 100, 1, &Imperfection::default(), false).unwrap();
        let b = sample_batch(&p, &m, 100, 1, &Imperfection::default(), false).unwrap();
        assert_eq!(merge_batches(&a, &b), Err(DsaError::SeedReuse(1)));
        let c = sample_batch(&PpsConfig::new(0.3, 0.5).unwrap(), &m, 100, 2, &Imperfection::default(), false).unwrap();
        assert!(matches!(merge_batches(&a, &c), Err(DsaError::ConfigMismatch(_))));
        let d = sample_batch(&p, &m, 100, 3, &Imperfection::offset(0.1), false).unwrap();
        assert!(matches!(merge_batches(&a, &d), Err(DsaError::ConfigMismatch(_))));
        let e = sample_batch(&p, &m, 100, 4, &Imperfection::default(), true).unwrap();
        assert!(matches!(merge_batches(&a, &e), Err(DsaError::ConfigMismatch(_))));
    }

    #[test]
    fn partitioned_is_reproducible() {
        let (p, m) = setup();
        let imp = Imperfection::background(11);
        let a = sample_partitioned(&p, &m, 10_001, 40, 4, &imp, true).unwrap();
        let b = sample_partitioned(&p, &m, 10_001, 40, 4, &imp, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seeds, vec![40, 41, 42, 43]);
        assert_eq!(a.n_total, 10_001);
        assert_eq!(a.imperfection.background_per_channel, 11);
        let manual = (0..4u64).fold(SampleBatch::empty(&p, &m, &imp, true).unwrap(), |acc, i| {
            let part = Imperfection { background_per_channel: split_count(11, 4, i), ..imp };
            let b = sample_batch(&p, &m, split_count(10_001, 4, i), 40 + i, &part, true).unwrap();
            merge_batches(&acc, &b).unwrap()
        });
        assert_eq!(a, manual);
    }

    #[test]
    fn background_leaves_difference_histogram_unchanged() {
        let (p, m) = setup();
        let clean = sample_batch(&p, &m, 20_000, 5, &Imperfection::default(), true).unwrap();
        let noisy = sample_batch(&p, &m, 20_000, 5, &Imperfection::background(5_000), true).unwrap();
        let dc = clean.hist_psa.as_ref().unwrap().difference(clean.hist_psr.as_ref().unwrap()).unwrap();
        let dn = noisy.hist_psa.as_ref().unwrap().difference(noisy.hist_psr.as_ref().unwrap()).unwrap();
        assert_eq!(dc, dn);
        assert_ne!(clean.hist_psa, noisy.hist_psa);
    }

    #[test]
    fn sample_variance_from_sums() {
        let mut s = ChannelStats::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            s.push(x);
        }
        assert_eq!(s.mean(), Some(2.5));
        assert!((s.sample_variance().unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(ChannelStats::default().sample_variance(), None);
    }
}
