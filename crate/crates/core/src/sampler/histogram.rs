use serde::{Deserialize, Serialize};

use crate::analytic::{MeterConfig, MixtureDensity, PpsConfig};
use crate::error::{DsaError, Result};

/// Fixed-bin count histogram with explicit under/overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
}

impl Histogram {
    /// Empty histogram over strictly increasing, finite `edges` (at least two).
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(DsaError::invalid("edges", "need at least two bin edges"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DsaError::invalid("edges", "bin edges must be finite and strictly increasing"));
        }
        let n = edges.len() - 1;
        Ok(Self {
            edges,
            counts: vec![0; n],
            underflow: 0,
            overflow: 0,
        })
    }

    /// Histogram with given edges and counts (e.g. read from a file).
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>, underflow: u64, overflow: u64) -> Result<Self> {
        let mut h = Self::new(edges)?;
        if counts.len() != h.counts.len() {
            return Err(DsaError::invalid(
                "counts",
                format!("{} counts for {} bins", counts.len(), h.counts.len()),
            ));
        }
        h.counts = counts;
        h.underflow = underflow;
        h.overflow = overflow;
        Ok(h)
    }

    /// `nbins` equal bins spanning `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, nbins: usize) -> Result<Self> {
        if nbins == 0 || !(lo < hi) {
            return Err(DsaError::invalid("edges", "uniform histogram needs lo < hi and nbins > 0"));
        }
        let width = (hi - lo) / nbins as f64;
        let mut edges: Vec<f64> = (0..nbins).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        Self::new(edges)
    }

    /// Default layout for a meter: bin width `σ/20` over `±(|d| + 6σ)`.
    pub fn default_for(meter: &MeterConfig) -> Result<Self> {
        let width = meter.sigma() / 20.0;
        let (lo, hi) = default_range(meter);
        let nbins = ((hi - lo) / width).round() as usize;
        Self::uniform(lo, hi, nbins.max(1))
    }

    pub fn edges(&self) -> Vec<f64> {
        self.edges.clone()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn underflow(&self) -> u64 {
        self.underflow
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Total count including under/overflow.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn in_range_total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fill(&mut self, x: f64) {
        let (lo, hi) = self.range();
        if x < lo {
            self.underflow += 1;
        } else if x >= hi || x.is_nan() {
            self.overflow += 1;
        } else {
            // First edge strictly greater than x, minus one.
            let idx = self.edges.partition_point(|&e| e <= x) - 1;
            self.counts[idx] += 1;
        }
    }

    pub fn same_layout(&self, other: &Histogram) -> bool {
        self.edges == other.edges
    }

    /// Bin-wise sum of two histograms with identical edges.
    pub fn merged(&self, other: &Histogram) -> Result<Histogram> {
        if !self.same_layout(other) {
            return Err(DsaError::ConfigMismatch("histogram bin edges differ".into()));
        }
        Ok(Histogram {
            edges: self.edges.clone(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            underflow: self.underflow + other.underflow,
            overflow: self.overflow + other.overflow,
        })
    }

    /// Signed bin-wise difference `self − other`, including under/overflow at the ends.
    pub fn difference(&self, other: &Histogram) -> Result<Vec<i64>> {
        if !self.same_layout(other) {
            return Err(DsaError::ConfigMismatch("histogram bin edges differ".into()));
        }
        let mut out = Vec::with_capacity(self.counts.len() + 2);
        out.push(self.underflow as i64 - other.underflow as i64);
        out.extend(self.counts.iter().zip(&other.counts).map(|(&a, &b)| a as i64 - b as i64));
        out.push(self.overflow as i64 - other.overflow as i64);
        Ok(out)
    }

    pub fn cleared(&self) -> Histogram {
        Histogram {
            edges: self.edges.clone(),
            counts: vec![0; self.counts.len()],
            underflow: 0,
            overflow: 0,
        }
    }
}

/// `[−(|d| + 6σ), |d| + 6σ]`.
pub fn default_range(meter: &MeterConfig) -> (f64, f64) {
    let half = meter.d().abs() + 6.0 * meter.sigma();
    (-half, half)
}

/// Real-valued PSA/PSR histograms recovered from an unsplit record histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHistograms {
    pub edges: Vec<f64>,
    pub psa: Vec<f64>,
    pub psr: Vec<f64>,
    /// Bins where both densities underflowed and the count was split 50/50.
    pub flagged_bins: Vec<usize>,
    /// Under/overflow records; they have no bin centre and are left out of the split.
    pub dropped: u64,
}

/// Post-selection applied as post-processing of an unsplit record histogram `n(x)`.
///
/// Each bin is shared in proportion to `P̃1(x)` and `P̃2(x)` at its centre, so
/// `n1(x) + n2(x) = n(x)` per bin. The larger share is computed first and the
/// other as the remainder, which makes the bin sum exact in floating point.
pub fn postprocess_split(total: &Histogram, pps: &PpsConfig, meter: &MeterConfig) -> SplitHistograms {
    let psa_density = MixtureDensity::psa(pps, meter);
    let psr_density = MixtureDensity::psr(pps, meter);
    let mut psa = Vec::with_capacity(total.nbins());
    let mut psr = Vec::with_capacity(total.nbins());
    let mut flagged_bins = Vec::new();
    for (k, (&n, x)) in total.counts().iter().zip(total.centers()).enumerate() {
        let n = n as f64;
        let p1 = psa_density.pdf(x);
        let p2 = psr_density.pdf(x);
        let share1 = if p1 + p2 > 0.0 {
            p1 / (p1 + p2)
        } else {
            if n > 0.0 {
                flagged_bins.push(k);
            }
            0.5
        };
        let (n1, n2) = if share1 >= 0.5 {
            let big = n * share1;
            (big, n - big)
        } else {
            let big = n * (1.0 - share1);
            (n - big, big)
        };
        psa.push(n1);
        psr.push(n2);
    }
    SplitHistograms {
        edges: total.edges(),
        psa,
        psr,
        flagged_bins,
        dropped: total.underflow() + total.overflow(),
    }
}
