#![allow(dead_code)]

use dsa_core::analytic::{MeterConfig, MixtureDensity, PpsConfig};

/// ∫ f over [lo, hi], split into panels no wider than `panel` so the
/// double-exponential rule never has to resolve a peak much narrower than its interval.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panel: f64) -> f64 {
    let n = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let w = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let a = lo + w * i as f64;
            let b = if i + 1 == n { hi } else { a + w };
            quadrature::double_exponential::integrate(&f, a, b, 1e-14).integral
        })
        .sum()
}

/// Mass, mean and central moments 2 and 4 of a mixture density by quadrature
/// over [min centre − 10σ, max centre + 10σ].
pub struct Moments {
    pub mass: f64,
    pub mean: f64,
    pub var: f64,
    pub m4: f64,
}

pub fn moments(m: &MixtureDensity) -> Moments {
    let (c_lo, c_hi) = m.center_range().unwrap();
    let s = m.max_width();
    let (lo, hi) = (c_lo - 10.0 * s, c_hi + 10.0 * s);
    let q = |k: i32, mu: f64| integrate(|x| (x - mu).powi(k) * m.pdf(x), lo, hi, s);
    let mass = q(0, 0.0);
    let mean = q(1, 0.0) / mass;
    Moments {
        mass,
        mean,
        var: q(2, mean) / mass,
        m4: q(4, mean) / mass,
    }
}

pub fn pps(b: f64, theta: f64) -> PpsConfig {
    PpsConfig::new(b, theta).unwrap()
}

pub fn meter(d: f64) -> MeterConfig {
    MeterConfig::new(d, 1.0).unwrap()
}

pub fn strength(g: f64) -> MeterConfig {
    MeterConfig::from_strength(g, 1.0).unwrap()
}

/// Deterministic quasi-random points in [0, 1)^k (additive recurrence).
pub fn lattice(count: usize, k: usize) -> Vec<Vec<f64>> {
    let alphas: Vec<f64> = [0.7548776662466927, 0.5698402909980532, 0.6180339887498949]
        .iter()
        .take(k)
        .copied()
        .collect();
    (1..=count)
        .map(|i| alphas.iter().map(|a| (0.5 + a * i as f64).fract()).collect())
        .collect()
}
