//! Run configuration, read from TOML.
//!
//! Keys mirror the symbols of the model: `B` or `alpha2`, `theta`, `d` or `g`,
//! `sigma`, `N`, `seed`, `M`, `histograms`, `offset`, `background`,
//! `background_window`, `beta_bias`, `out_dir`, `format`, `partitions`, and an
//! optional `[sweep]` table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analytic::{MeterConfig, PpsConfig};
use crate::error::{DsaError, Result};
use crate::estimators::{EstimatorMode, MIN_REPLICATES};
use crate::sampler::Imperfection;
use crate::sweep::{self, Axis, McOverlay, Param, Quantity, SweepSpec};

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_N: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_M: usize = 100;

/// Two parameterizations given together must agree to this (absolute) tolerance.
const CONSISTENCY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preselection {
    Imbalance(f64),
    Alpha2(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeterSpec {
    Displacement(f64),
    Strength(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preselection: Option<Preselection>,
    pub theta: Option<f64>,
    pub meter: Option<MeterSpec>,
    pub sigma: f64,
    pub n: u64,
    pub seed: u64,
    pub m: usize,
    pub histograms: bool,
    pub offset: f64,
    pub background: u64,
    pub background_window: Option<(f64, f64)>,
    pub beta_bias: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub format: String,
    pub partitions: usize,
    pub sweep: Option<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preselection: None,
            theta: None,
            meter: None,
            sigma: DEFAULT_SIGMA,
            n: DEFAULT_N,
            seed: DEFAULT_SEED,
            m: DEFAULT_M,
            histograms: false,
            offset: 0.0,
            background: 0,
            background_window: None,
            beta_bias: None,
            out_dir: None,
            format: "csv".into(),
            partitions: 1,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub outputs: Vec<String>,
    #[serde(default)]
    pub axes: Vec<AxisConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_overlay: Option<OverlayConfig>,
}

/// One axis: explicit `values`, or `linspace`/`logspace = [start, stop, count]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<(f64, f64, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logspace: Option<(f64, f64, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayConfig {
    #[serde(rename = "N")]
    pub n: u64,
    pub seeds: Vec<u64>,
}

/// The on-disk shape; every key optional so defaults and conflicts can be resolved by hand.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawConfig {
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(default, with = "seed_repr", skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    histograms: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    background: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    background_window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partitions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepConfig>,
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written as strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match seed {
            Some(v) if *v > i64::MAX as u64 => s.serialize_str(&v.to_string()),
            Some(v) => s.serialize_i64(*v as i64),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Big(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v)
                .map(Some)
                .map_err(|_| de::Error::custom(format!("seed {v} is negative"))),
            Repr::Big(v) => Ok(Some(v)),
            Repr::Text(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| de::Error::custom(format!("seed `{s}` is not an unsigned 64-bit integer"))),
        }
    }
}

fn conflict(a: &str, b: &str, detail: String) -> DsaError {
    DsaError::ConfigMismatch(format!("`{a}` and `{b}` disagree: {detail}"))
}

fn positive_count(value: u64, key: &str) -> Result<u64> {
    if value == 0 {
        return Err(DsaError::invalid(key, "must be at least 1"));
    }
    Ok(value)
}

fn finite_value(value: f64, key: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(DsaError::invalid(key, "must be finite"));
    }
    Ok(value)
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig> {
        let preselection = match (self.b, self.alpha2) {
            (Some(b), Some(a)) => {
                let implied = 2.0 * a - 1.0;
                if !((implied - b).abs() <= CONSISTENCY_TOL) {
                    return Err(conflict("B", "alpha2", format!("B = {b} but 2*alpha2 - 1 = {implied}")));
                }
                Some(Preselection::Imbalance(b))
            }
            (Some(b), None) => Some(Preselection::Imbalance(b)),
            (None, Some(a)) => Some(Preselection::Alpha2(a)),
            (None, None) => None,
        };
        let sigma = self.sigma.unwrap_or(DEFAULT_SIGMA);
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(DsaError::invalid("sigma", format!("{sigma} must be a finite positive number")));
        }
        let meter = match (self.d, self.g) {
            (Some(d), Some(g)) => {
                let implied = (d / (2.0 * sigma)).powi(2);
                if !((implied - g).abs() <= CONSISTENCY_TOL * g.abs().max(1.0)) {
                    return Err(conflict("d", "g", format!("g = {g} but (d/2sigma)^2 = {implied}")));
                }
                Some(MeterSpec::Displacement(d))
            }
            (Some(d), None) => Some(MeterSpec::Displacement(d)),
            (None, Some(g)) => Some(MeterSpec::Strength(g)),
            (None, None) => None,
        };
        let m = self.m.unwrap_or(DEFAULT_M as u64);
        if m < MIN_REPLICATES as u64 {
            return Err(DsaError::invalid("M", format!("need at least {MIN_REPLICATES} replicates, got {m}")));
        }
        let format = self.format.unwrap_or_else(|| "csv".into());
        if format != "csv" {
            return Err(DsaError::invalid("format", format!("unsupported format `{format}` (only csv)")));
        }
        if let Some((lo, hi)) = self.background_window {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DsaError::invalid("background_window", "needs finite lo < hi"));
            }
        }
        let config = RunConfig {
            preselection,
            theta: self.theta,
            meter,
            sigma,
            n: positive_count(self.n.unwrap_or(DEFAULT_N), "N")?,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            m: m as usize,
            histograms: self.histograms.unwrap_or(false),
            offset: finite_value(self.offset.unwrap_or(0.0), "offset")?,
            background: self.background.unwrap_or(0),
            background_window: self.background_window,
            beta_bias: self.beta_bias.map(|b| finite_value(b, "beta_bias")).transpose()?,
            out_dir: self.out_dir,
            format,
            partitions: positive_count(self.partitions.unwrap_or(1), "partitions")? as usize,
            sweep: self.sweep,
        };
        config.check_domains()?;
        Ok(config)
    }
}

impl From<&RunConfig> for RawConfig {
    fn from(c: &RunConfig) -> Self {
        let (b, alpha2) = match c.preselection {
            Some(Preselection::Imbalance(b)) => (Some(b), None),
            Some(Preselection::Alpha2(a)) => (None, Some(a)),
            None => (None, None),
        };
        let (d, g) = match c.meter {
            Some(MeterSpec::Displacement(d)) => (Some(d), None),
            Some(MeterSpec::Strength(g)) => (None, Some(g)),
            None => (None, None),
        };
        RawConfig {
            b,
            alpha2,
            theta: c.theta,
            d,
            g,
            sigma: Some(c.sigma),
            n: Some(c.n),
            seed: Some(c.seed),
            m: Some(c.m as u64),
            histograms: Some(c.histograms),
            offset: Some(c.offset),
            background: Some(c.background),
            background_window: c.background_window,
            beta_bias: c.beta_bias,
            out_dir: c.out_dir.clone(),
            format: Some(c.format.clone()),
            partitions: Some(c.partitions as u64),
            sweep: c.sweep.clone(),
        }
    }
}

impl RunConfig {
    /// Parses TOML text; errors carry the line and column or the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| DsaError::Parse(describe_toml_error(text, &e)))?;
        raw.resolve()
    }

    /// TOML text that parses back to `self`.
    pub fn render(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config is always representable in TOML")
    }

    /// The same configuration as a JSON value, for manifests.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(RawConfig::from(self)).expect("config is always representable in JSON")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let raw: RawConfig = serde_json::from_value(value).map_err(|e| DsaError::Parse(e.to_string()))?;
        raw.resolve()
    }

    /// Range checks on whatever model parameters are present.
    fn check_domains(&self) -> Result<()> {
        if let Some(p) = self.preselection {
            let theta = self.theta.unwrap_or(0.0);
            match p {
                Preselection::Imbalance(b) => PpsConfig::new(b, theta)?,
                Preselection::Alpha2(a) => PpsConfig::from_alpha2(a, theta)?,
            };
        }
        if let Some(theta) = self.theta {
            PpsConfig::new(0.0, theta)?;
        }
        if self.meter.is_some() {
            self.meter()?;
        }
        Ok(())
    }

    pub fn pps(&self) -> Result<PpsConfig> {
        let theta = self.theta.ok_or_else(|| missing("theta"))?;
        match self.preselection.ok_or_else(|| missing("B"))? {
            Preselection::Imbalance(b) => PpsConfig::new(b, theta),
            Preselection::Alpha2(a) => PpsConfig::from_alpha2(a, theta),
        }
    }

    pub fn meter(&self) -> Result<MeterConfig> {
        match self.meter.ok_or_else(|| missing("d"))? {
            MeterSpec::Displacement(d) => MeterConfig::new(d, self.sigma),
            MeterSpec::Strength(g) => MeterConfig::from_strength(g, self.sigma),
        }
    }

    pub fn model(&self) -> Result<(PpsConfig, MeterConfig)> {
        Ok((self.pps()?, self.meter()?))
    }

    pub fn imperfection(&self) -> Imperfection {
        Imperfection {
            offset: self.offset,
            background_per_channel: self.background,
            background_window: self.background_window,
        }
    }

    pub fn estimator_mode(&self) -> EstimatorMode {
        match self.beta_bias {
            Some(beta) => EstimatorMode::Biased(beta),
            None => EstimatorMode::Unbiased,
        }
    }

    /// The `[sweep]` table as a sweep spec. Parameters on neither an axis nor
    /// `fixed` are filled from the top-level keys when those are set.
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let sc = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        let outputs = sc.outputs.iter().map(|s| s.parse()).collect::<Result<Vec<Quantity>>>()?;
        let axes = sc.axes.iter().map(AxisConfig::to_axis).collect::<Result<Vec<Axis>>>()?;
        let mut spec = SweepSpec::new(axes, outputs);
        for (name, &value) in &sc.fixed {
            let p: Param = name.parse()?;
            if spec.fixed.insert(p, value).is_some() {
                return Err(DsaError::InvalidSweep(format!("parameter {p} fixed twice")));
            }
        }
        let mut inherited = vec![(Param::Sigma, Some(self.sigma)), (Param::N, Some(self.n as f64))];
        inherited.push((
            Param::B,
            self.preselection.map(|p| match p {
                Preselection::Imbalance(b) => b,
                Preselection::Alpha2(a) => 2.0 * a - 1.0,
            }),
        ));
        inherited.push((Param::Theta, self.theta));
        inherited.push((Param::G, self.meter.map(|_| self.meter().map(|m| m.g())).transpose()?));
        inherited.push((Param::BetaBias, self.beta_bias));
        for (p, v) in inherited {
            if let Some(v) = v {
                if !spec.axes.iter().any(|a| a.param == p) {
                    spec.fixed.entry(p).or_insert(v);
                }
            }
        }
        spec.clip = sc.clip;
        spec.mc_overlay = sc.mc_overlay.as_ref().map(|o| McOverlay {
            n: o.n,
            seeds: o.seeds.clone(),
        });
        Ok(spec)
    }
}

impl AxisConfig {
    fn to_axis(&self) -> Result<Axis> {
        let param: Param = self.param.parse()?;
        let values = match (&self.values, self.linspace, self.logspace) {
            (Some(v), None, None) => v.clone(),
            (None, Some((a, b, n)), None) => sweep::linspace(a, b, n as usize),
            (None, None, Some((a, b, n))) => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(DsaError::InvalidSweep(format!("logspace for {param} needs positive bounds")));
                }
                sweep::logspace(a, b, n as usize)
            }
            _ => {
                return Err(DsaError::InvalidSweep(format!(
                    "axis {param} needs exactly one of values, linspace, logspace"
                )))
            }
        };
        Ok(Axis::new(param, values))
    }
}

fn missing(key: &str) -> DsaError {
    DsaError::invalid(key, "missing key")
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim_end().to_string();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {msg}")
        }
        None => msg,
    }
}
