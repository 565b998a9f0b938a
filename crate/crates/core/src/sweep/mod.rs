//! Grid evaluation of closed-form (and optionally Monte Carlo) quantities,
//! serialized as CSV.
//!
//! CSV dialect: comma separated, `.` decimal, `#` metadata lines, one header
//! row. Cells that hit a structural singularity hold `DEGENERATE:<kind>`;
//! no `NaN`/`inf` text is ever written.

mod figures;
mod quantity;

pub use figures::{figure, write_figure, FigureTable, FIGURE_IDS};
pub use quantity::{Param, Quantity};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::analytic::{MeterConfig, PpsConfig};
use crate::error::{DsaError, Result};
use crate::estimators::estimate_dsa;
use crate::sampler::{sample_batch, Imperfection};
use quantity::{evaluate, Point};

/// Used when neither an axis nor `fixed` provides `sigma`.
pub const DEFAULT_SIGMA: f64 = 1.0;

pub const SENTINEL_PREFIX: &str = "DEGENERATE:";

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: Param, values: Vec<f64>) -> Self {
        Self { param, values }
    }

    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(param: Param, start: f64, stop: f64, count: usize) -> Self {
        Self::new(param, linspace(start, stop, count))
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let last = (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { stop } else { start + (stop - start) * (i as f64) / last })
                .collect()
        }
    }
}

/// `count` values spaced evenly in `log10` between `start` and `stop` (both > 0).
pub fn logspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    linspace(start.log10(), stop.log10(), count)
        .into_iter()
        .enumerate()
        .map(|(i, e)| match i {
            0 => start,
            _ if i == count - 1 => stop,
            _ => 10f64.powf(e),
        })
        .collect()
}

/// One closed-form quantity at a single configuration.
pub fn evaluate_quantity(
    q: Quantity,
    pps: &PpsConfig,
    meter: Option<&MeterConfig>,
    beta: Option<f64>,
    n: Option<u64>,
) -> Result<f64> {
    let pt = Point {
        pps: *pps,
        meter: meter.copied(),
        beta,
        n,
    };
    evaluate(q, &pt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOverlay {
    pub n: u64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub fixed: BTreeMap<Param, f64>,
    pub outputs: Vec<Quantity>,
    pub mc_overlay: Option<McOverlay>,
    /// Clip `|value|` at this bound and add a `<name>_clipped` flag column per output.
    pub clip: Option<f64>,
    /// Extra `#` metadata lines written before the generated ones.
    pub notes: Vec<String>,
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>, outputs: Vec<Quantity>) -> Self {
        Self {
            axes,
            fixed: BTreeMap::new(),
            outputs,
            mc_overlay: None,
            clip: None,
            notes: Vec::new(),
        }
    }

    pub fn fix(mut self, param: Param, value: f64) -> Self {
        self.fixed.insert(param, value);
        self
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = Some(clip);
        self
    }

    pub fn with_overlay(mut self, overlay: McOverlay) -> Self {
        self.mc_overlay = Some(overlay);
        self
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(DsaError::InvalidSweep("no outputs requested".into()));
        }
        let mut seen = BTreeMap::new();
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(DsaError::EmptyAxis(axis.param.to_string()));
            }
            if seen.insert(axis.param, ()).is_some() {
                return Err(DsaError::InvalidSweep(format!("parameter {} appears on two axes", axis.param)));
            }
            if self.fixed.contains_key(&axis.param) {
                return Err(DsaError::InvalidSweep(format!("parameter {} is both an axis and fixed", axis.param)));
            }
        }
        let provided = |p: Param| seen.contains_key(&p) || self.fixed.contains_key(&p);
        let mut needed = vec![Param::B, Param::Theta];
        for q in &self.outputs {
            needed.extend_from_slice(q.needs());
            if q.is_monte_carlo() && self.mc_overlay.is_none() {
                return Err(DsaError::InvalidSweep(format!("{q} needs an mc_overlay")));
            }
        }
        if let Some(missing) = needed.into_iter().find(|&p| !provided(p)) {
            return Err(DsaError::InvalidSweep(format!("missing parameter {missing}")));
        }
        if let Some(o) = &self.mc_overlay {
            if o.n == 0 || o.seeds.is_empty() {
                return Err(DsaError::InvalidSweep("mc_overlay needs N >= 1 and at least one seed".into()));
            }
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(DsaError::InvalidSweep("clip must be a finite positive bound".into()));
            }
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis values of a row; the last axis varies fastest.
    fn row_values(&self, mut row: usize) -> Vec<f64> {
        let mut vals = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let len = axis.values.len();
            vals[k] = axis.values[row % len];
            row /= len;
        }
        vals
    }

    fn point(&self, axis_values: &[f64]) -> Result<Point> {
        let mut params: BTreeMap<Param, f64> = self.fixed.clone();
        for (axis, &v) in self.axes.iter().zip(axis_values) {
            params.insert(axis.param, v);
        }
        let pps = PpsConfig::new(params[&Param::B], params[&Param::Theta])?;
        let sigma = params.get(&Param::Sigma).copied().unwrap_or(DEFAULT_SIGMA);
        let meter = params.get(&Param::G).map(|&g| MeterConfig::from_strength(g, sigma)).transpose()?;
        let n = params
            .get(&Param::N)
            .map(|&n| {
                if n >= 1.0 && n.fract() == 0.0 && n <= u64::MAX as f64 {
                    Ok(n as u64)
                } else {
                    Err(DsaError::invalid("N", format!("{n} is not a positive integer")))
                }
            })
            .transpose()?;
        Ok(Point {
            pps,
            meter,
            beta: params.get(&Param::BetaBias).copied(),
            n,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    /// A clip flag, 0 or 1.
    Flag(bool),
    Degenerate(&'static str),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Cell::Value(v) => Some(v),
            Cell::Flag(f) => Some(f64::from(u8::from(f))),
            Cell::Degenerate(_) => None,
        }
    }

    fn render(&self, out: &mut String) {
        match self {
            Cell::Value(v) => out.push_str(&format_number(*v)),
            Cell::Flag(f) => out.push(if *f { '1' } else { '0' }),
            Cell::Degenerate(kind) => {
                out.push_str(SENTINEL_PREFIX);
                out.push_str(kind);
            }
        }
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    debug_assert!(v.is_finite());
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub metadata: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl SweepTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in &self.metadata {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

fn describe_values(values: &[f64]) -> String {
    match values {
        [v] => format_number(*v),
        vs if vs.len() <= 8 => vs.iter().map(|&v| format_number(v)).collect::<Vec<_>>().join(" "),
        vs => format!("{} points from {} to {}", vs.len(), format_number(vs[0]), format_number(vs[vs.len() - 1])),
    }
}

/// Evaluates every requested quantity at every grid point.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let mut metadata = vec![format!("artifact: {}", crate::ARTIFACT_VERSION)];
    metadata.extend(spec.notes.iter().cloned());
    for axis in &spec.axes {
        metadata.push(format!("axis {}: {}", axis.param, describe_values(&axis.values)));
    }
    for (p, v) in &spec.fixed {
        metadata.push(format!("fixed {p}: {}", format_number(*v)));
    }
    if !spec.axes.iter().any(|a| a.param == Param::Sigma) && !spec.fixed.contains_key(&Param::Sigma) {
        metadata.push(format!("fixed sigma: {} (default)", format_number(DEFAULT_SIGMA)));
    }
    if let Some(c) = spec.clip {
        metadata.push(format!("clip: |value| <= {}", format_number(c)));
    }
    if let Some(o) = &spec.mc_overlay {
        let seeds: Vec<String> = o.seeds.iter().map(u64::to_string).collect();
        metadata.push(format!("mc_overlay: N = {}, seeds = {}", o.n, seeds.join(" ")));
    }

    let mut columns: Vec<String> = spec.axes.iter().map(|a| a.param.to_string()).collect();
    for q in &spec.outputs {
        columns.push(q.to_string());
        if spec.clip.is_some() {
            columns.push(format!("{q}_clipped"));
        }
    }

    let rows: Vec<Vec<Cell>> = (0..spec.row_count())
        .into_par_iter()
        .map(|row| evaluate_row(spec, row))
        .collect();
    Ok(SweepTable { metadata, columns, rows })
}

fn evaluate_row(spec: &SweepSpec, row: usize) -> Vec<Cell> {
    let axis_values = spec.row_values(row);
    let mut cells: Vec<Cell> = axis_values.iter().map(|&v| Cell::Value(v)).collect();
    let point = spec.point(&axis_values);
    let mc = match (&point, &spec.mc_overlay) {
        (Ok(pt), Some(o)) if spec.outputs.iter().any(Quantity::is_monte_carlo) => Some(monte_carlo(pt, o)),
        _ => None,
    };
    for &q in &spec.outputs {
        let result = match &point {
            Err(e) => Err(e.clone()),
            Ok(_) if q.is_monte_carlo() => match mc.as_ref().expect("overlay evaluated") {
                Ok(m) => Ok(match q {
                    Quantity::McXbar => m.xbar,
                    Quantity::McXbarSe => m.xbar_se,
                    _ => m.d_hat,
                }),
                Err(e) => Err(e.clone()),
            },
            Ok(pt) => evaluate(q, pt),
        };
        match result {
            Ok(v) if !v.is_finite() => {
                cells.push(Cell::Degenerate("non_finite"));
                if spec.clip.is_some() {
                    cells.push(Cell::Flag(false));
                }
            }
            Ok(v) => match spec.clip {
                Some(c) if v.abs() > c => {
                    cells.push(Cell::Value(c.copysign(v)));
                    cells.push(Cell::Flag(true));
                }
                Some(_) => {
                    cells.push(Cell::Value(v));
                    cells.push(Cell::Flag(false));
                }
                None => cells.push(Cell::Value(v)),
            },
            Err(e) => {
                cells.push(Cell::Degenerate(e.kind()));
                if spec.clip.is_some() {
                    cells.push(Cell::Flag(false));
                }
            }
        }
    }
    cells
}

struct McPoint {
    xbar: f64,
    xbar_se: f64,
    d_hat: f64,
}

/// Mean DSA estimate over the overlay seeds.
fn monte_carlo(pt: &Point, overlay: &McOverlay) -> Result<McPoint> {
    let meter = pt.meter.ok_or_else(|| DsaError::InvalidSweep("missing parameter g".into()))?;
    let mut sum_x = 0.0;
    let mut sum_var = 0.0;
    let mut sum_d = 0.0;
    for &seed in &overlay.seeds {
        let batch = sample_batch(&pt.pps, &meter, overlay.n, seed, &Imperfection::default(), false)?;
        let est = estimate_dsa(&batch, &pt.pps)?;
        sum_x += est.xbar;
        sum_var += est.variance;
        sum_d += est.d_hat;
    }
    let k = overlay.seeds.len() as f64;
    Ok(McPoint {
        xbar: sum_x / k,
        xbar_se: sum_var.sqrt() / k,
        d_hat: sum_d / k,
    })
}
