use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use super::{linspace, logspace, run_sweep, Axis, Param, Quantity, SweepSpec, SweepTable};
use crate::error::{DsaError, Result};

pub const FIGURE_IDS: [u8; 5] = [1, 2, 3, 4, 5];

/// Points per 1-D axis and per surface side.
const LINE_POINTS: usize = 201;
const SURFACE_POINTS: usize = 101;
const G_SURFACE: f64 = 0.1;
const CLIP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureTable {
    /// File stem, e.g. `fig3a_snr_vs_b_theta`.
    pub name: String,
    pub table: SweepTable,
}

fn theta_axis(points: usize) -> Axis {
    Axis::new(Param::Theta, linspace(0.0, PI, points))
}

fn b_surface_axis() -> Axis {
    Axis::new(Param::B, linspace(0.0, 1.0, SURFACE_POINTS))
}

fn spec_for(id: u8) -> Result<Vec<(&'static str, SweepSpec)>> {
    let fig1_b = Axis::new(Param::B, vec![0.2, 0.5, 0.8]);
    let label = |s: &str| format!("figure {id}: {s}");
    Ok(match id {
        1 => vec![
            (
                "fig1a_ratio_factors",
                SweepSpec::new(vec![fig1_b.clone(), theta_axis(LINE_POINTS)], vec![Quantity::Beta1, Quantity::Beta2])
                    .note(label("ratio factors vs theta")),
            ),
            (
                "fig1b_means",
                SweepSpec::new(vec![fig1_b, theta_axis(LINE_POINTS)], vec![Quantity::XFOverD, Quantity::XFbarOverD])
                    .note(label("PSA/PSR pointer means in units of d")),
            ),
        ],
        2 => vec![(
            "fig2_subensemble_variances",
            SweepSpec::new(
                vec![b_surface_axis(), theta_axis(SURFACE_POINTS)],
                vec![Quantity::Var1OverD2, Quantity::Var2OverD2],
            )
            .fix(Param::G, G_SURFACE)
            .note(label("sub-ensemble variances in units of d^2 (sigma^2/d^2 = 2.5)")),
        )],
        3 => vec![
            (
                "fig3a_snr_vs_b_theta",
                SweepSpec::new(vec![b_surface_axis(), theta_axis(SURFACE_POINTS)], vec![Quantity::ReducedSnr])
                    .fix(Param::G, G_SURFACE)
                    .note(label("reduced SNR over (B, theta)")),
            ),
            (
                "fig3b_snr_vs_g_theta",
                SweepSpec::new(
                    vec![Axis::new(Param::G, logspace(1e-3, 10.0, SURFACE_POINTS)), theta_axis(SURFACE_POINTS)],
                    vec![Quantity::ReducedSnr],
                )
                .fix(Param::B, 0.2)
                .note(label("reduced SNR over (g, theta), g log-spaced")),
            ),
        ],
        4 => vec![(
            "fig4_bdsa_signal",
            SweepSpec::new(vec![b_surface_axis(), theta_axis(SURFACE_POINTS)], vec![Quantity::BdsaAbsXbarOverD])
                .fix(Param::BetaBias, 2.0)
                .fix(Param::G, G_SURFACE)
                .with_clip(CLIP)
                .note(label("biased signal |xbar_beta|/d")),
        )],
        5 => [("fig5a_bdsa_snr_beta_0.4", 0.4), ("fig5b_bdsa_snr_beta_2", 2.0)]
            .into_iter()
            .map(|(name, beta)| {
                (
                    name,
                    SweepSpec::new(vec![b_surface_axis(), theta_axis(SURFACE_POINTS)], vec![Quantity::BdsaReducedSnr])
                        .fix(Param::BetaBias, beta)
                        .fix(Param::G, G_SURFACE)
                        .with_clip(CLIP)
                        .note(label("reduced biased SNR")),
                )
            })
            .collect(),
        _ => return Err(DsaError::invalid("figure", format!("{id} is not one of 1..5"))),
    })
}

/// Tables behind figure `id` (1 to 5).
pub fn figure(id: u8) -> Result<Vec<FigureTable>> {
    spec_for(id)?
        .into_iter()
        .map(|(name, spec)| {
            Ok(FigureTable {
                name: name.to_string(),
                table: run_sweep(&spec)?,
            })
        })
        .collect()
}

/// Writes `<name>.csv` for each table of figure `id` into `dir`; returns the paths.
pub fn write_figure(id: u8, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = figure(id)?;
    fs::create_dir_all(dir).map_err(|e| DsaError::Io(format!("{}: {e}", dir.display())))?;
    tables
        .into_iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.table.to_csv()).map_err(|e| DsaError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}
