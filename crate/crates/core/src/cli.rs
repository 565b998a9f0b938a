//! The `dsa` command line.
//!
//! Exit status: 0 success, 1 `reproduce` found differing outputs,
//! 2 configuration or usage error, 3 degeneracy of the method, 4 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analytic;
use crate::error::{DsaError, ErrorClass, Result};
use crate::estimators::{
    difference_histogram_signal, estimate_batch, estimate_from_split, replicate_study, DsaEstimate, EstimatorMode,
};
use crate::io::{self, FileDigest, RunConfig, RunManifest, MANIFEST_FILE};
use crate::sampler::{postprocess_split, sample_partitioned, SampleBatch};
use crate::sweep::{self, evaluate_quantity, format_number, run_sweep, Quantity, FIGURE_IDS, SENTINEL_PREFIX};

/// `println!` that ignores a closed stdout (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERACY: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DSA_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dsa-out";

#[derive(Debug, Parser)]
#[command(name = "dsa", version, about = "Difference-signal amplification: closed forms, simulation, estimation, figure data")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory [default: config `out_dir`, then $DSA_OUT_DIR, then ./dsa-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Output table format.
    #[arg(long, global = true, value_parser = ["csv"])]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-form quantities for one configuration.
    Analytic,
    /// Monte Carlo run: writes the batch and its estimate.
    Simulate,
    /// Estimate from a saved batch or from an unsplit record histogram.
    Estimate {
        /// `batch.json` written by `simulate`
        #[arg(long, value_name = "PATH", conflicts_with = "histogram", required_unless_present = "histogram")]
        batch: Option<PathBuf>,
        /// CSV with `lo,hi,count` rows; split into PSA/PSR by post-processing.
        #[arg(long, value_name = "PATH")]
        histogram: Option<PathBuf>,
    },
    /// M independent runs compared with the analytic mean and variance.
    Replicate,
    /// Grid evaluation described by the `[sweep]` table of the configuration.
    Sweep,
    /// Data behind figure 1 to 5, or `all`.
    Figure {
        #[arg(value_parser = ["1", "2", "3", "4", "5", "all"])]
        id: String,
    },
    /// Re-runs the command recorded in a manifest and compares output digests.
    Reproduce {
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Simulate => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Replicate => "replicate",
            Command::Sweep => "sweep",
            Command::Figure { .. } => "figure",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

pub fn exit_code(e: &DsaError) -> i32 {
    match e.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Degeneracy => EXIT_DEGENERACY,
        ErrorClass::Io => EXIT_IO,
    }
}

/// Runs one command; `argv` includes the program name. Returns the exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// What a command produced, relative to the output directory.
#[derive(Default)]
struct Produced {
    files: Vec<String>,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    produced: Produced,
}

impl Context {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        io::write_text(&self.out.join(name), text)?;
        self.produced.files.push(name.to_string());
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let digest = FileDigest::of(path, path.display().to_string())?;
        self.produced.inputs.push(digest);
        Ok(())
    }
}

fn execute(cli: Cli, args: Vec<String>) -> Result<i32> {
    if let Command::Reproduce { manifest } = &cli.command {
        return reproduce(manifest, cli.out.as_deref());
    }
    let mut inputs = Vec::new();
    let mut config = match &cli.config {
        Some(path) => {
            let c = RunConfig::parse(&io::read_text(path)?)?;
            inputs.push(FileDigest::of(path, path.display().to_string())?);
            c
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(format) = &cli.format {
        config.format = format.clone();
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&out).map_err(|e| io::io_error(&out, e))?;

    let mut manifest = RunManifest::new(cli.command.name(), args, &config);
    let mut ctx = Context {
        config,
        out,
        produced: Produced {
            inputs,
            ..Produced::default()
        },
    };
    let result = match &cli.command {
        Command::Analytic => analytic_cmd(&mut ctx),
        Command::Simulate => simulate_cmd(&mut ctx),
        Command::Estimate { batch, histogram } => estimate_cmd(&mut ctx, batch.as_deref(), histogram.as_deref()),
        Command::Replicate => replicate_cmd(&mut ctx),
        Command::Sweep => sweep_cmd(&mut ctx),
        Command::Figure { id } => figure_cmd(&mut ctx, id),
        Command::Reproduce { .. } => unreachable!("handled above"),
    };
    // The manifest records whatever was written, also when the command failed part way.
    manifest.seeds = ctx.produced.seeds.clone();
    manifest.inputs = ctx.produced.inputs.clone();
    manifest.outputs = ctx
        .produced
        .files
        .iter()
        .map(|f| FileDigest::of(&ctx.out.join(f), f.clone()))
        .collect::<Result<_>>()?;
    manifest.write(&ctx.out)?;
    result?;
    for f in &ctx.produced.files {
        say!("wrote {}", ctx.out.join(f).display());
    }
    say!("wrote {}", ctx.out.join(MANIFEST_FILE).display());
    Ok(EXIT_OK)
}

fn header(lines: &mut String, title: &str) {
    lines.push_str(&format!("# artifact: {}\n# {title}\n", crate::ARTIFACT_VERSION));
}

fn config_lines(out: &mut String, config: &RunConfig) {
    for line in config.render().lines() {
        if !line.trim().is_empty() && !line.starts_with('[') {
            out.push_str(&format!("# config: {line}\n"));
        }
    }
}

fn value_text(v: Result<f64>) -> String {
    match v {
        Ok(v) if v.is_finite() => format_number(v),
        Ok(_) => format!("{SENTINEL_PREFIX}non_finite"),
        Err(e) => format!("{SENTINEL_PREFIX}{}", e.kind()),
    }
}

fn push_row(out: &mut String, name: &str, value: String) {
    out.push_str(name);
    out.push(',');
    out.push_str(&value);
    out.push('\n');
}

fn analytic_cmd(ctx: &mut Context) -> Result<()> {
    let (pps, meter) = ctx.config.model()?;
    let beta = ctx.config.beta_bias;
    let n = Some(ctx.config.n);
    let mut quantities = vec![
        Quantity::PF,
        Quantity::PFbar,
        Quantity::Eta,
        Quantity::Beta1,
        Quantity::Beta2,
        Quantity::XF,
        Quantity::XFbar,
        Quantity::Xbar,
        Quantity::Var1,
        Quantity::Var2,
        Quantity::DsaVariance,
        Quantity::Snr,
        Quantity::ReducedSnr,
        Quantity::SnrRatioRoute,
        Quantity::WeakValueClassical,
    ];
    if beta.is_some() {
        quantities.extend([
            Quantity::BdsaXbar,
            Quantity::BdsaXbarApprox,
            Quantity::BdsaVariance,
            Quantity::BdsaVarianceApprox,
            Quantity::BdsaSnr,
            Quantity::BdsaSnrExact,
            Quantity::BdsaReducedSnr,
        ]);
    }
    let mut text = String::new();
    header(&mut text, "closed-form quantities");
    config_lines(&mut text, &ctx.config);
    text.push_str("quantity,value\n");
    for q in quantities {
        let v = value_text(evaluate_quantity(q, &pps, Some(&meter), beta, n));
        say!("{:<24} {v}", q.name());
        push_row(&mut text, q.name(), v);
    }
    let conventional = value_text(analytic::conventional_snr(&meter, ctx.config.n));
    say!("{:<24} {conventional}", "conventional_snr");
    push_row(&mut text, "conventional_snr", conventional);
    ctx.write("analytic.csv", &text)
}

fn estimate_rows(out: &mut String, est: &DsaEstimate) {
    push_row(out, "mode", est.mode.to_string());
    for (name, v) in [
        ("xbar", est.xbar),
        ("variance", est.variance),
        ("snr", est.snr),
        ("d_hat", est.d_hat),
        ("n1", est.n1),
        ("n2", est.n2),
    ] {
        push_row(out, name, format_number(v));
    }
    for (name, flag) in [
        ("flag_background_injected", est.flags.background_injected),
        ("flag_near_singular", est.flags.near_singular),
        ("flag_from_histogram", est.flags.from_histogram),
    ] {
        push_row(out, name, u8::from(flag).to_string());
    }
}

fn expected_rows(out: &mut String, config: &RunConfig, batch_pps: &analytic::PpsConfig, meter: &analytic::MeterConfig, n: u64) {
    let (signal, variance) = match config.estimator_mode() {
        EstimatorMode::Unbiased => (
            evaluate_quantity(Quantity::Xbar, batch_pps, Some(meter), None, None),
            evaluate_quantity(Quantity::DsaVariance, batch_pps, Some(meter), None, Some(n)),
        ),
        EstimatorMode::Biased(beta) => (
            evaluate_quantity(Quantity::BdsaXbar, batch_pps, Some(meter), Some(beta), None),
            evaluate_quantity(Quantity::BdsaVariance, batch_pps, Some(meter), Some(beta), Some(n)),
        ),
    };
    push_row(out, "analytic_xbar", value_text(signal));
    push_row(out, "analytic_variance", value_text(variance));
}

fn print_estimate(est: &DsaEstimate) {
    say!(
        "{}: xbar = {} +/- {}, d_hat = {}, n1 = {}, n2 = {}",
        est.mode,
        format_number(est.xbar),
        format_number(est.variance.sqrt()),
        format_number(est.d_hat),
        est.n1,
        est.n2
    );
}

/// Estimate table of a batch; also the difference-histogram route when histograms were kept.
fn batch_estimate_text(config: &RunConfig, batch: &SampleBatch) -> Result<String> {
    let est = estimate_batch(batch, &batch.pps, config.estimator_mode())?;
    print_estimate(&est);
    let mut text = String::new();
    header(&mut text, "estimate from batch sufficient statistics");
    let seeds: Vec<String> = batch.seeds.iter().map(u64::to_string).collect();
    text.push_str(&format!("# seeds: {}\n# N: {}\n", seeds.join(" "), batch.n_total));
    text.push_str("quantity,value\n");
    estimate_rows(&mut text, &est);
    if let (Some(h1), Some(h2)) = (&batch.hist_psa, &batch.hist_psr) {
        let diff = difference_histogram_signal(h1, h2, &batch.pps);
        push_row(&mut text, "difference_histogram_xbar", value_text(diff.as_ref().map(|d| d.xbar).map_err(Clone::clone)));
        push_row(&mut text, "difference_histogram_d_hat", value_text(diff.as_ref().map(|d| d.d_hat).map_err(Clone::clone)));
    }
    push_row(&mut text, "background_per_channel", batch.imperfection.background_per_channel.to_string());
    expected_rows(&mut text, config, &batch.pps, &batch.meter, batch.n_total.max(1));
    Ok(text)
}

fn simulate_cmd(ctx: &mut Context) -> Result<()> {
    let (pps, meter) = ctx.config.model()?;
    let config = ctx.config.clone();
    match config.estimator_mode() {
        EstimatorMode::Unbiased => {
            analytic::ratio_factors(&pps)?;
        }
        EstimatorMode::Biased(beta) => {
            analytic::bdsa_signal(&pps, &meter, beta)?;
        }
    }
    let batch = sample_partitioned(
        &pps,
        &meter,
        config.n,
        config.seed,
        config.partitions as u64,
        &config.imperfection(),
        config.histograms,
    )?;
    ctx.produced.seeds = batch.seeds.clone();
    ctx.write("batch.json", &io::batch_to_json(&batch))?;
    if let Some(total) = batch.total_histogram() {
        ctx.write("histogram_total.csv", &io::histogram_to_csv(&total))?;
    }
    let text = batch_estimate_text(&config, &batch)?;
    ctx.write("estimate.csv", &text)
}

fn estimate_cmd(ctx: &mut Context, batch: Option<&Path>, histogram: Option<&Path>) -> Result<()> {
    let config = ctx.config.clone();
    if let Some(path) = batch {
        ctx.input(path)?;
        let batch = io::read_batch(path)?;
        ctx.produced.seeds = batch.seeds.clone();
        let text = batch_estimate_text(&config, &batch)?;
        return ctx.write("estimate.csv", &text);
    }
    let path = histogram.expect("clap requires --batch or --histogram");
    ctx.input(path)?;
    let total = io::histogram_from_csv(&io::read_text(path)?)?;
    let (pps, meter) = config.model()?;
    let split = postprocess_split(&total, &pps, &meter);
    let est = estimate_from_split(&split, &pps, config.estimator_mode())?;
    print_estimate(&est);
    let mut text = String::new();
    header(&mut text, "estimate from a post-processed record histogram");
    config_lines(&mut text, &config);
    text.push_str("quantity,value\n");
    estimate_rows(&mut text, &est);
    push_row(&mut text, "bins", split.psa.len().to_string());
    push_row(&mut text, "flagged_bins", split.flagged_bins.len().to_string());
    push_row(&mut text, "dropped_out_of_range", split.dropped.to_string());
    expected_rows(&mut text, &config, &pps, &meter, total.in_range_total().max(1));
    ctx.write("estimate.csv", &text)
}

fn replicate_cmd(ctx: &mut Context) -> Result<()> {
    let config = ctx.config.clone();
    let (pps, meter) = config.model()?;
    let s = replicate_study(&pps, &meter, config.n, config.m, config.seed, config.estimator_mode())?;
    ctx.produced.seeds = (0..config.m as u64).map(|i| config.seed.wrapping_add(i)).collect();
    say!(
        "{}: {} replicates ({} excluded), empirical/analytic variance = {}",
        s.mode,
        s.m,
        s.excluded,
        format_number(s.ratio)
    );
    let mut text = String::new();
    header(&mut text, &format!("replicate study, seeds {} + i for i < M", config.seed));
    config_lines(&mut text, &config);
    text.push_str("quantity,value\n");
    push_row(&mut text, "mode", s.mode.to_string());
    push_row(&mut text, "M", s.m.to_string());
    push_row(&mut text, "excluded", s.excluded.to_string());
    for (name, v) in [
        ("empirical_mean", s.empirical_mean),
        ("empirical_variance", s.empirical_variance),
        ("analytic_mean", s.analytic_mean),
        ("analytic_variance", s.analytic_variance),
        ("variance_ratio", s.ratio),
        ("count_noise_variance", s.count_noise_variance),
        ("total_variance_ratio", s.total_ratio),
        ("mean_estimated_variance", s.mean_estimated_variance),
        ("mean_n1", s.mean_n1),
        ("mean_n2", s.mean_n2),
        ("expected_n1", s.expected_n1),
        ("expected_n2", s.expected_n2),
    ] {
        push_row(&mut text, name, value_text(Ok(v)));
    }
    ctx.write("replicate.csv", &text)
}

fn sweep_cmd(ctx: &mut Context) -> Result<()> {
    let spec = ctx.config.sweep_spec()?;
    if let Some(o) = &spec.mc_overlay {
        ctx.produced.seeds = o.seeds.clone();
    }
    let table = run_sweep(&spec)?;
    say!("{} rows x {} columns", table.rows.len(), table.columns.len());
    ctx.write("sweep.csv", &table.to_csv())
}

fn figure_cmd(ctx: &mut Context, id: &str) -> Result<()> {
    let ids: Vec<u8> = match id {
        "all" => FIGURE_IDS.to_vec(),
        one => vec![one.parse().map_err(|_| DsaError::invalid("figure", format!("`{one}` is not 1..5 or all")))?],
    };
    for id in ids {
        for ft in sweep::figure(id)? {
            ctx.write(&format!("{}.csv", ft.name), &ft.table.to_csv())?;
        }
    }
    Ok(())
}

/// Re-runs a recorded command into `out` (default: `reproduce/` next to the manifest).
fn reproduce(manifest_path: &Path, out: Option<&Path>) -> Result<i32> {
    let recorded = RunManifest::read(manifest_path)?;
    if recorded.artifact != crate::ARTIFACT_VERSION {
        eprintln!(
            "warning: manifest written by {}, running {}",
            recorded.artifact,
            crate::ARTIFACT_VERSION
        );
    }
    let mut argv = vec!["dsa".to_string()];
    argv.extend(recorded.args.iter().cloned());
    let mut cli = Cli::try_parse_from(&argv).map_err(|e| DsaError::Parse(format!("recorded arguments: {e}")))?;
    if matches!(cli.command, Command::Reproduce { .. }) {
        return Err(DsaError::invalid("manifest", "a reproduce run cannot itself be reproduced"));
    }
    for input in &recorded.inputs {
        if cli.config.as_deref() == Some(Path::new(&input.path)) {
            continue;
        }
        let now = FileDigest::of(Path::new(&input.path), input.path.clone())?;
        if now.sha256 != input.sha256 {
            eprintln!("warning: input {} changed since the recorded run", input.path);
        }
    }
    let target = match out {
        Some(dir) => dir.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("reproduce"),
    };
    std::fs::create_dir_all(&target).map_err(|e| io::io_error(&target, e))?;
    let config = recorded.resolved_config()?;
    let config_path = target.join("resolved-config.toml");
    io::write_text(&config_path, &config.render())?;
    cli.config = Some(config_path);
    cli.out = Some(target.clone());
    cli.seed = None;
    cli.format = None;

    let status = match execute(cli, recorded.args.clone()) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    let mut all_match = true;
    for o in &recorded.outputs {
        let now = FileDigest::of(&target.join(&o.path), o.path.clone());
        let same = matches!(&now, Ok(d) if d.sha256 == o.sha256);
        all_match &= same;
        say!("{} {}", if same { "match   " } else { "MISMATCH" }, o.path);
    }
    if status != EXIT_OK && status != EXIT_MISMATCH && recorded.outputs.is_empty() {
        return Ok(status);
    }
    Ok(if all_match { EXIT_OK } else { EXIT_MISMATCH })
}
