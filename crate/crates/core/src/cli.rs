//! `bfk` command-line front end.
//!
//! Subcommands:
//! - `correct`: fit one image, write corrected image, bias, labels, trace and manifest
//! - `simulate`: write a phantom, its labels and `count` biased observations with their true bias
//! - `evaluate`: score an uncorrected and a corrected image against the clean phantom
//! - `sweep`: simulate, correct and evaluate over a grid of conditions and seeds
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input
//! shape, 3 empty foreground mask.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::BiasClamp;
use crate::error::Error;
use crate::grid::{
    read_image, read_labels, write_image, write_labels, write_raw, BitDepth, Field, ImageGrid,
    BACKGROUND_LABEL,
};
use crate::metrics::{fmt_sig, MetricReport};
use crate::solver::{fit, CorrectionResult, SolverConfig};
use crate::synth::{apply_bias, make_phantom, synth_bias, BiasSynthSpec, Geometry, PhantomSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EMPTY_MASK: i32 = 3;

/// Mixed into per-observation seeds so noise and bias draws use distinct streams.
const NOISE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Header(_) | Error::ZeroSize | Error::InvalidData(_) => EXIT_IO,
            Error::EmptyMask => EXIT_EMPTY_MASK,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "bfk", version, about = "Bias field correction by fuzzy-clustering alternating minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate and remove the bias field of one image
    Correct(CorrectArgs),
    /// Generate a phantom and biased observations of it
    Simulate(SimulateArgs),
    /// Compare an uncorrected and a corrected image against the clean phantom
    Evaluate(EvaluateArgs),
    /// Run simulate/correct/evaluate over a grid of conditions
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// TOML file with solver settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub fuzziness: Option<f64>,
    #[arg(long = "kernel-size")]
    pub kernel_size: Option<usize>,
    #[arg(long = "kernel-sigma")]
    pub kernel_sigma: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "clamp-lo")]
    pub clamp_lo: Option<f64>,
    #[arg(long = "clamp-hi")]
    pub clamp_hi: Option<f64>,
    /// Disable bias clamping
    #[arg(long = "no-clamp", conflicts_with_all = ["clamp_lo", "clamp_hi"])]
    pub no_clamp: bool,
}

impl SolverFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, seed: u64) -> CliResult<SolverConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
                toml::from_str::<SolverConfig>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => SolverConfig::default(),
        };
        cfg.seed = seed;
        if let Some(v) = self.classes {
            cfg.n_classes = v;
        }
        if let Some(v) = self.fuzziness {
            cfg.fuzziness = v;
        }
        if let Some(v) = self.kernel_size {
            cfg.kernel_size = v;
        }
        if let Some(v) = self.kernel_sigma {
            cfg.kernel_sigma = Some(v);
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if self.no_clamp {
            cfg.bias_clamp = None;
        } else if self.clamp_lo.is_some() || self.clamp_hi.is_some() {
            let base = cfg.bias_clamp.unwrap_or_default();
            cfg.bias_clamp = Some(BiasClamp {
                lo: self.clamp_lo.unwrap_or(base.lo),
                hi: self.clamp_hi.unwrap_or(base.hi),
            });
        }
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg.materialized())
    }
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Input image (binary graymap or BFK1 raw field)
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, env = "BFK_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryArg {
    Disks,
    Voronoi,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Class intensities, strictly increasing in (0, 1]
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
    pub intensities: Vec<f64>,
    #[arg(long, value_enum, default_value_t = GeometryArg::Disks)]
    pub geometry: GeometryArg,
    #[arg(long = "voronoi-seeds", default_value_t = 16)]
    pub voronoi_seeds: usize,
    #[arg(long = "bias-lo", default_value_t = 0.8)]
    pub bias_lo: f64,
    #[arg(long = "bias-hi", default_value_t = 1.2)]
    pub bias_hi: f64,
    #[arg(long = "legendre-degree", default_value_t = 15)]
    pub legendre_degree: usize,
    #[arg(long = "trig-degree", default_value_t = 2)]
    pub trig_degree: usize,
    #[arg(long = "weight-lo", default_value_t = -20.0, allow_negative_numbers = true)]
    pub weight_lo: f64,
    #[arg(long = "weight-hi", default_value_t = 20.0, allow_negative_numbers = true)]
    pub weight_hi: f64,
    /// Standard deviation of additive Gaussian noise on each observation
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, env = "BFK_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn phantom_spec(&self) -> PhantomSpec {
        PhantomSpec {
            width: self.width,
            height: self.height,
            n_classes: self.intensities.len(),
            class_intensities: self.intensities.clone(),
            geometry: match self.geometry {
                GeometryArg::Disks => Geometry::ConcentricDisks,
                GeometryArg::Voronoi => Geometry::VoronoiCells {
                    seed_count: self.voronoi_seeds,
                },
            },
            noise_sigma: 0.0,
            seed: self.seed,
        }
    }

    pub fn bias_spec(&self, seed: u64) -> BiasSynthSpec {
        BiasSynthSpec {
            legendre_degree: self.legendre_degree,
            trig_degree: self.trig_degree,
            weight_range: (self.weight_lo, self.weight_hi),
            rescale_range: (self.bias_lo, self.bias_hi),
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub corrected: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Report path; `.json` writes JSON, anything else CSV
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file listing the conditions
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub duration_secs: f64,
}

impl RunManifest {
    fn new(command: &str, config: Value, seed: u64) -> Self {
        Self {
            command: command.into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            duration_secs: 0.0,
        }
    }

    fn write(mut self, dir: &Path, started: Instant) -> CliResult<()> {
        self.duration_secs = started.elapsed().as_secs_f64();
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        write_text(&path, &text)
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Correct(a) => cmd_correct(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn trace_csv(result: &CorrectionResult) -> String {
    let n = result.centers.len();
    let mut out = String::from("iteration,energy,bias_ms_change");
    for k in 0..n {
        let _ = write!(out, ",center_{k}");
    }
    out.push('\n');
    for rec in &result.trace {
        let _ = write!(
            out,
            "{},{},{}",
            rec.iteration,
            fmt_sig(rec.energy),
            fmt_sig(rec.bias_ms_change)
        );
        for c in &rec.centers {
            let _ = write!(out, ",{}", fmt_sig(*c));
        }
        out.push('\n');
    }
    out
}

pub fn cmd_correct(args: &CorrectArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = args.solver.resolve(args.seed)?;
    let img = read_image(&args.input)?;
    let result = fit(&img, &cfg)?;
    eprintln!(
        "seed {}: {} iterations, converged={}, energy {}",
        cfg.seed,
        result.iterations,
        result.converged,
        fmt_sig(result.final_energy)
    );

    let dir = &args.out;
    create_dir(dir)?;
    let mut manifest = RunManifest::new("correct", to_json(&cfg), cfg.seed);
    manifest.inputs.push(args.input.display().to_string());

    let mut emit = |name: &str| {
        let p = dir.join(name);
        manifest.outputs.push(p.display().to_string());
        p
    };
    write_raw(&result.corrected, emit("corrected.bfk"))?;
    write_raw(&result.bias, emit("bias.bfk"))?;
    write_image(&result.bias, emit("bias.pgm"), true, BitDepth::Eight)?;
    let mask = img.effective_mask();
    let labels: Vec<u8> = result
        .membership
        .argmax()
        .into_iter()
        .enumerate()
        .map(|(r, k)| if mask.contains(r) { k as u8 } else { BACKGROUND_LABEL })
        .collect();
    write_labels(&labels, img.width(), img.height(), emit("labels.pgm"))?;
    write_text(&emit("trace.csv"), &trace_csv(&result))?;
    manifest.write(dir, started)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let phantom = args.phantom_spec();
    phantom.validate().map_err(|e| CliError::config(e.to_string()))?;
    args.bias_spec(args.seed)
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    if !(args.noise_sigma.is_finite() && args.noise_sigma >= 0.0) {
        return Err(CliError::config("noise sigma must be >= 0"));
    }
    let (clean, labels) = make_phantom(&phantom).map_err(|e| CliError::config(e.to_string()))?;

    let dir = &args.out;
    create_dir(dir)?;
    let config = serde_json::json!({
        "phantom": to_json(&phantom),
        "bias": to_json(&args.bias_spec(args.seed)),
        "noise_sigma": args.noise_sigma,
        "count": args.count,
        "seed_rule": "observation i uses bias seed = seed + i",
    });
    let mut manifest = RunManifest::new("simulate", config, args.seed);
    let mut emit = |name: String| {
        let p = dir.join(name);
        manifest.outputs.push(p.display().to_string());
        p
    };
    write_raw(&clean, emit("clean.bfk".into()))?;
    write_labels(&labels, clean.width(), clean.height(), emit("labels.pgm".into()))?;
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i as u64);
        let bias = synth_bias(clean.width(), clean.height(), &args.bias_spec(seed))?;
        let biased = apply_bias(&clean, &bias, args.noise_sigma, seed ^ NOISE_STREAM)?;
        write_raw(&biased, emit(format!("biased_{i:03}.bfk")))?;
        write_raw(&bias, emit(format!("bias_{i:03}.bfk")))?;
    }
    manifest.write(dir, started)
}

fn read_labels_checked(path: &Path, dims: (usize, usize)) -> CliResult<Vec<u8>> {
    let (w, h, labels) = read_labels(path)?;
    if (w, h) != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: (w, h),
        }
        .into());
    }
    Ok(labels)
}

fn report_pair(clean: &ImageGrid, labels: &[u8], input: &ImageGrid, corrected: &ImageGrid) -> CliResult<(MetricReport, MetricReport)> {
    Ok((
        MetricReport::evaluate(clean, labels, input)?,
        MetricReport::evaluate(clean, labels, corrected)?,
    ))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let clean = read_image(&args.clean)?;
    let input = read_image(&args.input)?;
    let corrected = read_image(&args.corrected)?;
    for other in [&input, &corrected] {
        Error::check_dims(clean.dims(), other.dims())?;
    }
    let labels = read_labels_checked(&args.labels, clean.dims())?;
    let (rin, rcor) = report_pair(&clean, &labels, &input, &corrected)?;

    let is_json = args
        .report
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let text = if is_json {
        let mut s = serde_json::to_string_pretty(&serde_json::json!({
            "input": rin.to_json(),
            "corrected": rcor.to_json(),
        }))
        .map_err(|e| CliError::io(e.to_string()))?;
        s.push('\n');
        s
    } else {
        format!(
            "image,{}\ninput,{}\ncorrected,{}\n",
            rin.csv_header(),
            rin.csv_row(),
            rcor.csv_row()
        )
    };
    if let Some(parent) = args.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&args.report, &text)
}

/// One row of the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCondition {
    pub name: String,
    pub bias_lo: f64,
    pub bias_hi: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub bias: BiasSynthSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, rename = "condition")]
    pub conditions: Vec<SweepCondition>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.conditions.is_empty() {
            return Err("sweep grid has no conditions".into());
        }
        self.phantom.validate().map_err(|e| e.to_string())?;
        self.solver.validate().map_err(|e| e.to_string())?;
        for c in &self.conditions {
            if c.seeds.is_empty() {
                return Err(format!("condition {:?} lists no seeds", c.name));
            }
            if !(c.noise_sigma.is_finite() && c.noise_sigma >= 0.0) {
                return Err(format!("condition {:?}: noise sigma must be >= 0", c.name));
            }
            BiasSynthSpec {
                rescale_range: (c.bias_lo, c.bias_hi),
                ..self.bias.clone()
            }
            .validate()
            .map_err(|e| format!("condition {:?}: {e}", c.name))?;
        }
        Ok(())
    }
}

/// Metrics of one simulated observation before and after correction.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub condition: usize,
    pub seed: u64,
    pub input: MetricReport,
    pub corrected: MetricReport,
    pub converged: bool,
    pub iterations: usize,
}

/// Runs one grid cell: bias the phantom, correct it and score both images.
pub fn run_cell(
    spec: &SweepSpec,
    clean: &ImageGrid,
    labels: &[u8],
    condition: usize,
    seed: u64,
) -> crate::Result<SweepRun> {
    let cond = &spec.conditions[condition];
    let bias_spec = BiasSynthSpec {
        rescale_range: (cond.bias_lo, cond.bias_hi),
        seed,
        ..spec.bias.clone()
    };
    let bias = synth_bias(clean.width(), clean.height(), &bias_spec)?;
    let observed = apply_bias(clean, &bias, cond.noise_sigma, seed ^ NOISE_STREAM)?;
    let cfg = SolverConfig {
        seed,
        ..spec.solver.clone()
    };
    let result = fit(&observed, &cfg)?;
    let corrected = ImageGrid::from_field(result.corrected.clone(), Some(observed.effective_mask()))?;
    Ok(SweepRun {
        condition,
        seed,
        input: MetricReport::evaluate(clean, labels, &observed)?,
        corrected: MetricReport::evaluate(clean, labels, &corrected)?,
        converged: result.converged,
        iterations: result.iterations,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate table: one row per condition, mean and sample std of each
/// metric for the uncorrected input and the corrected image.
pub fn aggregate_csv(spec: &SweepSpec, runs: &[SweepRun]) -> String {
    let n_classes = spec.phantom.n_classes;
    let mut header = vec!["condition".to_string(), "n_runs".into()];
    for src in ["input", "corrected"] {
        for k in 0..n_classes {
            header.push(format!("{src}_class_cv_{k}_mean"));
            header.push(format!("{src}_class_cv_{k}_std"));
        }
        for m in ["ssim", "psnr_db"] {
            header.push(format!("{src}_{m}_mean"));
            header.push(format!("{src}_{m}_std"));
        }
    }
    header.push("converged_fraction".into());
    let mut out = header.join(",");
    out.push('\n');

    for (ci, cond) in spec.conditions.iter().enumerate() {
        let cell: Vec<&SweepRun> = runs.iter().filter(|r| r.condition == ci).collect();
        let mut row = vec![cond.name.clone(), cell.len().to_string()];
        for pick in [|r: &SweepRun| r.input.clone(), |r: &SweepRun| r.corrected.clone()] {
            let reports: Vec<MetricReport> = cell.iter().map(|r| pick(r)).collect();
            for k in 0..n_classes {
                let vals: Vec<f64> = reports
                    .iter()
                    .filter_map(|rep| rep.per_class_cv.iter().find(|(c, _)| *c == k).map(|(_, v)| *v))
                    .collect();
                let (m, s) = if vals.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&vals) };
                row.push(fmt_sig(m));
                row.push(fmt_sig(s));
            }
            for get in [|r: &MetricReport| r.ssim, |r: &MetricReport| r.psnr] {
                let vals: Vec<f64> = reports.iter().map(get).collect();
                let (m, s) = mean_std(&vals);
                row.push(fmt_sig(m));
                row.push(fmt_sig(s));
            }
        }
        let conv = cell.iter().filter(|r| r.converged).count() as f64 / cell.len() as f64;
        row.push(fmt_sig(conv));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn runs_csv(spec: &SweepSpec, runs: &[SweepRun]) -> String {
    let mut out = String::new();
    if let Some(first) = runs.first() {
        let _ = writeln!(out, "condition,seed,image,{},converged,iterations", first.input.csv_header());
    }
    for r in runs {
        let name = &spec.conditions[r.condition].name;
        for (label, rep) in [("input", &r.input), ("corrected", &r.corrected)] {
            let _ = writeln!(
                out,
                "{name},{},{label},{},{},{}",
                r.seed,
                rep.csv_row(),
                r.converged,
                r.iterations
            );
        }
    }
    out
}

pub fn load_sweep_spec(path: &Path) -> CliResult<SweepSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let spec: SweepSpec =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(CliError::config)?;
    Ok(spec)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let started = Instant::now();
    let spec = load_sweep_spec(&args.spec)?;
    let (clean, labels) = make_phantom(&spec.phantom).map_err(|e| CliError::config(e.to_string()))?;

    let cells: Vec<(usize, u64)> = spec
        .conditions
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.seeds.iter().map(move |&s| (ci, s)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(ci, seed)| run_cell(&spec, &clean, &labels, ci, seed))
        .collect::<crate::Result<Vec<_>>>()?;

    let dir = &args.out;
    create_dir(dir)?;
    let mut manifest = RunManifest::new("sweep", to_json(&spec), spec.phantom.seed);
    manifest.inputs.push(args.spec.display().to_string());
    let runs_path = dir.join("runs.csv");
    write_text(&runs_path, &runs_csv(&spec, &runs))?;
    let agg_path = dir.join("aggregate.csv");
    write_text(&agg_path, &aggregate_csv(&spec, &runs))?;
    manifest.outputs = vec![
        runs_path.display().to_string(),
        agg_path.display().to_string(),
    ];
    manifest.write(dir, started)
}
