//! Command-line front end for `spt-sim`.
//!
//! Every experiment writes `<kind>.csv` and `<kind>.json` into the output
//! directory. The JSON holds the fully resolved parameters and a short
//! summary. Output directory and worker count are execution settings and are
//! not recorded, so runs into different directories stay byte-identical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::SptError;
use crate::hilbert::{thermal_populations, von_neumann_entropy, ModeSpace, PopulationVector, ThermalSpec};
use crate::lindblad::{compare_to_ideal, CyclePropagators, JointDensityMatrix, LindbladConfig};
use crate::metrology::{self, gain_report, uniform_grid, FISHER_SQL};
use crate::protocol::{self, trap_levels, trapped_state_analytic, ProtocolConfig, Sideband};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPT_SIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "spt-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] SptError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for bad input, 2 for failures during the computation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) if e.is_config_error() || matches!(e, SptError::GridTooCoarse(_)) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Trap,
    Lindblad,
    Fisher,
    Sweep,
    Entropy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Trap => "trap",
            ExperimentKind::Lindblad => "lindblad",
            ExperimentKind::Fisher => "fisher",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spt-sim", version, about = "Selective population trapping simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thermal and trapped Fock populations.
    Trap(PointArgs),
    /// Master-equation simulation of repeated trapping cycles.
    Lindblad(PointArgs),
    /// Fisher information curves and metrological gain.
    Fisher(FisherArgs),
    /// Lindblad runs over a grid of eta, omega and repetitions.
    Sweep(SweepArgs),
    /// Entropy of thermal and trapped states against mean phonon number.
    Entropy(EntropyArgs),
}

fn parse_sideband(s: &str) -> Result<Sideband, String> {
    s.parse().map_err(|e: SptError| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub n0: Option<u32>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long, conflicts_with = "mean_n")]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mean_n: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_parser = parse_sideband)]
    pub sideband: Option<Sideband>,
    #[arg(long)]
    pub tau_decay: Option<f64>,
    /// Output directory; falls back to the config file, then $SPT_SIM_OUT_DIR.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with experiment parameters; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub reps: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FisherArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Fock level whose population is measured; defaults to the most likely one.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub r_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long)]
    pub mean_n_max: Option<f64>,
    /// Number of mean phonon numbers between 0 and `--mean-n-max`.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub eta: Vec<f64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub omega: Vec<f64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub reps: Vec<u32>,
}

/// Layout of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub kind: Option<ExperimentKind>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub protocol: ProtocolSection,
    pub thermal: Option<ThermalSpec>,
    pub lindblad: LindbladSection,
    pub metrology: MetrologySection,
    pub entropy: EntropySection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub n0: Option<u32>,
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    pub sideband: Option<Sideband>,
    pub repetitions: Option<u32>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladSection {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub tau_decay: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetrologySection {
    pub level: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySection {
    pub mean_n_max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub eta: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
    pub repetitions: Option<Vec<u32>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Merged parameter set before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    pub n0: Option<u32>,
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    pub sideband: Option<Sideband>,
    pub repetitions: Option<u32>,
    pub dim: Option<usize>,
    pub thermal: Option<ThermalSpec>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub tau_decay: Option<f64>,
    pub level: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_step: Option<f64>,
    pub mean_n_max: Option<f64>,
    pub points: Option<usize>,
    pub sweep_eta: Option<Vec<f64>>,
    pub sweep_omega: Option<Vec<f64>>,
    pub sweep_repetitions: Option<Vec<u32>>,
}

impl Parameters {
    fn from_file(f: &ConfigFile) -> Self {
        Parameters {
            n0: f.protocol.n0,
            eta: f.protocol.eta,
            omega: f.protocol.omega,
            sideband: f.protocol.sideband,
            repetitions: f.protocol.repetitions,
            dim: f.protocol.dim,
            thermal: f.thermal,
            gamma: f.lindblad.gamma,
            delta: f.lindblad.delta,
            tau_decay: f.lindblad.tau_decay,
            level: f.metrology.level,
            r_min: f.metrology.r_min,
            r_max: f.metrology.r_max,
            r_step: f.metrology.r_step,
            mean_n_max: f.entropy.mean_n_max,
            points: f.entropy.points,
            sweep_eta: f.sweep.eta.clone(),
            sweep_omega: f.sweep.omega.clone(),
            sweep_repetitions: f.sweep.repetitions.clone(),
        }
    }

    fn apply_common(&mut self, c: &CommonArgs) {
        self.n0 = c.n0.or(self.n0);
        self.gamma = c.gamma.or(self.gamma);
        self.delta = c.delta.or(self.delta);
        self.dim = c.dim.or(self.dim);
        self.sideband = c.sideband.or(self.sideband);
        self.tau_decay = c.tau_decay.or(self.tau_decay);
        if let Some(b) = c.beta {
            self.thermal = Some(ThermalSpec::Beta(b));
        }
        if let Some(m) = c.mean_n {
            self.thermal = Some(ThermalSpec::MeanN(m));
        }
    }

    fn apply_point(&mut self, p: &PointArgs) {
        self.apply_common(&p.common);
        self.eta = p.eta.or(self.eta);
        self.omega = p.omega.or(self.omega);
        self.repetitions = p.reps.or(self.repetitions);
    }
}

/// One fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub parameters: Parameters,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// Merges the config file (if any), the flags and the environment.
    pub fn from_command(command: &Command) -> CliResult<Self> {
        let (kind, common) = match command {
            Command::Trap(a) => (ExperimentKind::Trap, &a.common),
            Command::Lindblad(a) => (ExperimentKind::Lindblad, &a.common),
            Command::Fisher(a) => (ExperimentKind::Fisher, &a.point.common),
            Command::Entropy(a) => (ExperimentKind::Entropy, &a.point.common),
            Command::Sweep(a) => (ExperimentKind::Sweep, &a.common),
        };
        let file = match &common.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if let Some(k) = file.kind {
            if k != kind {
                return Err(CliError::Config(format!(
                    "key `kind`: config file is for `{}` but the subcommand is `{}`",
                    k.name(),
                    kind.name()
                )));
            }
        }
        let mut params = Parameters::from_file(&file);
        match command {
            Command::Trap(a) | Command::Lindblad(a) => params.apply_point(a),
            Command::Fisher(a) => {
                params.apply_point(&a.point);
                params.level = a.level.or(params.level);
                params.r_min = a.r_min.or(params.r_min);
                params.r_max = a.r_max.or(params.r_max);
                params.r_step = a.r_step.or(params.r_step);
            }
            Command::Entropy(a) => {
                params.apply_point(&a.point);
                params.mean_n_max = a.mean_n_max.or(params.mean_n_max);
                params.points = a.points.or(params.points);
            }
            Command::Sweep(a) => {
                params.apply_common(&a.common);
                if !a.eta.is_empty() {
                    params.sweep_eta = Some(a.eta.clone());
                }
                if !a.omega.is_empty() {
                    params.sweep_omega = Some(a.omega.clone());
                }
                if !a.reps.is_empty() {
                    params.sweep_repetitions = Some(a.reps.clone());
                }
            }
        }
        let out_dir = common
            .out
            .clone()
            .or(file.out)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let workers = common.workers.or(file.workers);
        if workers == Some(0) {
            return Err(CliError::Config("key `workers`: must be at least 1".into()));
        }
        Ok(ExperimentConfig {
            kind,
            parameters: params,
            out_dir,
            workers,
        })
    }
}

const DEFAULT_N0: u32 = 1;
const DEFAULT_ETA: f64 = 0.02;
const DEFAULT_OMEGA: f64 = 1e-4;
const DEFAULT_GAMMA: f64 = 1000.0;
const DEFAULT_REPETITIONS: u32 = 30;
const DEFAULT_LINDBLAD_BETA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct ThermalParams {
    beta: f64,
    mean_n: f64,
}

impl ThermalParams {
    fn new(spec: ThermalSpec) -> CliResult<Self> {
        spec.validate()?;
        Ok(ThermalParams {
            beta: spec.beta(),
            mean_n: spec.mean_n(),
        })
    }
}

fn space(dim: usize) -> CliResult<ModeSpace> {
    Ok(ModeSpace::new(dim)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TrapParams {
    n0: u32,
    sideband: Sideband,
    dim: usize,
    thermal: ThermalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EntropyParams {
    n0: u32,
    sideband: Sideband,
    dim: usize,
    mean_n_max: f64,
    points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FisherParams {
    n0: u32,
    sideband: Sideband,
    dim: usize,
    thermal: ThermalParams,
    level: usize,
    level_is_most_likely: bool,
    r_min: f64,
    r_max: f64,
    r_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LindbladParams {
    n0: u32,
    sideband: Sideband,
    eta: f64,
    omega: f64,
    delta: f64,
    gamma: f64,
    tau: f64,
    tau_decay: f64,
    dim: usize,
    repetitions: u32,
    thermal: ThermalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepParams {
    n0: u32,
    sideband: Sideband,
    delta: f64,
    gamma: f64,
    tau_decay: f64,
    dim: usize,
    thermal: ThermalParams,
    eta: Vec<f64>,
    omega: Vec<f64>,
    repetitions: Vec<u32>,
}

fn resolve_thermal(p: &Parameters, default: ThermalSpec) -> CliResult<(ThermalSpec, ThermalParams)> {
    let spec = p.thermal.unwrap_or(default);
    Ok((spec, ThermalParams::new(spec)?))
}

fn default_delta(sideband: Sideband) -> f64 {
    // resonant with the sideband for ν = 1
    match sideband {
        Sideband::Rsb => 1.0,
        Sideband::Bsb => -1.0,
    }
}

fn resolve_tau_decay(p: &Parameters, gamma: f64) -> f64 {
    p.tau_decay.unwrap_or(if gamma > 0.0 { 10.0 / gamma } else { 0.0 })
}

/// Writes the CSV and JSON files of one experiment and returns their paths.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let outputs = match config.kind {
        ExperimentKind::Trap => run_trap(&config.parameters)?,
        ExperimentKind::Entropy => run_entropy(&config.parameters)?,
        ExperimentKind::Fisher => run_fisher(&config.parameters)?,
        ExperimentKind::Lindblad => run_lindblad(&config.parameters)?,
        ExperimentKind::Sweep => run_sweep(config)?,
    };
    write_outputs(&config.out_dir, outputs)
}

struct Outputs {
    files: Vec<(String, String)>,
}

fn write_outputs(dir: &Path, outputs: Outputs) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::with_capacity(outputs.files.len());
    for (name, body) in outputs.files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    body: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv {
            body: header.join(",") + "\n",
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }
}

fn summary_json(kind: ExperimentKind, params: &impl Serialize, summary: serde_json::Value) -> CliResult<String> {
    let doc = json!({
        "kind": kind.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "params": params,
        "summary": summary,
    });
    serde_json::to_string_pretty(&doc)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Core(SptError::Numerical(e.to_string())))
}

fn outputs(kind: ExperimentKind, extra: Vec<(String, String)>, csv: Csv, json: String) -> Outputs {
    let mut files = vec![(format!("{}.csv", kind.name()), csv.body), (format!("{}.json", kind.name()), json)];
    files.extend(extra);
    Outputs { files }
}

fn run_trap(p: &Parameters) -> CliResult<Outputs> {
    let (spec, thermal) = resolve_thermal(p, ThermalSpec::MeanN(5.0))?;
    let params = TrapParams {
        n0: p.n0.unwrap_or(DEFAULT_N0),
        sideband: p.sideband.unwrap_or(Sideband::Rsb),
        dim: p.dim.unwrap_or(40),
        thermal,
    };
    let p0 = thermal_populations(spec, space(params.dim)?)?;
    let tr = trapped_state_analytic(&p0, params.n0, params.sideband)?;
    let mut csv = Csv::new(&["n", "p_thermal", "p_trapped"]);
    for n in 0..params.dim {
        csv.row(&[n.to_string(), fmt_f(p0.get(n)), fmt_f(tr.get(n))]);
    }
    let summary = json!({
        "trap_levels": trap_levels(params.n0, params.sideband, params.dim),
        "entropy_thermal": von_neumann_entropy(&p0),
        "entropy_trapped": von_neumann_entropy(&tr),
        "mean_n_thermal": p0.mean_number(),
        "mean_n_trapped": tr.mean_number(),
        "most_likely_trapped": tr.most_likely(),
        "leaked": tr.leaked(),
    });
    let json = summary_json(ExperimentKind::Trap, &params, summary)?;
    Ok(outputs(ExperimentKind::Trap, vec![], csv, json))
}

fn run_entropy(p: &Parameters) -> CliResult<Outputs> {
    let params = EntropyParams {
        n0: p.n0.unwrap_or(DEFAULT_N0),
        sideband: p.sideband.unwrap_or(Sideband::Rsb),
        dim: p.dim.unwrap_or(400),
        mean_n_max: p.mean_n_max.unwrap_or(20.0),
        points: p.points.unwrap_or(40),
    };
    if !(params.mean_n_max > 0.0 && params.mean_n_max.is_finite()) {
        return Err(CliError::Config(format!("key `mean_n_max`: must be positive, got {}", params.mean_n_max)));
    }
    if params.points == 0 {
        return Err(CliError::Config("key `points`: must be at least 1".into()));
    }
    let s = space(params.dim)?;
    let mut csv = Csv::new(&["mean_n", "S_thermal", "S_trapped"]);
    let mut always_lower = true;
    for i in 1..=params.points {
        let mean_n = params.mean_n_max * i as f64 / params.points as f64;
        let p0 = thermal_populations(ThermalSpec::MeanN(mean_n), s)?;
        let tr = trapped_state_analytic(&p0, params.n0, params.sideband)?;
        let (s0, s1) = (von_neumann_entropy(&p0), von_neumann_entropy(&tr));
        always_lower &= s1 < s0;
        csv.row(&[fmt_f(mean_n), fmt_f(s0), fmt_f(s1)]);
    }
    let json = summary_json(ExperimentKind::Entropy, &params, json!({ "trapped_below_thermal": always_lower }))?;
    Ok(outputs(ExperimentKind::Entropy, vec![], csv, json))
}

fn run_fisher(p: &Parameters) -> CliResult<Outputs> {
    let (spec, thermal) = resolve_thermal(p, ThermalSpec::MeanN(10.0))?;
    let n0 = p.n0.unwrap_or(DEFAULT_N0);
    let sideband = p.sideband.unwrap_or(Sideband::Rsb);
    let dim = p.dim.unwrap_or(150);
    let p0 = thermal_populations(spec, space(dim)?)?;
    let tr = trapped_state_analytic(&p0, n0, sideband)?;
    let params = FisherParams {
        n0,
        sideband,
        dim,
        thermal,
        level: p.level.unwrap_or_else(|| tr.most_likely()),
        level_is_most_likely: p.level.is_none() || p.level == Some(tr.most_likely()),
        r_min: p.r_min.unwrap_or(0.01),
        r_max: p.r_max.unwrap_or(3.0),
        r_step: p.r_step.unwrap_or(0.01),
    };
    if params.level >= dim {
        return Err(CliError::Config(format!("key `level`: {} is outside the cutoff {dim}", params.level)));
    }
    let grid = uniform_grid(params.r_min, params.r_max, params.r_step)?;
    let ground = PopulationVector::fock(space(dim)?, 0)?;
    let mut csv = Csv::new(&["r", "xi", "dxi_dr", "fisher_trapped", "fisher_thermal", "fisher_ground"]);
    for &r in &grid {
        csv.row(&[
            fmt_f(r),
            fmt_f(metrology::overlap(&tr, params.level, r)),
            fmt_f(metrology::overlap_derivative(&tr, params.level, r)),
            fmt_f(metrology::fisher_limit(&tr, params.level, r)?),
            fmt_f(metrology::fisher_limit(&p0, 0, r)?),
            fmt_f(metrology::fisher_limit(&ground, 0, r)?),
        ]);
    }
    let trapped = gain_report(&tr, params.level, &grid)?;
    // the thermal peak may lie outside the grid, so only the sampled maximum is reported
    let thermal_max = metrology::fisher_curve(&p0, 0, &grid)?
        .max()
        .map(|s| json!({ "r": s.r, "fisher": s.fisher }));
    let summary = json!({
        "gain_report": trapped,
        "thermal_grid_max": thermal_max,
        "f_sql": FISHER_SQL,
        "cramer_rao_per_shot": trapped.cramer_rao(1),
    });
    let json = summary_json(ExperimentKind::Fisher, &params, summary)?;
    Ok(outputs(ExperimentKind::Fisher, vec![], csv, json))
}

struct LindbladPoint {
    protocol: ProtocolConfig,
    lindblad: LindbladConfig,
    p0: PopulationVector,
}

fn lindblad_point(
    n0: u32,
    sideband: Sideband,
    eta: f64,
    omega: f64,
    repetitions: u32,
    p: &Parameters,
    spec: ThermalSpec,
) -> CliResult<LindbladPoint> {
    let dim = p.dim.unwrap_or(14);
    let s = space(dim)?;
    let protocol = ProtocolConfig::new(n0, eta, omega, sideband, repetitions, s)?;
    let gamma = p.gamma.unwrap_or(DEFAULT_GAMMA);
    let lindblad = LindbladConfig::from_protocol(
        &protocol,
        p.delta.unwrap_or(default_delta(sideband)),
        gamma,
        Some(resolve_tau_decay(p, gamma)),
    )?;
    Ok(LindbladPoint {
        protocol,
        lindblad,
        p0: thermal_populations(spec, s)?,
    })
}

fn off_support_mass(p: &PopulationVector, n0: u32, sideband: Sideband) -> f64 {
    let traps = trap_levels(n0, sideband, p.dim());
    (0..p.dim()).filter(|n| !traps.contains(n)).map(|n| p.get(n)).sum()
}

fn run_lindblad(p: &Parameters) -> CliResult<Outputs> {
    let (spec, thermal) = resolve_thermal(p, ThermalSpec::Beta(DEFAULT_LINDBLAD_BETA))?;
    let n0 = p.n0.unwrap_or(DEFAULT_N0);
    let sideband = p.sideband.unwrap_or(Sideband::Rsb);
    let point = lindblad_point(
        n0,
        sideband,
        p.eta.unwrap_or(DEFAULT_ETA),
        p.omega.unwrap_or(DEFAULT_OMEGA),
        p.repetitions.unwrap_or(DEFAULT_REPETITIONS),
        p,
        spec,
    )?;
    let cfg = &point.lindblad;
    let params = LindbladParams {
        n0,
        sideband,
        eta: cfg.eta,
        omega: cfg.omega,
        delta: cfg.delta,
        gamma: cfg.gamma,
        tau: cfg.tau,
        tau_decay: cfg.tau_decay,
        dim: cfg.space.dim(),
        repetitions: cfg.repetitions,
        thermal,
    };
    let run = CyclePropagators::new(cfg)?.run(&JointDensityMatrix::ground_with_populations(&point.p0), cfg.repetitions)?;
    let tv_ideal = compare_to_ideal(&run.history, &point.protocol, &point.p0)?;
    let analytic = trapped_state_analytic(&point.p0, n0, sideband)?;
    let ideal_final = protocol::iterate(
        &protocol::population_map(&protocol::kraus_pair(&point.protocol)),
        &point.p0,
        cfg.repetitions,
    )?;

    let dim = params.dim;
    let mut header = vec!["cycle".to_string(), "tv_ideal".into(), "tv_analytic".into(), "excited_after_reset".into()];
    header.extend((0..dim).map(|n| format!("p_{n}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    for (k, h) in run.history.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            fmt_f(tv_ideal[k]),
            fmt_f(h.tv_distance(&analytic)?),
            fmt_f(if k == 0 { 0.0 } else { run.excited_after_reset[k - 1] }),
        ];
        row.extend(h.probs().iter().map(|&x| fmt_f(x)));
        csv.row(&row);
    }

    let last = run.history.last().expect("history holds the initial state");
    let mut pops = Csv::new(&["n", "p_initial", "p_simulated", "p_ideal", "p_analytic"]);
    for n in 0..dim {
        pops.row(&[
            n.to_string(),
            fmt_f(point.p0.get(n)),
            fmt_f(last.get(n)),
            fmt_f(ideal_final.get(n)),
            fmt_f(analytic.get(n)),
        ]);
    }
    let summary = json!({
        "tv_ideal_final": tv_ideal.last(),
        "tv_analytic_final": last.tv_distance(&analytic)?,
        "off_support_mass": off_support_mass(last, n0, sideband),
        "trap_levels": trap_levels(n0, sideband, dim),
        "max_excited_after_reset": run.excited_after_reset.iter().copied().fold(0.0, f64::max),
        "max_trace_error": run.max_trace_error,
        "min_eigenvalue": run.min_eigenvalue,
    });
    let json = summary_json(ExperimentKind::Lindblad, &params, summary)?;
    Ok(outputs(
        ExperimentKind::Lindblad,
        vec![("lindblad_populations.csv".into(), pops.body)],
        csv,
        json,
    ))
}

/// One row of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub omega: f64,
    pub repetitions: u32,
    pub tv_ideal: f64,
    pub tv_analytic: f64,
    pub off_support_mass: f64,
    pub p_1: f64,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
}

fn check_axis<T>(name: &str, values: &[T]) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::Config(format!("key `{name}`: sweep axis is empty")));
    }
    Ok(())
}

/// Evaluates the Lindblad model on the Cartesian grid of the sweep axes.
///
/// Points sharing `(eta, omega)` reuse one run read out at each repetition
/// count. Rows are sorted by `(eta, omega, repetitions)`.
pub fn run_sweep_rows(config: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    let p = &config.parameters;
    let (spec, _) = resolve_thermal(p, ThermalSpec::Beta(DEFAULT_LINDBLAD_BETA))?;
    let n0 = p.n0.unwrap_or(DEFAULT_N0);
    let sideband = p.sideband.unwrap_or(Sideband::Rsb);
    let etas = p.sweep_eta.clone().unwrap_or_else(|| vec![p.eta.unwrap_or(DEFAULT_ETA)]);
    let omegas = p.sweep_omega.clone().unwrap_or_else(|| vec![p.omega.unwrap_or(DEFAULT_OMEGA)]);
    let mut reps = p
        .sweep_repetitions
        .clone()
        .unwrap_or_else(|| vec![p.repetitions.unwrap_or(DEFAULT_REPETITIONS)]);
    check_axis("eta", &etas)?;
    check_axis("omega", &omegas)?;
    check_axis("repetitions", &reps)?;
    reps.sort_unstable();
    reps.dedup();
    let max_reps = *reps.last().expect("axis checked non-empty");

    // validate every point before any expensive work
    let mut pairs: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
    for &eta in &etas {
        for &omega in &omegas {
            lindblad_point(n0, sideband, eta, omega, max_reps, p, spec)?;
            if reps[0] == 0 {
                return Err(CliError::Config("key `repetitions`: must be at least 1".into()));
            }
            pairs.insert((eta.to_bits(), omega.to_bits()), (eta, omega));
        }
    }
    let pairs: Vec<(f64, f64)> = pairs.into_values().collect();

    let eval = |&(eta, omega): &(f64, f64)| -> CliResult<Vec<SweepRow>> {
        let point = lindblad_point(n0, sideband, eta, omega, max_reps, p, spec)?;
        let rho0 = JointDensityMatrix::ground_with_populations(&point.p0);
        let run = CyclePropagators::new(&point.lindblad)?.run(&rho0, max_reps)?;
        let tv = compare_to_ideal(&run.history, &point.protocol, &point.p0)?;
        let analytic = trapped_state_analytic(&point.p0, n0, sideband)?;
        reps.iter()
            .map(|&r| {
                let h = &run.history[r as usize];
                Ok(SweepRow {
                    eta,
                    omega,
                    repetitions: r,
                    tv_ideal: tv[r as usize],
                    tv_analytic: h.tv_distance(&analytic)?,
                    off_support_mass: off_support_mass(h, n0, sideband),
                    p_1: h.get(1),
                    max_trace_error: run.max_trace_error,
                    min_eigenvalue: run.min_eigenvalue,
                })
            })
            .collect()
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = config.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| CliError::Config(format!("key `workers`: {e}")))?
    };
    let results: Vec<CliResult<Vec<SweepRow>>> = pool.install(|| pairs.par_iter().map(eval).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.eta
            .total_cmp(&b.eta)
            .then(a.omega.total_cmp(&b.omega))
            .then(a.repetitions.cmp(&b.repetitions))
    });
    Ok(rows)
}

/// Sweep experiment: `sweep.csv` with one row per grid point.
fn run_sweep(config: &ExperimentConfig) -> CliResult<Outputs> {
    let p = &config.parameters;
    let rows = run_sweep_rows(config)?;
    let (_, thermal) = resolve_thermal(p, ThermalSpec::Beta(DEFAULT_LINDBLAD_BETA))?;
    let sideband = p.sideband.unwrap_or(Sideband::Rsb);
    let gamma = p.gamma.unwrap_or(DEFAULT_GAMMA);
    let axis = |f: fn(&SweepRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let params = SweepParams {
        n0: p.n0.unwrap_or(DEFAULT_N0),
        sideband,
        delta: p.delta.unwrap_or(default_delta(sideband)),
        gamma,
        tau_decay: resolve_tau_decay(p, gamma),
        dim: p.dim.unwrap_or(14),
        thermal,
        eta: axis(|r| r.eta),
        omega: axis(|r| r.omega),
        repetitions: {
            let mut v: Vec<u32> = rows.iter().map(|r| r.repetitions).collect();
            v.sort_unstable();
            v.dedup();
            v
        },
    };
    let mut csv = Csv::new(&[
        "eta",
        "omega",
        "repetitions",
        "tv_ideal",
        "tv_analytic",
        "off_support_mass",
        "p_1",
        "max_trace_error",
        "min_eigenvalue",
    ]);
    for r in &rows {
        csv.row(&[
            fmt_f(r.eta),
            fmt_f(r.omega),
            r.repetitions.to_string(),
            fmt_f(r.tv_ideal),
            fmt_f(r.tv_analytic),
            fmt_f(r.off_support_mass),
            fmt_f(r.p_1),
            fmt_f(r.max_trace_error),
            fmt_f(r.min_eigenvalue),
        ]);
    }
    let json = summary_json(ExperimentKind::Sweep, &params, json!({ "points": rows.len() }))?;
    Ok(outputs(ExperimentKind::Sweep, vec![], csv, json))
}

/// Parses `args` (including the program name), runs the experiment and maps
/// the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match ExperimentConfig::from_command(&cli.command).and_then(|cfg| run_experiment(&cfg)) {
        Ok(paths) => {
            for path in paths {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spt-sim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
