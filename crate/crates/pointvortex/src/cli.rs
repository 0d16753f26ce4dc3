//! Command-line front end: TOML run configurations, JSON and JSON-lines
//! outputs, and the exit-code contract (0 success, 1 runtime failure,
//! 2 configuration error, 3 invariant violation).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    integrate, min_separation, DynamicsError, IntegratorOptions, Termination, VortexConfiguration,
};
use crate::greens::{DomainModel, DomainSpec, GreensError};
use crate::measure::{
    ensemble_statistics, sample_positions, verify_greens, verify_inequality_suite_with,
    verify_pointwise_bounds_with, EnsembleOptions, EnsembleReport, GreensReport, InequalityOptions,
    InequalityReport, KernelFault, MeasureError, PointwiseReport, Verdict,
};
use crate::regularization::{
    hamiltonian_reg, phi_eps, tau_eps_with, tau_termination, FunctionalParams, RegularizationError,
    RegularizedKernels,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "POINTVORTEX_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn greens_err(section: &str, e: GreensError) -> CliError {
    match e {
        GreensError::InvalidParameter(_) | GreensError::Map(_) | GreensError::DomainViolation { .. } => {
            CliError::Config(format!("{section}: {e}"))
        }
        other => CliError::Runtime(format!("{section}: {other}")),
    }
}

fn dynamics_err(section: &str, e: DynamicsError) -> CliError {
    match e {
        DynamicsError::ConfigurationInvalid(_) | DynamicsError::InvalidOptions(_) => {
            CliError::Config(format!("{section}: {e}"))
        }
        DynamicsError::Kernel(k) => greens_err(section, k),
    }
}

fn regularization_err(section: &str, e: RegularizationError) -> CliError {
    match e {
        RegularizationError::InvalidParameter(_) => CliError::Config(format!("{section}: {e}")),
        RegularizationError::Dynamics(d) => dynamics_err(section, d),
        other => CliError::Runtime(format!("{section}: {other}")),
    }
}

fn measure_err(section: &str, e: MeasureError) -> CliError {
    match e {
        MeasureError::InvalidParameter(_) => CliError::Config(format!("{section}: {e}")),
        MeasureError::BoundViolation { .. } | MeasureError::KernelCheck(_) => {
            CliError::Invariant(format!("{section}: {e}"))
        }
        MeasureError::Dynamics(d) => dynamics_err(section, d),
        MeasureError::Regularization(r) => regularization_err(section, r),
        MeasureError::Greens(g) => greens_err(section, g),
        MeasureError::Geometry(_) => CliError::Runtime(format!("{section}: {e}")),
    }
}

/// Vortex masses with either explicit positions or, when `positions` is
/// absent, positions drawn uniformly from the domain using the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub masses: Vec<f64>,
    #[serde(default)]
    pub positions: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub circulations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub eta: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            enabled: false,
            epsilon: 1e-2,
            eta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { horizon: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub count: usize,
    pub delta_grid: Vec<f64>,
    pub tau_epsilon: Option<f64>,
    pub histogram_bins: usize,
    /// Integrator tolerances for ensemble members (looser than single runs).
    pub rtol: f64,
    pub atol: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            count: 1000,
            delta_grid: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            tau_epsilon: None,
            histogram_bins: 20,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitySection {
    pub kappa: f64,
    pub levels: usize,
    pub base_samples: usize,
    pub epsilon_grid: Vec<f64>,
    pub n_vortices: usize,
    pub phi_samples: usize,
}

impl Default for InequalitySection {
    fn default() -> Self {
        let d = InequalityOptions::default();
        InequalitySection {
            kappa: d.kappa,
            levels: d.levels,
            base_samples: d.base_samples,
            epsilon_grid: d.epsilon_grid,
            n_vortices: d.n_vortices,
            phi_samples: d.phi_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("."),
            csv: true,
        }
    }
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSpec,
    #[serde(default)]
    pub vortices: Option<VortexSpec>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub inequalities: InequalitySection,
    #[serde(default = "default_bounds")]
    pub bounds: SampleSection,
    #[serde(default = "default_greens")]
    pub greens: SampleSection,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { sample_count: 10_000 }
    }
}

fn default_bounds() -> SampleSection {
    SampleSection { sample_count: 10_000 }
}

fn default_greens() -> SampleSection {
    SampleSection { sample_count: 1000 }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads and parses a configuration file. Returns the config and the
    /// SHA-256 of the file contents.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        Ok((cfg, sha256_hex(text.as_bytes())))
    }

    pub fn build_domain(&self) -> Result<DomainModel, CliError> {
        self.domain.build().map_err(|e| greens_err("domain", e))
    }

    /// The explicit vortex configuration, or one drawn from the domain.
    pub fn build_vortices(&self, domain: &DomainModel) -> Result<VortexConfiguration, CliError> {
        let spec = self
            .vortices
            .as_ref()
            .ok_or_else(|| CliError::Config("vortices: section is required for this command".into()))?;
        let circulations = spec
            .circulations
            .clone()
            .unwrap_or_else(|| vec![0.0; domain.hole_count()]);
        let positions = match &spec.positions {
            Some(p) => p.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
            None => {
                let (mut s, _) = sample_positions(domain, spec.masses.len(), 1, self.seed)
                    .map_err(|e| measure_err("vortices", e))?;
                s.remove(0)
            }
        };
        let x = VortexConfiguration::new(positions, spec.masses.clone(), circulations);
        x.validate(domain).map_err(|e| dynamics_err("vortices", e))?;
        Ok(x)
    }
}

fn strip_prefix(e: &CliError) -> String {
    match e {
        CliError::Config(s) | CliError::Invariant(s) | CliError::Runtime(s) => s.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// Positions flattened as `[x1, y1, x2, y2, ...]`.
    pub x: Vec<f64>,
    #[serde(rename = "H")]
    pub h: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

fn flatten(x: &[Complex64]) -> Vec<f64> {
    x.iter().flat_map(|p| [p.re, p.im]).collect()
}

/// How a command ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationSummary {
    pub cause: String,
    pub time: Option<f64>,
    pub detail: Option<String>,
}

impl TerminationSummary {
    fn completed(detail: Option<String>) -> Self {
        TerminationSummary {
            cause: "completed".into(),
            time: None,
            detail,
        }
    }

    fn from_run(t: &Termination, horizon: f64) -> Self {
        let (cause, detail) = match t {
            Termination::HorizonReached => ("horizon_reached", None),
            Termination::CollisionEvent { kind, .. } => ("collision_event", Some(format!("{kind:?}").to_lowercase())),
            Termination::ThresholdEvent { condition, .. } => ("threshold_event", Some(format!("condition {condition}"))),
            Termination::StepLimit { .. } => ("step_limit", None),
        };
        TerminationSummary {
            cause: cause.into(),
            time: Some(t.time(horizon)),
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub termination: TerminationSummary,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

/// Every JSON document written by the tool, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "document", rename_all = "snake_case")]
pub enum Document {
    Summary(RunSummary),
    Ensemble(EnsembleReport),
    Inequalities(InequalityReport),
    Bounds(PointwiseReport),
    Greens(GreensReport),
}

impl Document {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Runtime(format!("not a recognised document: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "pointvortex", version, about = "Point-vortex dynamics on planar domains")]
pub struct Cli {
    /// Worker threads for ensemble and verification commands.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    pub config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration and write a JSON-lines trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run the regularized flow up to its first threshold time.
        #[arg(long)]
        regularized: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Collapse statistics over uniformly sampled configurations.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Self-consistency checks of the domain kernels.
    VerifyGreens {
        #[command(flatten)]
        common: Common,
    },
    /// Quadrature of the singular coupling integrals.
    VerifyInequalities {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Pointwise distance-Robin and gradient bounds.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        /// Test hook: shift the Robin function by this constant.
        #[arg(long, hide = true)]
        fault_robin_shift: Option<f64>,
    },
    /// Summarise an output file; with `--check`, verify that it re-serializes
    /// byte for byte.
    Report {
        input: PathBuf,
        #[arg(long)]
        check: bool,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn worker_count(cli: &Cli) -> Result<usize, CliError> {
    match cli.workers {
        Some(0) => Err(CliError::Config("workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let workers = worker_count(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Report { input, check } => report(input, *check),
        cmd => {
            let ctx = Context::new(cmd, workers)?;
            match cmd {
                Command::Simulate {
                    regularized,
                    epsilon,
                    eta,
                    horizon,
                    ..
                } => simulate(ctx, *regularized, *epsilon, *eta, *horizon),
                Command::Ensemble { count, .. } => ensemble(ctx, *count),
                Command::VerifyGreens { .. } => greens(ctx),
                Command::VerifyInequalities { kappa, .. } => inequalities(ctx, *kappa),
                Command::VerifyBounds {
                    fault_robin_shift, ..
                } => bounds(ctx, fault_robin_shift.map(KernelFault::RobinShift)),
                Command::Report { .. } => unreachable!(),
            }
        }
    })
}

struct Context {
    name: &'static str,
    config: RunConfig,
    config_path: PathBuf,
    hash: String,
    out: PathBuf,
    workers: usize,
    start: Instant,
    outputs: Vec<String>,
}

impl Context {
    fn new(cmd: &Command, workers: usize) -> Result<Self, CliError> {
        let (name, common) = match cmd {
            Command::Simulate { common, .. } => ("simulate", common),
            Command::Ensemble { common, .. } => ("ensemble", common),
            Command::VerifyGreens { common } => ("verify-greens", common),
            Command::VerifyInequalities { common, .. } => ("verify-inequalities", common),
            Command::VerifyBounds { common, .. } => ("verify-bounds", common),
            Command::Report { .. } => unreachable!(),
        };
        let (mut config, hash) = RunConfig::load(&common.config)?;
        if let Some(s) = common.seed {
            config.seed = s;
        }
        let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
        fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        Ok(Context {
            name,
            config,
            config_path: common.config.clone(),
            hash,
            out,
            workers,
            start: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, file: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(file);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.outputs.push(file.to_string());
        Ok(())
    }

    fn finish(mut self, termination: TerminationSummary) -> Result<(), CliError> {
        let summary = RunSummary {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.name.into(),
            config_path: self.config_path.display().to_string(),
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            workers: self.workers,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            termination,
            outputs: self.outputs.clone(),
            config: self.config.clone(),
        };
        self.write("summary.json", &Document::Summary(summary).to_json())
    }
}

fn simulate(
    mut ctx: Context,
    regularized: bool,
    epsilon: Option<f64>,
    eta: Option<f64>,
    horizon: Option<f64>,
) -> Result<(), CliError> {
    let cfg = &mut ctx.config;
    if let Some(h) = horizon {
        cfg.run.horizon = h;
    }
    if regularized {
        cfg.regularization.enabled = true;
    }
    if let Some(e) = epsilon {
        cfg.regularization.epsilon = e;
    }
    if let Some(e) = eta {
        cfg.regularization.eta = e;
    }
    let cfg = ctx.config.clone();
    let domain = cfg.build_domain()?;
    let x0 = cfg.build_vortices(&domain)?;
    cfg.integrator.validate().map_err(|e| dynamics_err("integrator", e))?;
    let horizon = cfg.run.horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::Config(format!("run.horizon: must be positive, got {horizon}")));
    }

    let mut lines = String::new();
    let push = |lines: &mut String, r: &TrajectoryRecord| {
        lines.push_str(&serde_json::to_string(r).expect("records serialize"));
        lines.push('\n');
    };
    let termination = if cfg.regularization.enabled {
        let reg = &cfg.regularization;
        let kernels =
            RegularizedKernels::new(&domain, reg.epsilon).map_err(|e| regularization_err("regularization", e))?;
        let params = FunctionalParams::new(reg.eta).map_err(|e| regularization_err("regularization", e))?;
        let mut count = 0usize;
        let mut failure = None;
        let mut observe = |t: f64, x: &[Complex64]| {
            let keep = count.is_multiple_of(cfg.integrator.record_every);
            count += 1;
            if !keep {
                return;
            }
            let state = x0.with_positions(x.to_vec());
            match hamiltonian_reg(&kernels, &state) {
                Ok(h) => push(
                    &mut lines,
                    &TrajectoryRecord {
                        t,
                        x: flatten(x),
                        h,
                        d: min_separation(&domain, &state),
                        phi: Some(phi_eps(&kernels, &params, &state)),
                    },
                ),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        };
        let outcome = tau_eps_with(&kernels, &x0, horizon, &cfg.integrator, &mut observe)
            .map_err(|e| regularization_err("simulate", e))?;
        if let Some(e) = failure {
            return Err(dynamics_err("simulate", e));
        }
        TerminationSummary::from_run(&tau_termination(&outcome), horizon)
    } else {
        let traj = integrate(&domain, &x0, horizon, &cfg.integrator).map_err(|e| dynamics_err("simulate", e))?;
        for (i, t) in traj.times.iter().enumerate() {
            push(
                &mut lines,
                &TrajectoryRecord {
                    t: *t,
                    x: flatten(&traj.states[i].positions),
                    h: traj.hamiltonian_series[i],
                    d: traj.min_separation_series[i],
                    phi: None,
                },
            );
        }
        TerminationSummary::from_run(&traj.termination, horizon)
    };
    ctx.write("trajectory.jsonl", &lines)?;
    ctx.finish(termination)
}

fn ensemble(mut ctx: Context, count: Option<usize>) -> Result<(), CliError> {
    let cfg = ctx.config.clone();
    let domain = cfg.build_domain()?;
    let spec = cfg
        .vortices
        .as_ref()
        .ok_or_else(|| CliError::Config("vortices: section with masses is required".into()))?;
    if spec.positions.is_some() {
        return Err(CliError::Config(
            "vortices.positions: ensembles sample positions; remove this key".into(),
        ));
    }
    let es = &cfg.ensemble;
    let opts = EnsembleOptions {
        integrator: IntegratorOptions {
            rtol: es.rtol,
            atol: es.atol,
            ..cfg.integrator.clone()
        },
        circulations: spec.circulations.clone().unwrap_or_default(),
        tau_epsilon: es.tau_epsilon,
        histogram_bins: es.histogram_bins,
    };
    let report = ensemble_statistics(
        &domain,
        spec.masses.len(),
        &spec.masses,
        count.unwrap_or(es.count),
        cfg.run.horizon,
        &es.delta_grid,
        cfg.seed,
        &opts,
    )
    .map_err(|e| measure_err("ensemble", e))?;
    if cfg.output.csv {
        ctx.write("collapse.csv", &report.collapse_csv())?;
    }
    let failed = report.terminations.errors;
    ctx.write("ensemble.json", &Document::Ensemble(report).to_json())?;
    ctx.finish(TerminationSummary::completed(
        (failed > 0).then(|| format!("{failed} run(s) failed; see ensemble.json")),
    ))
}

fn greens(mut ctx: Context) -> Result<(), CliError> {
    let domain = ctx.config.build_domain()?;
    let report = verify_greens(&domain, ctx.config.greens.sample_count, ctx.config.seed)
        .map_err(|e| measure_err("greens", e))?;
    let passed = report.passed;
    ctx.write("greens.json", &Document::Greens(report).to_json())?;
    verdict(ctx, passed, "kernel self-checks exceeded their tolerances; see greens.json")
}

fn inequalities(mut ctx: Context, kappa: Option<f64>) -> Result<(), CliError> {
    if let Some(k) = kappa {
        ctx.config.inequalities.kappa = k;
    }
    let cfg = &ctx.config;
    let domain = cfg.build_domain()?;
    let s = &cfg.inequalities;
    let opts = InequalityOptions {
        kappa: s.kappa,
        levels: s.levels,
        base_samples: s.base_samples,
        epsilon_grid: s.epsilon_grid.clone(),
        eta: cfg.regularization.eta,
        n_vortices: s.n_vortices,
        phi_samples: s.phi_samples,
        seed: cfg.seed,
    };
    let report = verify_inequality_suite_with(&domain, &opts).map_err(|e| measure_err("inequalities", e))?;
    let ok = report.verdict == Verdict::Convergent && report.epsilon_uniform;
    ctx.write("inequalities.json", &Document::Inequalities(report).to_json())?;
    verdict(
        ctx,
        ok,
        "quadrature did not stabilise or regularized estimates are not epsilon-uniform; see inequalities.json",
    )
}

fn bounds(mut ctx: Context, fault: Option<KernelFault>) -> Result<(), CliError> {
    let domain = ctx.config.build_domain()?;
    match verify_pointwise_bounds_with(&domain, ctx.config.bounds.sample_count, ctx.config.seed, fault) {
        Ok(report) => {
            ctx.write("bounds.json", &Document::Bounds(report).to_json())?;
            verdict(ctx, true, "")
        }
        Err(MeasureError::BoundViolation { violations, report }) => {
            ctx.write("bounds.json", &Document::Bounds(*report).to_json())?;
            verdict(
                ctx,
                false,
                &format!("{violations} sample(s) violate ln d <= -2π gamma~; see bounds.json"),
            )
        }
        Err(e) => Err(measure_err("bounds", e)),
    }
}

fn verdict(ctx: Context, passed: bool, message: &str) -> Result<(), CliError> {
    if passed {
        ctx.finish(TerminationSummary::completed(None))
    } else {
        ctx.finish(TerminationSummary {
            cause: "invariant_violation".into(),
            time: None,
            detail: Some(message.into()),
        })?;
        Err(CliError::Invariant(message.into()))
    }
}

/// Re-serializes a trajectory or JSON document exactly as the tool writes it.
pub fn reserialize(text: &str, jsonl: bool) -> Result<String, CliError> {
    if jsonl {
        let mut out = String::with_capacity(text.len());
        for (i, line) in text.lines().enumerate() {
            let r: TrajectoryRecord = serde_json::from_str(line)
                .map_err(|e| CliError::Runtime(format!("line {}: {e}", i + 1)))?;
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        }
        Ok(out)
    } else {
        Ok(Document::from_json(text)?.to_json())
    }
}

fn report(input: &Path, check: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(|e| io_err(input, e))?;
    let jsonl = input.extension().is_some_and(|e| e == "jsonl");
    let again = reserialize(&text, jsonl).map_err(|e| CliError::Runtime(format!("{}: {}", input.display(), strip_prefix(&e))))?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", describe(&text, jsonl));
    if check {
        if again != text {
            return Err(CliError::Invariant(format!(
                "{} does not re-serialize byte for byte",
                input.display()
            )));
        }
        let _ = writeln!(out, "round trip: identical ({} bytes)", text.len());
    }
    Ok(())
}

fn describe(text: &str, jsonl: bool) -> String {
    if jsonl {
        let recs: Vec<TrajectoryRecord> = text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
        let (Some(first), Some(last)) = (recs.first(), recs.last()) else {
            return "empty trajectory".into();
        };
        let dmin = recs.iter().map(|r| r.d).fold(f64::INFINITY, f64::min);
        let drift = recs
            .iter()
            .map(|r| ((r.h - first.h) / first.h.abs().max(1e-300)).abs())
            .fold(0.0, f64::max);
        return format!(
            "trajectory: {} records, t in [{}, {}], min d = {dmin:.6e}, max relative H drift = {drift:.3e}",
            recs.len(),
            first.t,
            last.t
        );
    }
    match Document::from_json(text) {
        Ok(Document::Summary(s)) => format!(
            "{} {} `{}` seed {} config {}: {} after {:.3} s",
            s.tool, s.version, s.command, s.seed, &s.config_hash[..12.min(s.config_hash.len())], s.termination.cause, s.wall_clock_seconds
        ),
        Ok(Document::Ensemble(r)) => {
            let mut s = format!("ensemble on {}: {} samples, horizon {}", r.domain, r.sample_count, r.horizon);
            for e in &r.collapse_fraction {
                s.push_str(&format!(
                    "\n  delta {:>8.1e}: fraction {:.4} [{:.4}, {:.4}]",
                    e.delta, e.fraction, e.ci_low, e.ci_high
                ));
            }
            s
        }
        Ok(Document::Inequalities(r)) => format!(
            "inequalities on {} (kappa {}): {:?}, epsilon spread {:.3}/{:.3}",
            r.domain, r.kappa, r.verdict, r.epsilon_spread[0], r.epsilon_spread[1]
        ),
        Ok(Document::Bounds(r)) => format!(
            "bounds on {}: {} samples, {} violations, max gap {:.6}, max |grad|*d {:.6}",
            r.domain, r.sample_count, r.violations, r.max_gap, r.max_gradient_distance
        ),
        Ok(Document::Greens(r)) => format!(
            "greens on {}: {} (symmetry {:.1e}, boundary {:.1e}, gradient {:.1e})",
            r.domain,
            if r.passed { "passed" } else { "FAILED" },
            r.symmetry,
            r.boundary_value,
            r.gradient
        ),
        Err(e) => strip_prefix(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml("[domain]\nkind = \"disk\"\n").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.bounds.sample_count, 10_000);
        assert_eq!(c.greens.sample_count, 1000);
        assert!(c.vortices.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[domain]\nkind = \"disk\"\nradius = 2\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::from_toml("sed = 1\n[domain]\nkind = \"disk\"\n").unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
    }

    #[test]
    fn bad_annulus_is_a_config_error() {
        let c = RunConfig::from_toml("[domain]\nkind = \"annulus\"\nrho = 1.5\n").unwrap();
        let e = c.build_domain().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("0 < rho < 1"), "{e}");
    }

    #[test]
    fn records_round_trip() {
        let r = TrajectoryRecord {
            t: 0.1,
            x: vec![0.5, -0.25],
            h: -0.0123456789,
            d: 0.5,
            phi: None,
        };
        let line = serde_json::to_string(&r).unwrap() + "\n";
        assert_eq!(reserialize(&line, true).unwrap(), line);
    }
}
