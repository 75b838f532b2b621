//! Front end for synthesis, simulation and certificate checking.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 infeasible or
//! failed certificate, 3 numerical failure, 4 simulation divergence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use tspid_core::algorithms::{
    alpha_grid, check_certificate, lyapunov_for_gains, synthesize, AlgorithmError,
    CertificateReport, IterationTrace, PipelineError, Settings, SynthesisReport, Variant,
};
use tspid_core::fuzzy::{validate_model, ModelError, TsFuzzyModel};
use tspid_core::simulation::benchmarks::{benchmark_by_name, Benchmark, BENCHMARK_NAMES};
use tspid_core::simulation::{
    empirical_hinf, simulate, Disturbance, SimConfig, SimulationError, Trajectory,
};
use tspid_core::synthesis::{augment, pid_gains, PidPdcController};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TSPID_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "tspid",
    version,
    about = "H∞ PID PDC synthesis for Takagi–Sugeno fuzzy plants"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Synth,
    Simulate,
    Check,
    Validate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a certified controller by γ-bisection.
    Synth(Flags),
    /// Simulate the closed loop with and without disturbance.
    Simulate(Flags),
    /// Verify a controller and Lyapunov matrix on the weight grid.
    Check(Flags),
    /// Check model dimensions, rule count and weights.
    Validate(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSource {
    /// Gains reported for the benchmark.
    Reported,
    /// All gains zero (open loop).
    Zero,
}

#[derive(Debug, Clone, Default, clap::Args)]
#[command(allow_negative_numbers = true)]
pub struct Flags {
    /// Built-in benchmark: pendulum, duffing, tora, tora-kinematic.
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Model JSON file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON file with run settings; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Variant>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// `on`, `off`, `sine:AMPLITUDE:OMEGA[:PHASE]` or a JSON file.
    #[arg(long)]
    pub disturbance: Option<String>,
    /// Initial state for the undisturbed run, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Result file written by `synth`, the source of gains and X.
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Use built-in gains instead of a result file.
    #[arg(long, value_enum)]
    pub gains: Option<GainSource>,
    /// γ to certify; defaults to the result file's value.
    #[arg(long)]
    pub gamma: Option<f64>,
}

/// Optional settings read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub benchmark: Option<String>,
    pub model: Option<PathBuf>,
    pub algorithm: Option<Variant>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub disturbance: Option<Disturbance>,
    pub x0: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub result: Option<PathBuf>,
    pub gains: Option<GainSource>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub enum ModelSource {
    Benchmark(String),
    File(PathBuf),
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub source: ModelSource,
    #[serde(skip)]
    pub model: TsFuzzyModel,
    #[serde(skip)]
    pub benchmark: Option<Benchmark>,
    pub algorithm: Variant,
    pub tau: f64,
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub disturbance: Disturbance,
    pub x0: Vec<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub result: Option<PathBuf>,
    pub gains: Option<GainSource>,
    pub gamma: Option<f64>,
}

impl RunConfig {
    pub fn settings(&self) -> Settings {
        Settings {
            eps: self.eps,
            eta: self.eta,
            delta: self.delta,
            ..Settings::new(self.tau)
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_disturbance(spec: &str, default: &Disturbance) -> Result<Disturbance, CliError> {
    match spec {
        "on" => return Ok(default.clone()),
        "off" | "zero" => return Ok(Disturbance::Zero),
        _ => {}
    }
    if let Some(rest) = spec.strip_prefix("sine:") {
        let v: Vec<f64> = rest
            .split(':')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Config(format!("bad sine disturbance `{spec}`")))?;
        return match v[..] {
            [amplitude, angular_frequency] => Ok(Disturbance::sine(amplitude, angular_frequency)),
            [amplitude, angular_frequency, phase] => Ok(Disturbance::Sine {
                amplitude,
                angular_frequency,
                phase,
            }),
            _ => Err(CliError::Config(format!("bad sine disturbance `{spec}`"))),
        };
    }
    let path = Path::new(spec);
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Layers flags over the config file over the benchmark defaults.
pub fn resolve(command: CommandKind, flags: &Flags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(p) => {
            serde_json::from_str::<FileConfig>(&read_text(p)?).map_err(|e| CliError::Parse {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };
    let benchmark_name = flags.benchmark.clone().or(file.benchmark);
    let model_path = flags.model.clone().or(file.model);
    let (source, model, benchmark) = match (benchmark_name, model_path) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "give either --benchmark or --model, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "one of --benchmark or --model is required".into(),
            ))
        }
        (Some(name), None) => {
            let b = benchmark_by_name(&name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown benchmark `{name}`; expected one of {}",
                    BENCHMARK_NAMES.join(", ")
                ))
            })?;
            (ModelSource::Benchmark(name), b.model.clone(), Some(b))
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "model file not found: {}",
                    path.display()
                )));
            }
            let m = TsFuzzyModel::from_path(&path)?;
            (ModelSource::File(path), m, None)
        }
    };
    let tau = flags
        .tau
        .or(file.tau)
        .or(benchmark.as_ref().map(|b| b.tau))
        .ok_or_else(|| CliError::Config("--tau is required for model files".into()))?;
    let default_disturbance = benchmark
        .as_ref()
        .map_or(Disturbance::Zero, |b| b.disturbance.clone());
    let file_disturbance = file
        .disturbance
        .unwrap_or_else(|| default_disturbance.clone());
    let disturbance = match &flags.disturbance {
        Some(s) => parse_disturbance(s, &file_disturbance)?,
        None => file_disturbance,
    };
    let cfg = RunConfig {
        command,
        source,
        algorithm: flags
            .algorithm
            .or(file.algorithm)
            .unwrap_or(Variant::Spectral),
        tau,
        eta: flags.eta.or(file.eta).unwrap_or(0.01),
        eps: flags.eps.or(file.eps).unwrap_or(1e-5),
        delta: flags.delta.or(file.delta).unwrap_or(1e-6),
        dt: flags
            .dt
            .or(file.dt)
            .or(benchmark.as_ref().map(|b| b.dt))
            .unwrap_or(1e-3),
        horizon: flags
            .horizon
            .or(file.horizon)
            .or(benchmark.as_ref().map(|b| b.horizon))
            .unwrap_or(20.0),
        disturbance,
        x0: flags
            .x0
            .clone()
            .or(file.x0)
            .or(benchmark.as_ref().map(|b| b.x0.clone()))
            .unwrap_or_else(|| vec![0.0; model.nx()]),
        out: flags
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("tspid-out")),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        result: flags.result.clone().or(file.result),
        gains: flags.gains.or(file.gains),
        gamma: flags.gamma.or(file.gamma),
        model,
        benchmark,
    };
    if !(cfg.tau > 0.0) {
        return Err(CliError::Config(format!(
            "tau must be positive, got {}",
            cfg.tau
        )));
    }
    if !(cfg.eta > 0.0 && cfg.eta < 1.0) {
        return Err(CliError::Config(format!(
            "eta must lie in (0, 1), got {}",
            cfg.eta
        )));
    }
    if !(cfg.eps > 0.0) || !(cfg.delta > 0.0) || !(cfg.dt > 0.0) || !(cfg.horizon >= 0.0) {
        return Err(CliError::Config(
            "eps, delta and dt must be positive, horizon nonnegative".into(),
        ));
    }
    if cfg.x0.len() != cfg.model.nx() {
        return Err(CliError::Config(format!(
            "x0 has {} entries, the model has {} states",
            cfg.x0.len(),
            cfg.model.nx()
        )));
    }
    Ok(cfg)
}

/// The parts of a result file needed to reuse a controller.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredResult {
    pub optimal_gamma: f64,
    pub controller: PidPdcController,
    pub lyapunov_x: Vec<Vec<f64>>,
}

impl StoredResult {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn x(&self) -> DMatrix<f64> {
        let n = self.lyapunov_x.len();
        DMatrix::from_fn(n, n, |r, c| self.lyapunov_x[r][c])
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: CommandKind,
    config: &'a RunConfig,
    version: &'static str,
    started_unix: u64,
    wall_seconds: f64,
}

fn write_metadata(cfg: &RunConfig, started: Instant) -> Result<(), CliError> {
    let meta = Metadata {
        command: cfg.command,
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        started_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_text(&cfg.out.join("metadata.json"), &text)
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

/// Human-readable summary of a synthesis run.
pub fn render_report(cfg: &RunConfig, report: &SynthesisReport) -> String {
    let mut s = String::new();
    let name = match &cfg.source {
        ModelSource::Benchmark(n) => n.clone(),
        ModelSource::File(p) => p.display().to_string(),
    };
    let _ = writeln!(s, "model: {name}");
    let _ = writeln!(
        s,
        "algorithm: {}  tau: {}  eta: {}",
        report.algorithm, cfg.tau, cfg.eta
    );
    let _ = writeln!(s, "gamma: {:.6}", report.optimal_gamma);
    if let Some(g) = report.initial_gamma {
        let _ = writeln!(s, "initial gamma bound: {g:.6}");
    }
    let _ = writeln!(
        s,
        "bisection: {} rounds, interval [{:.6}, {:.6}]{}",
        report.bisection.rounds,
        report.bisection.gamma_l,
        report.bisection.gamma_u,
        if report.bisection.hit_round_cap {
            " (round cap hit)"
        } else {
            ""
        }
    );
    let _ = writeln!(
        s,
        "certificate: {} (max eigenvalue {:.3e} over {} points, min eig X {:.3e})",
        if report.certificate.pass {
            "pass"
        } else {
            "FAIL"
        },
        report.certificate.max_eigenvalue,
        report.certificate.points,
        report.certificate.min_eigenvalue_x
    );
    for (i, g) in report.controller.gains.iter().enumerate() {
        let _ = writeln!(s, "rule {}:", i + 1);
        let _ = writeln!(s, "  R_I = {}", fmt_matrix(&g.r_i));
        let _ = writeln!(s, "  R_D = {}", fmt_matrix(&g.r_d));
        let _ = writeln!(s, "  R_P = {}", fmt_matrix(&g.r_p));
        if let Ok(k) = pid_gains(g, report.controller.tau) {
            let _ = writeln!(
                s,
                "  K_P = {}  K_I = {}  K_D = {}",
                fmt_matrix(&k.k_p),
                fmt_matrix(&k.k_i),
                fmt_matrix(&k.k_d)
            );
        }
    }
    s
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<i32, CliError> {
    let started = Instant::now();
    prepare_out(&cfg.out)?;
    let plant = augment(&cfg.model);
    let outcome = synthesize(&plant, &cfg.model.c2, cfg.algorithm, &cfg.settings());
    let code = match outcome {
        Ok(report) => {
            write_trace(
                &cfg.out.join("trace_stabilizability.csv"),
                &report.stabilizability.trace,
            )?;
            for (k, res) in report.feasibility_results.iter().enumerate() {
                write_trace(&cfg.out.join(format!("trace_probe_{k:03}.csv")), &res.trace)?;
            }
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_text(&cfg.out.join("result.json"), &json)?;
            let text = render_report(cfg, &report);
            write_text(&cfg.out.join("report.txt"), &text)?;
            print!("{text}");
            if report.certificate.pass {
                EXIT_OK
            } else {
                EXIT_INFEASIBLE
            }
        }
        Err(e @ (PipelineError::NotStabilizable { .. } | PipelineError::NoInitialGamma)) => {
            if let PipelineError::NotStabilizable { stabilizability } = &e {
                write_trace(
                    &cfg.out.join("trace_stabilizability.csv"),
                    &stabilizability.trace,
                )?;
            }
            let text = format!("infeasible: {e}\n");
            write_text(&cfg.out.join("report.txt"), &text)?;
            eprint!("{text}");
            EXIT_INFEASIBLE
        }
        Err(PipelineError::Algorithm(e)) => {
            let text = format!("numerical failure: {e}\n");
            write_text(&cfg.out.join("report.txt"), &text)?;
            if let AlgorithmError::NumericalFailure { trace, .. } = &e {
                let path = cfg.out.join("trace_failed.csv");
                if let Ok(f) = fs::File::create(&path) {
                    let _ = trace.write_csv(f);
                }
            }
            eprint!("{text}");
            EXIT_NUMERICAL
        }
    };
    write_metadata(cfg, started)?;
    Ok(code)
}

fn write_trace(path: &Path, trace: &IterationTrace) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    trace.write_csv(file).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

/// Controller and optional Lyapunov matrix named by the config.
fn load_controller(
    cfg: &RunConfig,
) -> Result<(PidPdcController, Option<(DMatrix<f64>, f64)>), CliError> {
    if let Some(path) = &cfg.result {
        let r = StoredResult::load(path)?;
        let x = r.x();
        return Ok((r.controller, Some((x, r.optimal_gamma))));
    }
    let (l, nu, ny) = (cfg.model.rule_count(), cfg.model.nu(), cfg.model.ny());
    match cfg.gains {
        Some(GainSource::Zero) => Ok((PidPdcController::zeros(cfg.tau, l, nu, ny), None)),
        Some(GainSource::Reported) => {
            let b = cfg.benchmark.as_ref().ok_or_else(|| {
                CliError::Config("reported gains exist only for built-in benchmarks".into())
            })?;
            let mut c = b.reported.controller.clone();
            c.tau = cfg.tau;
            Ok((c, None))
        }
        None => Err(CliError::Config(
            "give --result FILE or --gains reported|zero".into(),
        )),
    }
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    traj.write_csv(file).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

/// Runs the undisturbed closed loop from `x0` and the disturbed one from rest.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32, CliError> {
    let started = Instant::now();
    prepare_out(&cfg.out)?;
    let (controller, _) = load_controller(cfg)?;
    let runs = [
        ("undisturbed", cfg.x0.clone(), Disturbance::Zero),
        (
            "disturbed",
            vec![0.0; cfg.model.nx()],
            cfg.disturbance.clone(),
        ),
    ];
    let mut code = EXIT_OK;
    let mut summary = String::new();
    for (name, x0, disturbance) in runs {
        let sim = SimConfig {
            x0,
            disturbance,
            dt: cfg.dt,
            horizon: cfg.horizon,
        };
        let path = cfg.out.join(format!("{name}.csv"));
        match simulate(&cfg.model, &controller, &sim) {
            Ok(traj) => {
                write_trajectory(&path, &traj)?;
                let _ = write!(
                    summary,
                    "{name}: final |x| = {:.6e}",
                    traj.final_state_norm()
                );
                match empirical_hinf(&traj) {
                    Ok(g) => {
                        let _ = writeln!(summary, ", empirical gain = {g:.6}");
                    }
                    Err(_) => summary.push('\n'),
                }
            }
            Err(SimulationError::Divergence { time, partial }) => {
                write_trajectory(&path, &partial)?;
                let _ = writeln!(summary, "{name}: diverged at t = {time}");
                code = EXIT_DIVERGED;
            }
            Err(e) => return Err(CliError::Config(e.to_string())),
        }
    }
    write_text(&cfg.out.join("simulation.txt"), &summary)?;
    print!("{summary}");
    write_metadata(cfg, started)?;
    Ok(code)
}

pub fn certificate_for(cfg: &RunConfig) -> Result<CertificateReport, CliError> {
    let plant = augment(&cfg.model);
    let (controller, stored) = load_controller(cfg)?;
    let settings = cfg.settings();
    let (x, gamma) = match stored {
        Some((x, g)) => (x, cfg.gamma.unwrap_or(g)),
        None => {
            let gamma = cfg.gamma;
            match lyapunov_for_gains(&plant, &controller, gamma, &settings) {
                Ok(Some(f)) => (f.x, gamma.unwrap_or(f.gamma)),
                // no Lyapunov matrix exists; check with X = I so the report shows why
                Ok(None) | Err(_) => (
                    DMatrix::identity(plant.nc(), plant.nc()),
                    gamma.unwrap_or(f64::INFINITY),
                ),
            }
        }
    };
    let grid = alpha_grid(plant.rule_count());
    let g = gamma.is_finite().then_some(gamma);
    check_certificate(&plant, &x, &controller, g, &grid, cfg.delta)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_check(cfg: &RunConfig) -> Result<i32, CliError> {
    let started = Instant::now();
    prepare_out(&cfg.out)?;
    let cert = certificate_for(cfg)?;
    let text = format!(
        "certificate: {}\ngamma: {}\nmax eigenvalue: {:.6e} at alpha = {:?}\nmin eigenvalue of X: {:.6e}\ngrid points: {}\n",
        if cert.pass { "pass" } else { "fail" },
        cert.gamma.map_or("none".to_string(), |g| g.to_string()),
        cert.max_eigenvalue,
        cert.worst_alpha,
        cert.min_eigenvalue_x,
        cert.points
    );
    write_text(&cfg.out.join("certificate.txt"), &text)?;
    print!("{text}");
    write_metadata(cfg, started)?;
    Ok(if cert.pass { EXIT_OK } else { EXIT_INFEASIBLE })
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<i32, CliError> {
    let report = validate_model(&cfg.model);
    if report.is_empty() {
        println!("model is valid");
        return Ok(EXIT_OK);
    }
    for f in &report.findings {
        println!("{f}");
    }
    Ok(if report.has_dimension_findings() {
        EXIT_CONFIG
    } else {
        EXIT_INFEASIBLE
    })
}

/// Parses nothing; dispatches an already parsed command line.
pub fn run(cli: Cli) -> i32 {
    let (kind, flags) = match &cli.command {
        Command::Synth(f) => (CommandKind::Synth, f),
        Command::Simulate(f) => (CommandKind::Simulate, f),
        Command::Check(f) => (CommandKind::Check, f),
        Command::Validate(f) => (CommandKind::Validate, f),
    };
    let result = resolve(kind, flags).and_then(|cfg| match kind {
        CommandKind::Synth => cmd_synth(&cfg),
        CommandKind::Simulate => cmd_simulate(&cfg),
        CommandKind::Check => cmd_check(&cfg),
        CommandKind::Validate => cmd_validate(&cfg),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
