//! Command-line front end for the liquidation solvers and the order-flow
//! simulator. Configuration comes from an optional JSON file plus flag
//! overrides (precedence: flags > file > defaults); every artifact embeds
//! the resolved config and the code version in a provenance header so
//! re-running a command byte-reproduces its numeric outputs.

#![warn(missing_docs)]

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use exec_core::base::{lower_bound, solve_base, thresholds, upper_bound};
use exec_core::continuous::{approximate_discrete, solve_continuous};
use exec_core::markov::solve_markov;
use exec_core::model::{Belief, DepthFunction, ModelConfig, RegimeModel};
use exec_core::partial::solve_partial;
use exec_core::sim::{
    count_distribution, execute_batch, summarize, write_records_csv, PolicyRef, RunSpec, StartState,
};
use serde::{Deserialize, Serialize};

/// Bundled three-regime demo model: the reference-table setup with
/// moderately persistent regimes and zero-truncated Poisson order sizes.
pub const DEMO_MODEL_JSON: &str = include_str!("../demo_model.json");

/// Process exit codes, one per failure class.
pub mod exit_code {
    /// Success.
    pub const OK: i32 = 0;
    /// Invalid configuration: bad field values, model validation, grid
    /// mismatch, malformed input files.
    pub const CONFIG: i32 = 2;
    /// A numeric guard tripped during computation.
    pub const NUMERIC: i32 = 3;
    /// File-system failure.
    pub const IO: i32 = 4;
    /// The `--command` value is not one of the known commands.
    pub const UNKNOWN_COMMAND: i32 = 5;
}

const EXIT_HELP: &str = "Exit codes: 0 ok, 2 invalid config, 3 numeric guard, 4 I/O, \
                         5 unknown command.\nEnv: EXEC_SOLVER_THREADS caps simulator \
                         parallelism.";

/// Flag surface. Every flag overrides the matching `--config` file field.
#[derive(Parser, Debug, Clone, Default)]
#[command(name = "exec-solver", version, after_help = EXIT_HELP)]
#[command(
    about = "Optimal-liquidation solvers and Monte Carlo simulator for discrete \
                   order flow"
)]
pub struct Cli {
    /// JSON run configuration file (flags override its fields).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One of: solve-base, solve-markov, solve-partial, continuous, bounds,
    /// simulate, reproduce-table1, diff-surfaces.
    #[arg(long)]
    pub command: Option<String>,
    /// Output directory for artifacts (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed for simulator commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time step of the value recursion.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Belief-mesh spacing for solve-partial.
    #[arg(long = "mesh-h")]
    pub mesh_h: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long = "paths")]
    pub n_paths: Option<usize>,
    /// Cap each trade at the arriving order's size.
    #[arg(long)]
    pub constrained: Option<bool>,
    /// Suppress the stdout summary (artifacts are still written).
    #[arg(long)]
    pub quiet: bool,
    /// First surface CSV for diff-surfaces.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second surface CSV for diff-surfaces.
    #[arg(long)]
    pub b: Option<PathBuf>,
}

/// The work a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Single-regime value/action surface.
    SolveBase,
    /// Fully observed regime-switching surface.
    SolveMarkov,
    /// Partially observed surface on a belief mesh.
    SolvePartial,
    /// Scaling-limit profiles u(T) and a(T).
    Continuous,
    /// Genie lower / constant-strategy upper bounds from simulated counts.
    Bounds,
    /// Simulate order flow and execute the optimal policy.
    Simulate,
    /// Recompute the published reference table with per-cell errors.
    ReproduceTable1,
    /// Compare two exported surface CSVs node by node.
    DiffSurfaces,
}

impl Command {
    /// Parse a command name; `None` if unknown.
    pub fn parse(name: &str) -> Option<Command> {
        Some(match name {
            "solve-base" => Command::SolveBase,
            "solve-markov" => Command::SolveMarkov,
            "solve-partial" => Command::SolvePartial,
            "continuous" => Command::Continuous,
            "bounds" => Command::Bounds,
            "simulate" => Command::Simulate,
            "reproduce-table1" => Command::ReproduceTable1,
            "diff-surfaces" => Command::DiffSurfaces,
            _ => return None,
        })
    }

    /// Canonical command name.
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveBase => "solve-base",
            Command::SolveMarkov => "solve-markov",
            Command::SolvePartial => "solve-partial",
            Command::Continuous => "continuous",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::ReproduceTable1 => "reproduce-table1",
            Command::DiffSurfaces => "diff-surfaces",
        }
    }
}

/// Depth-function override: `F(a) = coefficient · a^gamma`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DepthParams {
    /// Multiplicative coefficient (`> 0`).
    pub coefficient: f64,
    /// Convexity exponent (`> 1`).
    pub gamma: f64,
}

/// Config-file schema; every field is optional and defaulted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Command name.
    pub command: Option<String>,
    /// Path to a model JSON (bundled demo model when absent).
    pub model: Option<PathBuf>,
    /// Depth-function override (the model file's depth otherwise).
    pub depth: Option<DepthParams>,
    /// Initial inventory.
    pub k: Option<usize>,
    /// Deadline / largest time-to-maturity.
    pub t_max: Option<f64>,
    /// Recursion time step.
    pub dt: Option<f64>,
    /// Belief-mesh spacing.
    pub mesh_h: Option<f64>,
    /// Cap trades at the arriving order size.
    pub constrained: Option<bool>,
    /// Simulator seed.
    pub seed: Option<u64>,
    /// Monte Carlo path count.
    pub n_paths: Option<usize>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// First surface for diff-surfaces.
    pub surface_a: Option<PathBuf>,
    /// Second surface for diff-surfaces.
    pub surface_b: Option<PathBuf>,
}

/// Fully resolved run configuration; serialized into provenance headers.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Command to run.
    pub command: Command,
    /// Model JSON path; bundled demo model when absent.
    pub model: Option<PathBuf>,
    /// Depth-function override.
    pub depth: Option<DepthParams>,
    /// Initial inventory.
    pub k: usize,
    /// Deadline / largest time-to-maturity.
    pub t_max: f64,
    /// Recursion time step.
    pub dt: f64,
    /// Belief-mesh spacing.
    pub mesh_h: f64,
    /// Cap trades at the arriving order size.
    pub constrained: bool,
    /// Simulator seed.
    pub seed: u64,
    /// Monte Carlo path count.
    pub n_paths: usize,
    /// Output directory.
    pub out: PathBuf,
    /// First surface for diff-surfaces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_a: Option<PathBuf>,
    /// Second surface for diff-surfaces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_b: Option<PathBuf>,
}

/// A failure with its process exit code and a machine-readable class.
#[derive(Debug)]
pub struct CliError {
    /// Process exit code (see [`exit_code`]).
    pub exit_code: i32,
    /// Stable failure class for scripts.
    pub kind: &'static str,
    /// Human-readable detail.
    pub detail: String,
}

impl CliError {
    fn config(detail: impl Into<String>) -> Self {
        CliError {
            exit_code: exit_code::CONFIG,
            kind: "invalid-config",
            detail: detail.into(),
        }
    }

    fn io(detail: impl Into<String>) -> Self {
        CliError {
            exit_code: exit_code::IO,
            kind: "io",
            detail: detail.into(),
        }
    }

    fn unknown_command(name: &str) -> Self {
        CliError {
            exit_code: exit_code::UNKNOWN_COMMAND,
            kind: "unknown-command",
            detail: format!(
                "unknown command {name:?}; expected one of solve-base, solve-markov, \
                 solve-partial, continuous, bounds, simulate, reproduce-table1, diff-surfaces"
            ),
        }
    }

    /// Machine-readable error report (one JSON object).
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.exit_code,
            "detail": self.detail,
        })
        .to_string()
    }
}

impl From<exec_core::Error> for CliError {
    fn from(e: exec_core::Error) -> Self {
        match e {
            exec_core::Error::NumericGuard(d) => CliError {
                exit_code: exit_code::NUMERIC,
                kind: "numeric-guard",
                detail: d,
            },
            exec_core::Error::Io(io) => CliError::io(io.to_string()),
            other => CliError::config(other.to_string()),
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

/// Merge flags over the config file over defaults.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file: RunConfigFile = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => RunConfigFile::default(),
    };
    let name = cli
        .command
        .clone()
        .or(file.command)
        .ok_or_else(|| CliError::config("no command given (use --command or a config file)"))?;
    let command = Command::parse(&name).ok_or_else(|| CliError::unknown_command(&name))?;
    Ok(RunConfig {
        command,
        model: file.model,
        depth: file.depth,
        k: file.k.unwrap_or(20),
        t_max: file.t_max.unwrap_or(1.0),
        dt: cli.dt.or(file.dt).unwrap_or(0.01),
        mesh_h: cli.mesh_h.or(file.mesh_h).unwrap_or(0.05),
        constrained: cli.constrained.or(file.constrained).unwrap_or(false),
        seed: cli.seed.or(file.seed).unwrap_or(12345),
        n_paths: cli.n_paths.or(file.n_paths).unwrap_or(100_000),
        out: cli
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        surface_a: cli.a.clone().or(file.surface_a),
        surface_b: cli.b.clone().or(file.surface_b),
    })
}

/// Reject out-of-range numerics before any compute starts.
fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.k == 0 {
        return Err(CliError::config("k must be at least 1"));
    }
    if !(cfg.t_max.is_finite() && cfg.t_max > 0.0) {
        return Err(CliError::config(format!(
            "t_max must be positive, got {}",
            cfg.t_max
        )));
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0 && cfg.dt <= cfg.t_max) {
        return Err(CliError::config(format!(
            "dt must lie in (0, t_max], got {}",
            cfg.dt
        )));
    }
    if !(cfg.mesh_h.is_finite() && cfg.mesh_h > 0.0 && cfg.mesh_h <= 1.0) {
        return Err(CliError::config(format!(
            "mesh_h must lie in (0, 1], got {}",
            cfg.mesh_h
        )));
    }
    if let Some(d) = cfg.depth {
        if !(d.coefficient.is_finite() && d.coefficient > 0.0) {
            return Err(CliError::config("depth coefficient must be positive"));
        }
        if !(d.gamma.is_finite() && d.gamma > 1.0) {
            return Err(CliError::config("depth exponent must exceed 1"));
        }
    }
    let needs_paths = matches!(
        cfg.command,
        Command::Bounds | Command::Simulate | Command::ReproduceTable1
    );
    if needs_paths && cfg.n_paths == 0 {
        return Err(CliError::config("n_paths must be at least 1"));
    }
    if cfg.command == Command::DiffSurfaces && (cfg.surface_a.is_none() || cfg.surface_b.is_none())
    {
        return Err(CliError::config(
            "diff-surfaces needs --a and --b surface paths",
        ));
    }
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("EXEC_SOLVER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::config(format!("EXEC_SOLVER_THREADS must be a count, got {raw:?}"))
    })?;
    if n == 0 {
        return Err(CliError::config("EXEC_SOLVER_THREADS must be at least 1"));
    }
    static POOL: std::sync::Once = std::sync::Once::new();
    POOL.call_once(|| {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    });
    Ok(())
}

/// Depth function and regime model for a run: the configured model file or
/// the bundled demo model, with the depth override applied on top.
fn load_model(cfg: &RunConfig) -> Result<(DepthFunction, RegimeModel), CliError> {
    let text = match &cfg.model {
        Some(path) => fs::read_to_string(path).map_err(io_at(path))?,
        None => DEMO_MODEL_JSON.to_string(),
    };
    let parsed = ModelConfig::from_json(&text)?;
    let (mut depth, model) = parsed.build()?;
    if let Some(d) = cfg.depth {
        depth = DepthFunction::new(d.coefficient, d.gamma)?;
    }
    Ok((depth, model))
}

fn provenance(cfg: &RunConfig) -> String {
    format!(
        "exec-solver v{} config={}",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(cfg).expect("config serializes")
    )
}

fn model_label(cfg: &RunConfig) -> String {
    match &cfg.model {
        Some(p) => p.display().to_string(),
        None => "bundled demo model".into(),
    }
}

/// Create the output directory and open `name` inside it for writing.
fn create_artifact(
    cfg: &RunConfig,
    name: &str,
) -> Result<(PathBuf, BufWriter<fs::File>), CliError> {
    fs::create_dir_all(&cfg.out).map_err(io_at(&cfg.out))?;
    let path = cfg.out.join(name);
    let file = fs::File::create(&path).map_err(io_at(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn depth_label(depth: &DepthFunction) -> String {
    format!("F(a) = {}·a^{}", depth.coefficient(), depth.gamma())
}

/// Parse flags, run the command, and report: the printed summary on
/// success, a classified error otherwise.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    init_threads()?;
    let cfg = resolve(cli)?;
    validate(&cfg)?;
    match cfg.command {
        Command::SolveBase => cmd_solve_base(&cfg),
        Command::SolveMarkov => cmd_solve_markov(&cfg),
        Command::SolvePartial => cmd_solve_partial(&cfg),
        Command::Continuous => cmd_continuous(&cfg),
        Command::Bounds => cmd_bounds(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::ReproduceTable1 => cmd_reproduce_table1(&cfg),
        Command::DiffSurfaces => cmd_diff_surfaces(&cfg),
    }
}

fn summary_header(cfg: &RunConfig, body: &mut String) {
    use std::fmt::Write as _;
    writeln!(
        body,
        "exec-solver v{} — {}",
        env!("CARGO_PKG_VERSION"),
        cfg.command.name()
    )
    .unwrap();
}

// ------------------------------------------------------------ commands

fn cmd_solve_base(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    // with no model file the single-regime solver defaults to unit-rate
    // Poisson flow rather than the three-regime demo model
    let (depth, lambda) = match &cfg.model {
        None => {
            let depth = match cfg.depth {
                Some(d) => DepthFunction::new(d.coefficient, d.gamma)?,
                None => DepthFunction::quadratic(),
            };
            (depth, 1.0)
        }
        Some(_) => {
            let (depth, model) = load_model(cfg)?;
            if model.num_regimes() != 1 {
                return Err(CliError::config(
                    "solve-base needs a single-regime model; use solve-markov",
                ));
            }
            (depth, model.intensity(0))
        }
    };
    let clock = Instant::now();
    let surface = solve_base(lambda, &depth, cfg.k, cfg.t_max, cfg.dt)?;
    let secs = clock.elapsed().as_secs_f64();
    let (path, mut w) = create_artifact(cfg, "base_surface.csv")?;
    surface
        .write_csv(&mut w, &provenance(cfg))
        .map_err(io_at(&path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "model: Poisson flow, λ = {lambda}   depth: {}",
        depth_label(&depth)
    )
    .unwrap();
    writeln!(s, "grid: K={}  T_max={}  Δt={}", cfg.k, cfg.t_max, cfg.dt).unwrap();
    writeln!(
        s,
        "value v({}, {}) = {:.4}   first trade a = {}",
        cfg.k,
        cfg.t_max,
        surface.value(cfg.k, surface.n_steps()),
        surface.action(cfg.k, surface.n_steps())
    )
    .unwrap();
    let cuts = thresholds(&surface, cfg.k);
    if !cuts.is_empty() {
        let shown: Vec<String> = cuts.iter().take(6).map(|t| format!("{t:.3}")).collect();
        writeln!(s, "action thresholds for k={}: {}", cfg.k, shown.join(", ")).unwrap();
    }
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(s, "runtime: {secs:.3}s").unwrap();
    Ok(s)
}

fn cmd_solve_markov(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (depth, model) = load_model(cfg)?;
    let clock = Instant::now();
    let surface = solve_markov(&model, &depth, cfg.k, cfg.t_max, cfg.dt, cfg.constrained)?;
    let secs = clock.elapsed().as_secs_f64();
    let (path, mut w) = create_artifact(cfg, "regime_surface.csv")?;
    surface
        .write_csv(&mut w, &provenance(cfg))
        .map_err(io_at(&path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "model: {}   depth: {}",
        model_label(cfg),
        depth_label(&depth)
    )
    .unwrap();
    writeln!(
        s,
        "grid: K={}  T_max={}  Δt={}  constrained={}",
        cfg.k, cfg.t_max, cfg.dt, cfg.constrained
    )
    .unwrap();
    let j = surface.n_steps();
    for i in 0..model.num_regimes() {
        writeln!(
            s,
            "regime {}: v({}, {}) = {:.4}   a = {}",
            i + 1,
            cfg.k,
            cfg.t_max,
            surface.value(i, cfg.k, j),
            surface.action(i, cfg.k, j)
        )
        .unwrap();
    }
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(s, "runtime: {secs:.3}s").unwrap();
    Ok(s)
}

fn cmd_solve_partial(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (depth, model) = load_model(cfg)?;
    let clock = Instant::now();
    let surface = solve_partial(
        &model,
        &depth,
        cfg.k,
        cfg.t_max,
        cfg.dt,
        cfg.mesh_h,
        cfg.constrained,
    )?;
    let secs = clock.elapsed().as_secs_f64();
    let (path, mut w) = create_artifact(cfg, "belief_surface.csv")?;
    surface
        .write_csv(&mut w, &provenance(cfg))
        .map_err(io_at(&path))?;

    let m = model.num_regimes();
    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "model: {}   depth: {}",
        model_label(cfg),
        depth_label(&depth)
    )
    .unwrap();
    writeln!(
        s,
        "grid: K={}  T_max={}  Δt={}  mesh h={} ({} nodes)  constrained={}",
        cfg.k,
        cfg.t_max,
        cfg.dt,
        cfg.mesh_h,
        surface.mesh().num_nodes(),
        cfg.constrained
    )
    .unwrap();
    for i in 0..m {
        let v = surface.value_at(cfg.k, cfg.t_max, &Belief::corner(m, i))?;
        writeln!(s, "corner {}: v({}, {}) = {v:.4}", i + 1, cfg.k, cfg.t_max).unwrap();
    }
    let v = surface.value_at(cfg.k, cfg.t_max, &Belief::uniform(m))?;
    writeln!(s, "uniform prior: v({}, {}) = {v:.4}", cfg.k, cfg.t_max).unwrap();
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(s, "runtime: {secs:.3}s").unwrap();
    Ok(s)
}

fn cmd_continuous(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (depth, lambda) = match &cfg.model {
        None => {
            let depth = match cfg.depth {
                Some(d) => DepthFunction::new(d.coefficient, d.gamma)?,
                None => DepthFunction::quadratic(),
            };
            (depth, 1.0)
        }
        Some(_) => {
            let (depth, model) = load_model(cfg)?;
            if model.num_regimes() != 1 {
                return Err(CliError::config(
                    "the continuous limit needs a single arrival intensity",
                ));
            }
            (depth, model.intensity(0))
        }
    };
    let clock = Instant::now();
    let solution = solve_continuous(lambda, depth.gamma(), cfg.t_max, cfg.dt)?;
    let secs = clock.elapsed().as_secs_f64();
    let (path, mut w) = create_artifact(cfg, "continuous_profile.csv")?;
    solution
        .write_csv(&mut w, &provenance(cfg))
        .map_err(io_at(&path))?;

    let u = solution.u_at(cfg.t_max)?;
    let a = solution.a_at(cfg.t_max)?;
    let (v_approx, a_int) = approximate_discrete(&solution, &depth, cfg.k, cfg.t_max)?;
    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(s, "flow: λ = {lambda}   depth: {}", depth_label(&depth)).unwrap();
    writeln!(s, "grid: T_max={}  Δt={}", cfg.t_max, cfg.dt).unwrap();
    writeln!(
        s,
        "u({}) = {u:.6}   sale fraction a({}) = {a:.6}",
        cfg.t_max, cfg.t_max
    )
    .unwrap();
    writeln!(
        s,
        "large-inventory approximation at k={}: v ≈ F(k)·u = {v_approx:.4}, trade ≈ {a_int}",
        cfg.k
    )
    .unwrap();
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(s, "runtime: {secs:.3}s").unwrap();
    Ok(s)
}

/// The demo starting distributions: one corner per regime, then uniform
/// (only the corner for single-regime models).
fn start_states(m: usize) -> Vec<(String, StartState)> {
    let mut out: Vec<(String, StartState)> = (0..m)
        .map(|i| (format!("regime-{}", i + 1), StartState::Regime(i)))
        .collect();
    if m > 1 {
        out.push(("uniform".into(), StartState::Mixed(Belief::uniform(m))));
    }
    out
}

fn cmd_bounds(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (depth, model) = load_model(cfg)?;
    let clock = Instant::now();
    let mut rows = Vec::new();
    for (idx, (label, start)) in start_states(model.num_regimes()).into_iter().enumerate() {
        let counts = count_distribution(
            &model,
            cfg.t_max,
            &start,
            cfg.n_paths,
            cfg.seed + idx as u64,
        )?;
        let lb = lower_bound(&counts, &depth, cfg.k)?;
        let (ub, c_star) = upper_bound(&counts, &depth, cfg.k)?;
        rows.push((label, lb, ub, c_star));
    }
    let secs = clock.elapsed().as_secs_f64();

    let (path, mut w) = create_artifact(cfg, "bounds.csv")?;
    (|| -> std::io::Result<()> {
        writeln!(w, "# {}", provenance(cfg))?;
        writeln!(w, "start,lower,lower_se,upper,upper_se,c_star")?;
        for (label, lb, ub, c_star) in &rows {
            writeln!(
                w,
                "{label},{},{},{},{},{c_star}",
                lb.value,
                lb.std_error.unwrap_or(f64::NAN),
                ub.value,
                ub.std_error.unwrap_or(f64::NAN)
            )?;
        }
        Ok(())
    })()
    .map_err(io_at(&path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "model: {}   depth: {}",
        model_label(cfg),
        depth_label(&depth)
    )
    .unwrap();
    writeln!(
        s,
        "K={}  T_max={}  paths={}  seed={}",
        cfg.k, cfg.t_max, cfg.n_paths, cfg.seed
    )
    .unwrap();
    for (label, lb, ub, c_star) in &rows {
        writeln!(
            s,
            "{label:>9}: genie lower {:.3} ± {:.3}   constant-{c_star} upper {:.3} ± {:.3}",
            lb.value,
            lb.std_error.unwrap_or(f64::NAN),
            ub.value,
            ub.std_error.unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(s, "runtime: {secs:.3}s").unwrap();
    Ok(s)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let (depth, model) = load_model(cfg)?;
    let clock = Instant::now();
    let surface = solve_markov(&model, &depth, cfg.k, cfg.t_max, cfg.dt, cfg.constrained)?;
    let solve_secs = clock.elapsed().as_secs_f64();
    let spec = RunSpec {
        k: cfg.k,
        t_max: cfg.t_max,
        start: StartState::Regime(0),
        constrained: cfg.constrained,
        filter_start: None,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    };
    let clock = Instant::now();
    let records = execute_batch(&model, &PolicyRef::Regime(&surface), &depth, &spec)?;
    let estimate = summarize(&records);
    let mc_secs = clock.elapsed().as_secs_f64();
    let v = surface.value(0, cfg.k, surface.n_steps());

    let (paths_csv, mut w) = create_artifact(cfg, "paths.csv")?;
    write_records_csv(&records, cfg.seed, &mut w, &provenance(cfg)).map_err(io_at(&paths_csv))?;
    // JSON artifacts carry provenance as a field: a comment line would
    // break strict parsers
    #[derive(Serialize)]
    struct McSummaryOut<'a> {
        provenance: String,
        solver_value: f64,
        #[serde(flatten)]
        estimate: &'a exec_core::sim::McEstimate,
    }
    let (json_path, mut w) = create_artifact(cfg, "mc_summary.json")?;
    let out = McSummaryOut {
        provenance: provenance(cfg),
        solver_value: v,
        estimate: &estimate,
    };
    w.write_all(
        serde_json::to_string_pretty(&out)
            .expect("summary serializes")
            .as_bytes(),
    )
    .and_then(|_| writeln!(w))
    .map_err(io_at(&json_path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "model: {}   depth: {}",
        model_label(cfg),
        depth_label(&depth)
    )
    .unwrap();
    writeln!(
        s,
        "K={}  T_max={}  Δt={}  constrained={}  start=regime-1  paths={}  seed={}",
        cfg.k, cfg.t_max, cfg.dt, cfg.constrained, cfg.n_paths, cfg.seed
    )
    .unwrap();
    match estimate.std_error() {
        Some(se) => {
            writeln!(s, "mean cost {:.4} ± {se:.4} (s.e.)", estimate.mean()).unwrap();
            writeln!(
                s,
                "solver value {v:.4}; gap {:+.4} ({:+.2} s.e.)",
                estimate.mean() - v,
                (estimate.mean() - v) / se
            )
            .unwrap();
        }
        None => {
            writeln!(
                s,
                "mean cost {:.4} (single path, s.e. undefined)",
                estimate.mean()
            )
            .unwrap();
            writeln!(s, "solver value {v:.4}").unwrap();
        }
    }
    writeln!(
        s,
        "artifacts: {}, {}",
        paths_csv.display(),
        json_path.display()
    )
    .unwrap();
    writeln!(s, "runtime: solve {solve_secs:.3}s, simulate {mc_secs:.3}s").unwrap();
    Ok(s)
}

// --------------------------------------------------- reference table

const TABLE1_LOWER: [f64; 4] = [73.16, 84.26, 98.94, 85.46];
const TABLE1_UPPER: [f64; 4] = [83.31, 93.50, 107.11, 94.64];
const TABLE1_FULL_V: [f64; 3] = [77.80, 88.36, 102.22];
const TABLE1_FULL_VC: [f64; 3] = [83.54, 98.97, 114.25];
const TABLE1_PART_V: [f64; 4] = [78.70, 90.49, 103.03, 89.21];
const TABLE1_PART_VC: [f64; 4] = [86.20, 103.14, 119.05, 102.73];

struct TableCell {
    block: &'static str,
    start: String,
    column: &'static str,
    value: f64,
    reference: f64,
}

impl TableCell {
    fn rel_err_pct(&self) -> f64 {
        100.0 * (self.value - self.reference) / self.reference
    }
}

fn cmd_reproduce_table1(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    if cfg.model.is_some() {
        return Err(CliError::config(
            "reproduce-table1 always uses the bundled demo model; drop the model field",
        ));
    }
    let (depth, model) = load_model(cfg)?;

    let clock = Instant::now();
    let unc = solve_markov(&model, &depth, cfg.k, cfg.t_max, cfg.dt, false)?;
    let con = solve_markov(&model, &depth, cfg.k, cfg.t_max, cfg.dt, true)?;
    let full_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let part_unc = solve_partial(&model, &depth, cfg.k, cfg.t_max, cfg.dt, cfg.mesh_h, false)?;
    let part_con = solve_partial(&model, &depth, cfg.k, cfg.t_max, cfg.dt, cfg.mesh_h, true)?;
    let partial_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    for (idx, (_, start)) in start_states(3).into_iter().enumerate() {
        let counts = count_distribution(
            &model,
            cfg.t_max,
            &start,
            cfg.n_paths,
            cfg.seed + idx as u64,
        )?;
        lowers.push(lower_bound(&counts, &depth, cfg.k)?.value);
        uppers.push(upper_bound(&counts, &depth, cfg.k)?.0.value);
    }
    let mc_secs = clock.elapsed().as_secs_f64();

    let j = unc.n_steps();
    let mut cells = Vec::new();
    for i in 0..3 {
        let start = format!("regime-{}", i + 1);
        for (column, value, reference) in [
            ("lower", lowers[i], TABLE1_LOWER[i]),
            ("v", unc.value(i, cfg.k, j), TABLE1_FULL_V[i]),
            ("v_constrained", con.value(i, cfg.k, j), TABLE1_FULL_VC[i]),
            ("upper", uppers[i], TABLE1_UPPER[i]),
        ] {
            cells.push(TableCell {
                block: "full",
                start: start.clone(),
                column,
                value,
                reference,
            });
        }
    }
    let priors: Vec<(String, Belief)> = (0..3)
        .map(|i| (format!("corner-{}", i + 1), Belief::corner(3, i)))
        .chain(std::iter::once(("uniform".to_string(), Belief::uniform(3))))
        .collect();
    for (i, (label, pi)) in priors.iter().enumerate() {
        for (column, value, reference) in [
            ("lower", lowers[i], TABLE1_LOWER[i]),
            (
                "v",
                part_unc.value_at(cfg.k, cfg.t_max, pi)?,
                TABLE1_PART_V[i],
            ),
            (
                "v_constrained",
                part_con.value_at(cfg.k, cfg.t_max, pi)?,
                TABLE1_PART_VC[i],
            ),
            ("upper", uppers[i], TABLE1_UPPER[i]),
        ] {
            cells.push(TableCell {
                block: "partial",
                start: label.clone(),
                column,
                value,
                reference,
            });
        }
    }

    let (path, mut w) = create_artifact(cfg, "table1.csv")?;
    (|| -> std::io::Result<()> {
        writeln!(w, "# {}", provenance(cfg))?;
        writeln!(w, "block,start,column,value,reference,rel_err_pct")?;
        for c in &cells {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.block,
                c.start,
                c.column,
                c.value,
                c.reference,
                c.rel_err_pct()
            )?;
        }
        Ok(())
    })()
    .map_err(io_at(&path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(
        s,
        "demo model, K={}  T_max={}  Δt={}  mesh h={}  bounds from {} paths (seed {})",
        cfg.k, cfg.t_max, cfg.dt, cfg.mesh_h, cfg.n_paths, cfg.seed
    )
    .unwrap();
    writeln!(
        s,
        "each cell: computed value (relative error vs the reference)"
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for block in ["full", "partial"] {
        writeln!(
            s,
            "{}",
            if block == "full" {
                "fully observed"
            } else {
                "partially observed"
            }
        )
        .unwrap();
        writeln!(
            s,
            "  {:<10} {:>18} {:>18} {:>18} {:>18}",
            "start", "lower", "v", "v_constrained", "upper"
        )
        .unwrap();
        for chunk in cells
            .iter()
            .filter(|c| c.block == block)
            .collect::<Vec<_>>()
            .chunks(4)
        {
            let mut line = format!("  {:<10}", chunk[0].start);
            for c in chunk {
                worst = worst.max(c.rel_err_pct().abs());
                write!(line, " {:>9.3} ({:+.2}%)", c.value, c.rel_err_pct()).unwrap();
            }
            writeln!(s, "{line}").unwrap();
        }
    }
    writeln!(s, "worst |relative error|: {worst:.2}%").unwrap();
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    writeln!(
        s,
        "runtime: full {full_secs:.3}s, partial {partial_secs:.3}s, bounds MC {mc_secs:.3}s"
    )
    .unwrap();
    Ok(s)
}

// ------------------------------------------------------ surface diffs

struct SurfaceCsv {
    header: Vec<String>,
    /// Column indices holding numeric surface values (`v`, `a`, or `u`).
    value_cols: Vec<usize>,
    /// Per row: the non-value fields, stringly, defining the grid node.
    keys: Vec<Vec<String>>,
    /// Per row: the value fields, parsed.
    values: Vec<Vec<f64>>,
}

fn read_surface_csv(path: &Path) -> Result<SurfaceCsv, CliError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::config(format!("{}: empty surface CSV", path.display())))?
        .split(',')
        .map(|c| c.trim().to_string())
        .collect();
    let value_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| matches!(h.as_str(), "v" | "a" | "u"))
        .map(|(i, _)| i)
        .collect();
    if value_cols.is_empty() {
        return Err(CliError::config(format!(
            "{}: no value columns (v, a, or u) in header {header:?}",
            path.display()
        )));
    }
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CliError::config(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                row + 1,
                fields.len(),
                header.len()
            )));
        }
        let mut key = Vec::new();
        let mut val = Vec::new();
        for (i, field) in fields.iter().enumerate() {
            if value_cols.contains(&i) {
                val.push(field.parse::<f64>().map_err(|_| {
                    CliError::config(format!(
                        "{}: row {}, column {}: {field:?} is not numeric",
                        path.display(),
                        row + 1,
                        header[i]
                    ))
                })?);
            } else {
                key.push(field.to_string());
            }
        }
        keys.push(key);
        values.push(val);
    }
    Ok(SurfaceCsv {
        header,
        value_cols,
        keys,
        values,
    })
}

/// Per-column maximum/mean absolute difference between two surfaces.
#[derive(Debug)]
pub struct DiffColumn {
    /// Value-column name (`v`, `a`, or `u`).
    pub name: String,
    /// Largest absolute difference.
    pub max_abs: f64,
    /// Mean absolute difference.
    pub mean_abs: f64,
    /// Grid key of the row attaining the maximum.
    pub argmax_key: Vec<String>,
}

/// Compare two exported surface CSVs node by node; errors if the grids
/// (headers, row counts, or key fields) differ.
pub fn diff_surfaces(a_path: &Path, b_path: &Path) -> Result<Vec<DiffColumn>, CliError> {
    let a = read_surface_csv(a_path)?;
    let b = read_surface_csv(b_path)?;
    if a.header != b.header {
        return Err(CliError::config(format!(
            "grid mismatch: headers differ ({:?} vs {:?})",
            a.header, b.header
        )));
    }
    if a.keys.len() != b.keys.len() {
        return Err(CliError::config(format!(
            "grid mismatch: {} rows vs {} rows",
            a.keys.len(),
            b.keys.len()
        )));
    }
    let n_cols = a.value_cols.len();
    let mut out: Vec<DiffColumn> = a
        .value_cols
        .iter()
        .map(|&i| DiffColumn {
            name: a.header[i].clone(),
            max_abs: 0.0,
            mean_abs: 0.0,
            argmax_key: Vec::new(),
        })
        .collect();
    for (row, (ka, kb)) in a.keys.iter().zip(&b.keys).enumerate() {
        if ka != kb {
            return Err(CliError::config(format!(
                "grid mismatch at row {}: node {ka:?} vs {kb:?}",
                row + 1
            )));
        }
        for c in 0..n_cols {
            let d = (a.values[row][c] - b.values[row][c]).abs();
            out[c].mean_abs += d;
            if d > out[c].max_abs {
                out[c].max_abs = d;
                out[c].argmax_key = ka.clone();
            }
        }
    }
    let n_rows = a.keys.len().max(1);
    for col in &mut out {
        col.mean_abs /= n_rows as f64;
        if col.argmax_key.is_empty() && !a.keys.is_empty() {
            col.argmax_key = a.keys[0].clone();
        }
    }
    Ok(out)
}

fn cmd_diff_surfaces(cfg: &RunConfig) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let a_path = cfg.surface_a.as_ref().expect("validated");
    let b_path = cfg.surface_b.as_ref().expect("validated");
    let report = diff_surfaces(a_path, b_path)?;

    // re-read for the per-node artifact (cheap relative to solves)
    let a = read_surface_csv(a_path)?;
    let b = read_surface_csv(b_path)?;
    let key_cols: Vec<&String> = a
        .header
        .iter()
        .enumerate()
        .filter(|(i, _)| !a.value_cols.contains(i))
        .map(|(_, h)| h)
        .collect();
    let (path, mut w) = create_artifact(cfg, "surface_diff.csv")?;
    (|| -> std::io::Result<()> {
        writeln!(w, "# {}", provenance(cfg))?;
        let diff_cols: Vec<String> = a
            .value_cols
            .iter()
            .map(|&i| format!("d_{}", a.header[i]))
            .collect();
        writeln!(
            w,
            "{},{}",
            key_cols
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(","),
            diff_cols.join(",")
        )?;
        for row in 0..a.keys.len() {
            let diffs: Vec<String> = (0..a.value_cols.len())
                .map(|c| format!("{}", a.values[row][c] - b.values[row][c]))
                .collect();
            writeln!(w, "{},{}", a.keys[row].join(","), diffs.join(","))?;
        }
        Ok(())
    })()
    .map_err(io_at(&path))?;

    let mut s = String::new();
    summary_header(cfg, &mut s);
    writeln!(s, "a: {}", a_path.display()).unwrap();
    writeln!(s, "b: {}", b_path.display()).unwrap();
    writeln!(s, "{} nodes on a matching grid", a.keys.len()).unwrap();
    for col in &report {
        writeln!(
            s,
            "{}: max |diff| {:.6} at node ({}), mean |diff| {:.6}",
            col.name,
            col.max_abs,
            col.argmax_key.join(", "),
            col.mean_abs
        )
        .unwrap();
    }
    writeln!(s, "artifacts: {}", path.display()).unwrap();
    Ok(s)
}
