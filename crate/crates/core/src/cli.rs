//! `conic-nav` command line.
//!
//! Exit codes: 0 success, 1 domain/validation/convergence failure, 2 input
//! parse failure, 3 safety violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::controller::check_model;
use crate::scenario::{write_trajectory, OutputFormat, ScenarioError, ScenarioFile};
use crate::selfcheck::{self, SelfCheckOptions};
use crate::simulator::{basin, simulate, Scenario};
use crate::world::to_sphere_world;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SAFETY: i32 = 3;

/// Samples used for the rank check of the dynamics model in `validate`.
pub const RANK_SAMPLES: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "conic-nav", version, about = "Stabilization on S^n with conic keep-out zones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output file (trajectory for simulate, JSON report for basin/selfcheck).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampled checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for batch runs; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the constraint set, start, target and dynamics rank.
    Validate(ScenarioArg),
    /// Print the sphere world the constraints map to.
    World(ScenarioArg),
    /// Run the closed loop and write the trajectory.
    Simulate(ScenarioArg),
    /// Simulate from a grid of starts and report convergence statistics.
    Basin {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Number of starts.
        #[arg(long, alias = "grid-density", default_value_t = 500)]
        starts: usize,
    },
    /// Run the numerical identity suites.
    Selfcheck {
        /// Sphere dimensions n, comma separated.
        #[arg(long = "n-list", value_delimiter = ',', default_value = "1,2,3,5")]
        n_list: Vec<usize>,
        /// Samples per suite.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, hide = true)]
        perturb: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Reports go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

struct Failure(i32, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io { .. } | ScenarioError::Parse(_) => EXIT_PARSE,
            ScenarioError::Invalid(_) => EXIT_FAILURE,
        };
        Failure(code, e.to_string())
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure(EXIT_FAILURE, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(EXIT_FAILURE, e.to_string())
    }
}

fn load(path: &Path) -> Result<(ScenarioFile, Scenario), Failure> {
    let file = ScenarioFile::load(path)?;
    let scenario = file.to_scenario()?;
    Ok((file, scenario))
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Validate(arg) => cmd_validate(&arg.scenario, cli.seed, out),
        Command::World(arg) => cmd_world(&arg.scenario, out),
        Command::Simulate(arg) => cmd_simulate(&arg.scenario, cli.out.as_deref(), out),
        Command::Basin { scenario, starts } => {
            cmd_basin(&scenario.scenario, *starts, cli.jobs, cli.out.as_deref(), out)
        }
        Command::Selfcheck { n_list, samples, perturb } => {
            let options = SelfCheckOptions { dims: n_list.clone(), seed: cli.seed, samples: *samples, perturb: *perturb };
            cmd_selfcheck(&options, cli.out.as_deref(), out)
        }
    }
}

fn cmd_validate(path: &Path, seed: u64, out: &mut dyn Write) -> Result<i32, Failure> {
    let (_, scenario) = load(path)?;
    let report = scenario.validate()?;
    let model = scenario.model()?;
    let pole = scenario.constraints[0].axis().clone();
    let extra = [scenario.start.clone(), scenario.target.clone()];
    let rank = check_model(model.as_ref(), &pole, RANK_SAMPLES, seed, &extra);

    writeln!(
        out,
        "item 1: rank of Pi over {} states: min rank {} (need {}), min singular value {:.3e}, tangency {:.3e} [{}]",
        rank.samples,
        rank.min_rank,
        scenario.n,
        rank.min_singular_value,
        rank.max_tangency,
        pass(rank.passed)
    )?;
    writeln!(out, "item 2: pairwise separation cos(ti+tj) - ai.aj")?;
    for s in &report.separations {
        writeln!(out, "  cones {} and {}: {:.6e} [{}]", s.i, s.j, s.margin, pass(s.margin > 0.0))?;
    }
    writeln!(out, "item 3: axis 0 alignment residual {:.3e}", report.alignment_residual)?;
    if let Some(m) = &report.start_margins {
        writeln!(out, "item 4: start min margin {:.6e}", m.min())?;
    }
    if let Some(m) = &report.target_margins {
        writeln!(out, "item 4: target min margin {:.6e}", m.min())?;
    }
    for issue in &report.issues {
        writeln!(out, "issue: {issue}")?;
    }
    let ok = report.passed() && rank.passed;
    writeln!(out, "validation: {}", pass(ok))?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_world(path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let (_, scenario) = load(path)?;
    let report = scenario.validate()?;
    if !report.passed() {
        for issue in &report.issues {
            writeln!(out, "issue: {issue}")?;
        }
        return Ok(EXIT_FAILURE);
    }
    let world = to_sphere_world(&scenario.constraint_set()?)?;
    writeln!(out, "workspace radius: {}", fixed6(world.workspace_radius()))?;
    writeln!(out, "obstacles: {}", world.obstacles().len())?;
    for (i, o) in world.obstacles().iter().enumerate() {
        let center: Vec<String> = o.center().iter().map(|c| fixed6(*c)).collect();
        writeln!(out, "obstacle {}: center ({}) radius {}", i + 1, center.join(", "), fixed6(o.radius()))?;
    }
    let clearances = world.clearances();
    if !clearances.is_empty() {
        writeln!(out, "clearances:")?;
        for (i, j, gap) in clearances {
            if i == 0 {
                writeln!(out, "  workspace-{j}: {}", fixed6(gap))?;
            } else {
                writeln!(out, "  {i}-{j}: {}", fixed6(gap))?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn output_target(file: &ScenarioFile, cli_out: Option<&Path>) -> Option<(PathBuf, OutputFormat)> {
    if let Some(path) = cli_out {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        };
        return Some((path.to_path_buf(), format));
    }
    file.output.as_ref().map(|o| (o.path.clone(), o.format))
}

fn cmd_simulate(path: &Path, cli_out: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let (file, scenario) = load(path)?;
    let report = scenario.validate()?;
    if !report.passed() {
        for issue in &report.issues {
            writeln!(out, "issue: {issue}")?;
        }
        writeln!(out, "validation: FAIL")?;
        return Ok(EXIT_FAILURE);
    }
    let trajectory = simulate(&scenario)?;
    match output_target(&file, cli_out) {
        Some((target, format)) => {
            write_trajectory(&target, format, &trajectory)?;
            writeln!(out, "trajectory: {} ({} samples)", target.display(), trajectory.samples.len())?;
        }
        None => writeln!(out, "trajectory: not written (no output path)")?,
    }
    let s = &trajectory.summary;
    writeln!(out, "converged: {}", s.converged)?;
    match s.t_converge {
        Some(t) => writeln!(out, "t_converge: {t:.6}")?,
        None => writeln!(out, "t_converge: none")?,
    }
    writeln!(out, "final_time: {:.6}", s.final_time)?;
    writeln!(out, "final_distance: {:.6e}", s.final_distance)?;
    writeln!(out, "min_margin_overall: {:.6e}", s.min_margin_overall)?;
    writeln!(out, "max_control_norm: {:.6e}", s.max_control_norm)?;
    if let Some(v) = &s.safety_violation {
        writeln!(out, "safety violation at t = {:.6}: margin {:.6e}", v.t, v.min_margin)?;
        return Ok(EXIT_SAFETY);
    }
    Ok(if trajectory.succeeded() { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_basin(
    path: &Path,
    starts: usize,
    jobs: Option<usize>,
    cli_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let (_, scenario) = load(path)?;
    let report = scenario.validate()?;
    if !report.passed() {
        for issue in &report.issues {
            writeln!(out, "issue: {issue}")?;
        }
        return Ok(EXIT_FAILURE);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure(EXIT_FAILURE, e.to_string()))?;
    let result = pool.install(|| basin(&scenario, starts))?;
    writeln!(out, "starts: {}", result.starts)?;
    writeln!(out, "converged: {} ({:.4})", result.converged, result.converged_fraction)?;
    writeln!(out, "safety violations: {} ({:.4})", result.violations, result.violation_fraction)?;
    for r in &result.non_converged {
        let start: Vec<String> = r.start.iter().map(|c| format!("{c:.6}")).collect();
        let detail = r.error.clone().unwrap_or_else(|| format!("final distance {:.3e}", r.final_distance));
        writeln!(out, "  not converged #{}: ({}) {}", r.index, start.join(", "), detail)?;
    }
    if let Some(path) = cli_out {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &result).map_err(|e| Failure(EXIT_FAILURE, e.to_string()))?;
    }
    Ok(if result.violations > 0 { EXIT_SAFETY } else { EXIT_OK })
}

fn cmd_selfcheck(options: &SelfCheckOptions, cli_out: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let report = selfcheck::run(options)?;
    for s in &report.suites {
        writeln!(
            out,
            "{}  n={}  {:<40} worst {:.3e}  tol {:.0e}  ({} samples)",
            pass(s.passed),
            s.n,
            s.name,
            s.worst,
            s.tolerance,
            s.samples
        )?;
    }
    if let Some(path) = cli_out {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &report).map_err(|e| Failure(EXIT_FAILURE, e.to_string()))?;
    }
    let ok = report.passed();
    writeln!(out, "selfcheck: {}", pass(ok))?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}
