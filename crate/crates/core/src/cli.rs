//! Command-line front end.
//!
//! Exit codes: 0 success, 1 parse error, 2 validation error, 3 simulation
//! deadlock or cycle limit, 4 I/O error. Diagnostics go to stderr; data goes
//! to files under `--out` or to stdout.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::builder::explore::{default_threads, render_report};
use crate::builder::{explore, write_outputs, ExploreConfig, Manifest, ReportFormat};
use crate::cost::{generic_28nm, load_library_file, UnitCostLibrary};
use crate::dnn::load_model;
use crate::error::{Error, Result};
use crate::graph::{bind_mapping, build_bound_graph, load_arch, validate_graph, AccelGraph};
use crate::predict::report::{prediction_csv, prediction_json, simulation_csv, simulation_json};
use crate::predict::{export_trace, predict_coarse, simulate, SimLimits};

#[derive(Debug, Parser)]
#[command(name = "accelforge", version, about = "DNN accelerator predictor and design-space explorer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coarse or fine prediction of one design.
    Predict(PredictArgs),
    /// Same as `predict --mode fine`.
    Simulate(PredictArgs),
    /// Two-stage design-space exploration.
    Explore(ExploreArgs),
    /// Tabular export of an exploration manifest.
    Report(ReportArgs),
    /// Structural checks of an architecture (optionally bound to a model).
    Validate(DesignArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Coarse,
    Fine,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub arch: PathBuf,
    /// Model to bind; omit when the architecture carries its own binding.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Extra cost library merged over the bundled one.
    #[arg(long)]
    pub costs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value = "coarse")]
    pub mode: Mode,
    /// Output directory; prints JSON to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `trace.csv` (fine mode with `--out`).
    #[arg(long)]
    pub trace: bool,
    /// Fine-mode cycle budget; exceeding it exits with status 3.
    #[arg(long)]
    pub max_cycles: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "explore-out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `csv` or `tsv`.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema(_) | Error::Version { .. } | Error::Config(_) => 1,
        Error::Deadlock { .. } | Error::CycleLimit(_) => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn load_costs(path: Option<&Path>) -> Result<UnitCostLibrary> {
    let mut costs = generic_28nm();
    if let Some(p) = path {
        costs.merge(load_library_file(p)?)?;
    }
    Ok(costs)
}

fn load_design(d: &DesignArgs) -> Result<(AccelGraph, UnitCostLibrary)> {
    let costs = load_costs(d.costs.as_deref())?;
    let arch = load_arch(&d.arch)?;
    let schedule = arch.schedule.clone().unwrap_or_default();
    let mut g = build_bound_graph(&arch, &costs)?;
    if let Some(m) = &d.model {
        g = bind_mapping(&g, &load_model(m)?, &schedule)?;
    }
    Ok((g, costs))
}

fn check(g: &AccelGraph) -> Result<()> {
    let diags = validate_graph(g);
    for d in &diags {
        eprintln!("{d}");
    }
    match diags.first() {
        None => Ok(()),
        Some(d) => Err(Error::Architecture(format!("{} diagnostics, first: {d}", diags.len()))),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn stdout(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn predict(a: &PredictArgs, mode: Mode) -> Result<()> {
    let (g, costs) = load_design(&a.design)?;
    check(&g)?;
    match mode {
        Mode::Coarse => {
            let r = predict_coarse(&g, &costs)?;
            match &a.out {
                Some(dir) => {
                    write_file(dir, "prediction.json", &prediction_json(&r))?;
                    write_file(dir, "prediction.csv", &prediction_csv(&g, &r))
                }
                None => stdout(&(prediction_json(&r) + "\n")),
            }
        }
        Mode::Fine => {
            let mut limits = if a.trace { SimLimits::with_trace() } else { SimLimits::default() };
            if let Some(m) = a.max_cycles {
                limits.max_cycles = m;
            }
            let mut r = simulate(&g, &costs, limits)?;
            match &a.out {
                Some(dir) => {
                    if a.trace {
                        write_file(dir, "trace.csv", &export_trace(&r)?)?;
                    }
                    r.trace = None;
                    write_file(dir, "simulation.json", &simulation_json(&r))?;
                    write_file(dir, "simulation.csv", &simulation_csv(&r))
                }
                None => {
                    r.trace = None;
                    stdout(&(simulation_json(&r) + "\n"))
                }
            }
        }
    }
}

fn run_explore(a: &ExploreArgs) -> Result<()> {
    let mut config = ExploreConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let threads = a.threads.or(config.threads).unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(Error::Config("`threads` must be >= 1".into()));
    }
    let (model, costs) = config.load_inputs()?;
    let outcome = explore(&config, &model, &costs, threads)?;
    if let Some(note) = &outcome.manifest.note {
        eprintln!("{note}");
    }
    let c = outcome.manifest.counters;
    eprintln!("N1={} N2={} N3={} N_opt={}", c.n1, c.n2, c.n3, c.n_opt);
    write_outputs(&outcome, &a.out)
}

fn report(a: &ReportArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse()?;
    let m = Manifest::load(&a.manifest)?;
    let text = render_report(&m, format);
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => stdout(&text),
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Predict(a) => predict(a, a.mode),
        Command::Simulate(a) => predict(a, Mode::Fine),
        Command::Explore(a) => run_explore(a),
        Command::Report(a) => report(a),
        Command::Validate(d) => {
            let (g, _) = load_design(d)?;
            check(&g)?;
            eprintln!("ok: {} nodes, {} edges, {} states", g.nodes.len(), g.edges.len(), g.state_count());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
