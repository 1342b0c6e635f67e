mod launcher;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use launcher::ProcessLauncher;
use pdevs_core::devstone::{self, DelayDistribution, DevstoneConfig, Shape};
use pdevs_core::distributed::{run_coordinator, serve_simulator, CoordinatorOptions};
use pdevs_core::gpt::{self, GptParams};
use pdevs_core::harness::{self, Backend};
use pdevs_core::kernel::{read_report_rows, write_report_rows, RunReport};
use pdevs_core::manifest::{emit_manifest, ManifestOptions};
use pdevs_core::plan::{parse_plan_xml, PlanDefaults, PlanDocument};
use pdevs_core::{ModelGraph, ModelRegistry, SimOptions};

/// Parallel DEVS engine and DEVStone experiment harness.
#[derive(Parser)]
#[command(name = "pdevs", version)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Write a plan file for a benchmark or example model.
    Generate(GenerateArgs),
    /// Rank atomics by CPU time spent in their transitions.
    Profile(ProfileArgs),
    /// Split ranked atomics over two levels (or balance them over one) and
    /// write the annotated plan.
    Allocate(AllocateArgs),
    /// Simulate a plan and write one CSV report row.
    Run(RunArgs),
    /// Turn report rows into a speedup table and plot data.
    Report(ReportArgs),
    /// Write Kubernetes pod specs for a network plan.
    EmitManifest(ManifestArgs),
    /// Serve one atomic of a network plan until the coordinator exits.
    Serve(ServeArgs),
    /// Drive the services of a network plan through one run.
    Coordinate(CoordinateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Devstone,
    Gpt,
    Efp,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "devstone")]
    model: ModelKind,
    #[arg(long, default_value = "HO")]
    shape: Shape,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    /// `constant:K`, `uniform:K` or `chi2`, in seconds.
    #[arg(long, default_value = "constant:0")]
    delay: DelayDistribution,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pool every atomic is placed in.
    #[arg(long, default_value = "main")]
    pool: String,
    /// Pool size; one per logical CPU when omitted.
    #[arg(long)]
    workers: Option<usize>,
    /// Place atomics on this host instead of a pool.
    #[arg(long)]
    host: Option<String>,
    /// First port of a network plan; atomic k gets base+2k and base+2k+1.
    #[arg(long, default_value_t = 5000)]
    base_port: u16,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Sequential runs to average.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Profile CSV written by `profile`.
    #[arg(long)]
    profile: PathBuf,
    /// Share of the slowest atomics placed in L1.
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    /// L1 workers or container groups.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// L2 workers or container groups; with --balanced, the single level.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value = "sequential")]
    backend: Backend,
    #[arg(long, default_value_t = u64::MAX)]
    iterations: u64,
    /// CSV file the report row is appended to.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one `<atomic>.trace` file per atomic here.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report CSV files produced by `run`.
    #[arg(long = "rows", required = true)]
    rows: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot data file: speedup per panel against the varied count.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value = "pdevs:latest")]
    image: String,
    /// Plan location inside the containers.
    #[arg(long, default_value = "/plan/plan.xml")]
    plan_path: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    atomic: String,
}

#[derive(Args)]
struct CoordinateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = u64::MAX)]
    iterations: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text).context("writing to stdout"),
    }
}

fn load_plan(path: &Path, registry: &ModelRegistry) -> Result<PlanDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_plan_xml(&text, registry).with_context(|| format!("in {}", path.display()))
}

/// Appends to an existing CSV file, writing the header only for a new one.
fn append_row(out: Option<&Path>, report: &RunReport) -> Result<()> {
    let row = [report.row()];
    match out {
        Some(path) => {
            let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            write_report_rows(file, &row, fresh)?;
        }
        None => write_report_rows(io::stdout(), &row, true)?,
    }
    Ok(())
}

fn write_traces(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for atomic in report.traces.iter().flat_map(|t| t.keys()) {
        let path = dir.join(format!("{atomic}.trace"));
        let text = report.trace_text(atomic).unwrap_or_default();
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let graph: ModelGraph = match args.model {
        ModelKind::Devstone => {
            let config = DevstoneConfig::new(args.shape, args.width, args.depth)
                .with_delay(args.delay)
                .with_seed(args.seed);
            devstone::generate(&config)?.graph
        }
        ModelKind::Gpt => gpt::gpt(GptParams::default()),
        ModelKind::Efp => gpt::efp(GptParams::default()),
    };
    let defaults = match args.host {
        Some(host) => PlanDefaults::Network {
            host,
            base_port: args.base_port,
        },
        None => PlanDefaults::Pool {
            name: args.pool,
            workers: args.workers,
        },
    };
    let doc = PlanDocument::with_defaults(&graph, &defaults)?;
    emit(args.out.as_deref(), doc.to_xml().as_bytes())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let doc = load_plan(&args.plan, &registry)?;
    let profiles = harness::profile_atomics(&doc.graph, &registry, args.runs)?;
    let mut buf = Vec::new();
    harness::write_profiles(&mut buf, &profiles)?;
    emit(args.out.as_deref(), &buf)
}

fn allocate(args: AllocateArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let mut doc = load_plan(&args.plan, &registry)?;
    let file = fs::File::open(&args.profile).with_context(|| format!("reading {}", args.profile.display()))?;
    let profiles = harness::read_profiles(file).with_context(|| format!("in {}", args.profile.display()))?;
    if args.balanced {
        let groups = harness::allocate_balanced(&doc.graph, &profiles, args.m)?;
        harness::apply_balanced(&groups, &mut doc);
        eprintln!("balanced: {} atomics over {} resources", profiles.len(), groups.len());
    } else {
        let alloc = harness::allocate_two_level(&doc.graph, &profiles, args.fraction, args.n, args.m)?;
        alloc.apply(&mut doc);
        eprintln!("L1: {} atomics, L2: {} atomics, {}", alloc.l1.len(), alloc.l2.len(), alloc.label());
    }
    emit(args.out.as_deref(), doc.to_xml().as_bytes())
}

fn run(args: RunArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let doc = load_plan(&args.plan, &registry)?;
    let launcher = ProcessLauncher {
        exe: std::env::current_exe().context("locating the pdevs executable")?,
        plan_file: args.plan.clone(),
    };
    let options = SimOptions {
        trace: args.trace_dir.is_some(),
        profile: false,
    };
    let report = harness::run_document(&doc, args.backend, &registry, args.iterations, options, &launcher)?;
    if let Some(dir) = &args.trace_dir {
        write_traces(&report, dir)?;
    }
    append_row(args.out.as_deref(), &report)
}

fn report(args: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.rows {
        let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        rows.extend(read_report_rows(file).with_context(|| format!("in {}", path.display()))?);
    }
    let table = harness::speedup_table(&rows)?;
    let mut buf = Vec::new();
    harness::write_speedup_rows(&mut buf, &table)?;
    emit(args.out.as_deref(), &buf)?;
    if let Some(plot) = &args.plot {
        let mut buf = Vec::new();
        harness::write_plot_data(&mut buf, &table)?;
        emit(Some(plot), &buf)?;
    }
    Ok(())
}

fn emit_manifest_cmd(args: ManifestArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let doc = load_plan(&args.plan, &registry)?;
    let plan = doc.distributed_plan()?;
    // atomics without a group attribute get a pod of their own
    let groups = plan
        .graph
        .atomics()
        .map(|a| {
            let g = doc.groups.get(&a.name).cloned().unwrap_or_else(|| a.name.clone());
            (a.name.clone(), g)
        })
        .collect();
    let options = ManifestOptions {
        image: args.image,
        plan_path: args.plan_path,
        ..Default::default()
    };
    let yaml = emit_manifest(&plan, &groups, &options)?;
    emit(args.out.as_deref(), yaml.as_bytes())
}

fn serve(args: ServeArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let plan = load_plan(&args.plan, &registry)?.distributed_plan()?;
    serve_simulator(&plan, &args.atomic, registry)?;
    Ok(())
}

fn coordinate(args: CoordinateArgs) -> Result<()> {
    let registry = ModelRegistry::standard();
    let plan = load_plan(&args.plan, &registry)?.distributed_plan()?;
    let options = CoordinatorOptions {
        sim: SimOptions {
            trace: args.trace_dir.is_some(),
            profile: false,
        },
        ..Default::default()
    };
    let run = run_coordinator(&plan, args.iterations, options)?;
    if let Some(dir) = &args.trace_dir {
        write_traces(&run.report, dir)?;
    }
    append_row(args.out.as_deref(), &run.report)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Verb::Generate(a) => generate(a),
        Verb::Profile(a) => profile(a),
        Verb::Allocate(a) => {
            if a.n < 1 || a.m < 1 {
                bail!("--n and --m must be at least 1");
            }
            allocate(a)
        }
        Verb::Run(a) => run(a),
        Verb::Report(a) => report(a),
        Verb::EmitManifest(a) => emit_manifest_cmd(a),
        Verb::Serve(a) => serve(a),
        Verb::Coordinate(a) => coordinate(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdevs: {e:#}");
            ExitCode::FAILURE
        }
    }
}
