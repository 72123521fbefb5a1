use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridsync::cli::{
    cmd_check, cmd_plan, cmd_simulate, cmd_sweep, cmd_trace, manifest_path, manifest_timestamp,
    parse_disturbance, parse_list, parse_range, trace_csv, Inputs, RunManifest, SweepSpec,
};
use gridsync::planners::{AcsConfig, Algorithm};
use gridsync::sim::{Convention, Disturbance, Mode, SimConfig};

/// Communication-plan design and swing-equation simulation for power-grid
/// synchronization.
#[derive(Parser)]
#[command(name = "gridsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design one plan with the chosen algorithm.
    Plan(PlanArgs),
    /// λ_max for every (K, algorithm, seed) combination.
    Sweep(SweepArgs),
    /// Per-iteration ACS costs, optionally for several ant counts.
    Trace(TraceArgs),
    /// Synchronization verdicts for an explicit plan.
    Check(CheckArgs),
    /// Integrate the swing equations after a disturbance.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Topology JSON file, or `ne39` for the bundled 39-bus system.
    #[arg(long, default_value = "ne39")]
    topology: String,
    /// Parameter file (TOML, keys M D h V R X Y_re).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct AcsArgs {
    #[arg(long)]
    ants: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Exploitation threshold Q.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
}

impl AcsArgs {
    fn config(&self) -> AcsConfig {
        let d = AcsConfig::default();
        AcsConfig {
            n_ants: self.ants.unwrap_or(d.n_ants),
            n_iterations: self.iterations.unwrap_or(d.n_iterations),
            gamma: self.gamma.unwrap_or(d.gamma),
            rho: self.rho.unwrap_or(d.rho),
            q_threshold: self.q.unwrap_or(d.q_threshold),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            tau0: self.tau0.unwrap_or(d.tau0),
            seed: d.seed,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "acs")]
    algo: Algorithm,
    /// Link budget: number of generators attached to the control center.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    acs: AcsArgs,
    /// Include wall-clock times (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Budgets: `a..b`, `a..b:step` or a comma list.
    #[arg(long, default_value = "2..35:3")]
    k: String,
    #[arg(long, value_delimiter = ',', default_value = "acs,greedy,random")]
    algo: Vec<Algorithm>,
    /// Seeds for every algorithm (range or list).
    #[arg(long, default_value = "1..5")]
    seeds: String,
    /// Seeds for `random`; defaults to --seeds.
    #[arg(long)]
    random_seeds: Option<String>,
    #[command(flatten)]
    acs: AcsArgs,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Seeds (range or list).
    #[arg(long, default_value = "1")]
    seeds: String,
    /// Comma list of ant counts to compare; defaults to the single configured count.
    #[arg(long = "ant-counts")]
    ant_counts: Option<String>,
    #[command(flatten)]
    acs: AcsArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Comma list of attached generators.
    #[arg(long, default_value = "")]
    plan: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma list of attached generators.
    #[arg(long, default_value = "")]
    plan: String,
    #[arg(long, value_enum, default_value = "linearized")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "consistent")]
    convention: ConventionArg,
    /// Shorthand for `--convention paper-literal`.
    #[arg(long, conflicts_with = "convention")]
    paper_literal: bool,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1)]
    record_stride: usize,
    /// `node:delta_xi:delta_theta`; repeatable. Default: 0:0:0.1.
    #[arg(long)]
    disturb: Vec<String>,
    /// Convergence tolerance relative to the initial error.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Where to write the settling metrics; standard output when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linearized,
    Nonlinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Consistent,
    PaperLiteral,
    VirtualNetwork,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Plan(a) => plan(a),
        Command::Sweep(a) => sweep(a),
        Command::Trace(a) => trace(a),
        Command::Check(a) => check(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn load(common: &Common) -> Result<Inputs> {
    Inputs::load(&common.topology, common.params.as_deref())
        .with_context(|| format!("loading topology `{}`", common.topology))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

struct ManifestFields {
    command: &'static str,
    algorithms: Vec<String>,
    k: Vec<usize>,
    seeds: Vec<u64>,
}

fn manifest(common: &Common, fields: ManifestFields, outputs: Vec<String>) -> RunManifest {
    RunManifest {
        tool: "gridsync".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: manifest_timestamp(),
        command: fields.command.into(),
        args: std::env::args().skip(1).collect(),
        topology: common.topology.clone(),
        params: common.params.as_ref().map(|p| p.display().to_string()),
        algorithms: fields.algorithms,
        k: fields.k,
        seeds: fields.seeds,
        outputs,
    }
}

/// Writes `text` to `out` (with a manifest) or to standard output.
fn emit(
    common: &Common,
    fields: ManifestFields,
    text: &str,
    extra: &[(PathBuf, String)],
) -> Result<()> {
    match &common.out {
        Some(path) => {
            write_file(path, text)?;
            for (p, t) in extra {
                write_file(p, t)?;
            }
            let outputs = std::iter::once(path)
                .chain(extra.iter().map(|(p, _)| p))
                .map(|p| p.display().to_string())
                .collect();
            let m = manifest(common, fields, outputs);
            write_file(&manifest_path(path), &to_json(&m)?)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            for (_, t) in extra {
                stdout.write_all(b"\n")?;
                stdout.write_all(t.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    name.into()
}

fn plan(a: PlanArgs) -> Result<()> {
    let inputs = load(&a.common)?;
    let doc = cmd_plan(&inputs, a.algo, a.k, a.seed, &a.acs.config(), a.timing)?;
    let text = match a.common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc)?,
        Format::Csv => doc.to_csv(),
    };
    let fields = ManifestFields {
        command: "plan",
        algorithms: vec![a.algo.to_string()],
        k: vec![a.k],
        seeds: vec![a.seed],
    };
    emit(&a.common, fields, &text, &[])
}

fn sweep(a: SweepArgs) -> Result<()> {
    let inputs = load(&a.common)?;
    let ks: Vec<usize> = parse_range(&a.k)?.into_iter().map(|k| k as usize).collect();
    let seeds = parse_range(&a.seeds)?;
    let random_seeds = match &a.random_seeds {
        Some(s) => parse_range(s)?,
        None => seeds.clone(),
    };
    let spec = SweepSpec {
        ks: ks.clone(),
        algorithms: a.algo.clone(),
        seeds: seeds.clone(),
        random_seeds,
        acs: a.acs.config(),
        timing: a.timing,
    };
    let doc = cmd_sweep(&inputs, &spec)?;
    let fields = ManifestFields {
        command: "sweep",
        algorithms: a.algo.iter().map(Algorithm::to_string).collect(),
        k: ks,
        seeds,
    };
    match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => emit(&a.common, fields, &to_json(&doc)?, &[]),
        Format::Csv => {
            // the per-K summary goes to `<out>.summary.csv`, or after a blank line
            let summary_path = a
                .common
                .out
                .as_deref()
                .map_or_else(PathBuf::new, |p| sibling(p, ".summary.csv"));
            emit(
                &a.common,
                fields,
                &doc.rows_csv(),
                &[(summary_path, doc.summary_csv())],
            )
        }
    }
}

fn trace(a: TraceArgs) -> Result<()> {
    let inputs = load(&a.common)?;
    let acs = a.acs.config();
    let seeds = parse_range(&a.seeds)?;
    let ants = match &a.ant_counts {
        Some(list) => parse_list(list)?,
        None => vec![acs.n_ants],
    };
    let rows = cmd_trace(&inputs, a.k, &seeds, &ants, &acs)?;
    let text = match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => trace_csv(&rows),
    };
    let fields = ManifestFields {
        command: "trace",
        algorithms: vec![Algorithm::Acs.to_string()],
        k: vec![a.k],
        seeds,
    };
    emit(&a.common, fields, &text, &[])
}

fn check(a: CheckArgs) -> Result<()> {
    let inputs = load(&a.common)?;
    let members: Vec<usize> = parse_list(&a.plan)?;
    let doc = cmd_check(&inputs, &members)?;
    let text = match a.common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc)?,
        Format::Csv => doc.to_csv(),
    };
    let fields = ManifestFields {
        command: "check",
        algorithms: Vec::new(),
        k: vec![members.len()],
        seeds: Vec::new(),
    };
    emit(&a.common, fields, &text, &[])
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let inputs = load(&a.common)?;
    let members: Vec<usize> = parse_list(&a.plan)?;
    let disturbance = if a.disturb.is_empty() {
        SimConfig::default().disturbance
    } else {
        a.disturb
            .iter()
            .map(|d| parse_disturbance(d))
            .collect::<gridsync::Result<Vec<Disturbance>>>()?
    };
    let convention = match (a.paper_literal, a.convention) {
        (true, _) | (_, ConventionArg::PaperLiteral) => Convention::PaperLiteral,
        (_, ConventionArg::Consistent) => Convention::Consistent,
        (_, ConventionArg::VirtualNetwork) => Convention::VirtualNetwork,
    };
    let config = SimConfig {
        dt: a.dt,
        t_end: a.t_end,
        mode: match a.mode {
            ModeArg::Linearized => Mode::Linearized,
            ModeArg::Nonlinear => Mode::Nonlinear,
        },
        disturbance,
        record_stride: a.record_stride,
        convention,
    };
    let (traj, doc) = cmd_simulate(&inputs, &members, &config, a.tol)?;
    let metrics = to_json(&doc)?;
    let table = match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&traj)?,
        Format::Csv => traj.to_csv(),
    };
    let fields = || ManifestFields {
        command: "simulate",
        algorithms: Vec::new(),
        k: vec![members.len()],
        seeds: Vec::new(),
    };
    match (&a.common.out, &a.metrics) {
        // trajectory to its file, metrics to theirs or to standard output
        (Some(_), Some(m)) => emit(&a.common, fields(), &table, &[(m.clone(), metrics)]),
        (Some(_), None) => {
            emit(&a.common, fields(), &table, &[])?;
            std::io::stdout().write_all(metrics.as_bytes())?;
            Ok(())
        }
        (None, Some(m)) => {
            write_file(m, &metrics)?;
            write_file(
                &manifest_path(m),
                &to_json(&manifest(
                    &a.common,
                    fields(),
                    vec![m.display().to_string()],
                ))?,
            )
        }
        (None, None) => {
            std::io::stdout().write_all(metrics.as_bytes())?;
            Ok(())
        }
    }
}
