//! Command implementations behind the `gridsync` binary.
//!
//! Argument parsing lives in the binary; this module turns typed inputs
//! into documents and tables. Output is deterministic: parallel work is
//! collected in canonical order, numbers are printed in shortest round-trip
//! form, and wall-clock timings appear only when requested.

use std::fs;
use std::path::Path;
use std::time::Duration;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    comm_laplacian, laplacian, load_topology, new_england_39, CommPlan, GridParams, PowerNetwork,
};
use crate::planners::{run_planner, AcsConfig, Algorithm, PlanResult, Planner};
use crate::sim::{
    format_number, settling_metrics, simulate, Disturbance, SettlingMetrics, SimConfig, Trajectory,
};
use crate::spectral::{state_spectrum, threshold_verdict};

/// Built-in alias for the bundled 39-bus topology.
pub const NE39_ALIAS: &str = "ne39";

/// Topology and parameters shared by every command.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub net: PowerNetwork,
    pub params: GridParams,
}

impl Inputs {
    /// `topology` is a file path or [`NE39_ALIAS`]; `params` is a TOML file,
    /// defaults when absent.
    pub fn load(topology: &str, params: Option<&Path>) -> Result<Self> {
        let net = if topology == NE39_ALIAS {
            new_england_39()
        } else {
            load_topology(fs::File::open(topology)?)?
        };
        let params = match params {
            Some(path) => GridParams::from_toml_str(&fs::read_to_string(path)?)?,
            None => GridParams::default(),
        };
        Ok(Self { net, params })
    }
}

/// Verdicts for one plan: the threshold test on λ_max and the sign of the
/// slowest non-rigid mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assessment {
    pub lambda_max: f64,
    pub threshold: f64,
    /// `threshold − lambda_max`; positive when the threshold test passes.
    pub margin: f64,
    pub verdict_prop1: bool,
    pub verdict_direct: bool,
    /// The two verdicts differ.
    pub disagreement: bool,
    /// Largest real part over the non-rigid modes.
    pub max_re_phi: Option<f64>,
}

fn assess(inputs: &Inputs, plan: &CommPlan, lambda: f64) -> Result<Assessment> {
    let n = inputs.net.n_nodes();
    let spectrum = state_spectrum(
        &inputs.params,
        &laplacian(&inputs.net),
        &comm_laplacian(plan, n),
    )?;
    let verdict = threshold_verdict(&inputs.params, lambda);
    Ok(Assessment {
        lambda_max: lambda,
        threshold: verdict.threshold,
        margin: verdict.margin,
        verdict_prop1: verdict.synchronizable,
        verdict_direct: spectrum.is_synchronizable_direct,
        disagreement: verdict.synchronizable != spectrum.is_synchronizable_direct,
        max_re_phi: spectrum.non_rigid_abscissa,
    })
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn num(x: f64) -> String {
    format_number(x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn join_members(plan: &CommPlan) -> String {
    plan.members()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDocument {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub plan: CommPlan,
    #[serde(flatten)]
    pub assessment: Assessment,
    pub best_so_far_trace: Vec<f64>,
    pub avg_cost_trace: Vec<f64>,
    pub raw_avg_cost_trace: Vec<f64>,
    pub pheromone_argmax_plan: Option<CommPlan>,
    pub pheromone_argmax_lambda: Option<f64>,
    pub evaluations: usize,
    pub rayleigh_products: usize,
    pub warnings: Vec<String>,
    /// Present only when timing was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl PlanDocument {
    pub const CSV_HEADER: &'static str = "algorithm,k,seed,members,lambda_max,threshold,margin,\
verdict_prop1,verdict_direct,evaluations,wall_ms";

    /// One-row table; members are space separated.
    pub fn to_csv(&self) -> String {
        let a = &self.assessment;
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.algorithm,
            self.k,
            self.seed,
            join_members(&self.plan),
            num(a.lambda_max),
            num(a.threshold),
            num(a.margin),
            a.verdict_prop1,
            a.verdict_direct,
            self.evaluations,
            opt_num(self.wall_ms),
        )
    }
}

pub fn cmd_plan(
    inputs: &Inputs,
    algorithm: Algorithm,
    k: usize,
    seed: u64,
    acs: &AcsConfig,
    timing: bool,
) -> Result<PlanDocument> {
    let planner = Planner::new(algorithm, acs, seed);
    let r = run_planner(&inputs.net, &inputs.params, k, &planner)?;
    let assessment = assess(inputs, &r.plan, r.lambda_max)?;
    Ok(PlanDocument {
        algorithm,
        k,
        seed,
        plan: r.plan,
        assessment,
        best_so_far_trace: r.best_so_far_trace,
        avg_cost_trace: r.avg_cost_trace,
        raw_avg_cost_trace: r.raw_avg_cost_trace,
        pheromone_argmax_plan: r.pheromone_argmax_plan,
        pheromone_argmax_lambda: r.pheromone_argmax_lambda,
        evaluations: r.evaluations,
        rayleigh_products: r.rayleigh_products,
        warnings: r.warnings,
        wall_ms: timing.then(|| millis(r.wall_time)),
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// Seeds for every algorithm except `random`.
    pub seeds: Vec<u64>,
    /// Seeds for `random`.
    pub random_seeds: Vec<u64>,
    pub acs: AcsConfig,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub lambda_max: f64,
    pub margin: f64,
    pub verdict_prop1: bool,
    pub verdict_direct: bool,
    pub evaluations: usize,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub k: usize,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub min_lambda_max: f64,
    pub mean_lambda_max: f64,
    pub max_lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDocument {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
}

impl SweepSpec {
    fn seeds_for(&self, algorithm: Algorithm) -> &[u64] {
        if algorithm == Algorithm::Random {
            &self.random_seeds
        } else {
            &self.seeds
        }
    }
}

/// Runs every `(K, algorithm, seed)` cell. Deterministic algorithms run once
/// per `K` and their row is repeated for each seed.
pub fn cmd_sweep(inputs: &Inputs, spec: &SweepSpec) -> Result<SweepDocument> {
    let n = inputs.net.n_nodes();
    if let Some(&k) = spec.ks.iter().find(|&&k| k > n) {
        return Err(Error::BudgetOutOfRange { k, n_nodes: n });
    }
    let mut jobs = Vec::new();
    for &k in &spec.ks {
        for &algorithm in &spec.algorithms {
            if algorithm.is_stochastic() {
                jobs.extend(
                    spec.seeds_for(algorithm)
                        .iter()
                        .map(|&s| (k, algorithm, Some(s))),
                );
            } else {
                jobs.push((k, algorithm, None));
            }
        }
    }
    let results: Vec<(PlanResult, Assessment)> = jobs
        .par_iter()
        .map(|&(k, algorithm, seed)| {
            let planner = Planner::new(algorithm, &spec.acs, seed.unwrap_or(0));
            let r = run_planner(&inputs.net, &inputs.params, k, &planner)?;
            let a = assess(inputs, &r.plan, r.lambda_max)?;
            Ok((r, a))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (&(k, algorithm, seed), (r, a)) in jobs.iter().zip(&results) {
        let seeds = match seed {
            Some(s) => vec![s],
            None => spec.seeds_for(algorithm).to_vec(),
        };
        rows.extend(seeds.into_iter().map(|seed| SweepRow {
            k,
            algorithm,
            seed,
            lambda_max: r.lambda_max,
            margin: a.margin,
            verdict_prop1: a.verdict_prop1,
            verdict_direct: a.verdict_direct,
            evaluations: r.evaluations,
            wall_ms: spec.timing.then(|| millis(r.wall_time)),
        }));
    }
    rows.sort_by_key(|r| (r.k, r.algorithm, r.seed));
    let summary = summarize(&rows);
    Ok(SweepDocument { rows, summary })
}

fn summarize(rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    rows.chunk_by(|a, b| (a.k, a.algorithm) == (b.k, b.algorithm))
        .map(|group| {
            let values: Vec<f64> = group.iter().map(|r| r.lambda_max).collect();
            SweepSummaryRow {
                k: group[0].k,
                algorithm: group[0].algorithm,
                runs: values.len(),
                min_lambda_max: values.iter().copied().fold(f64::INFINITY, f64::min),
                mean_lambda_max: values.iter().sum::<f64>() / values.len() as f64,
                max_lambda_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

impl SweepDocument {
    pub const ROWS_HEADER: &'static str =
        "k,algorithm,seed,lambda_max,margin,verdict_prop1,verdict_direct,evaluations,wall_ms";
    pub const SUMMARY_HEADER: &'static str =
        "k,algorithm,runs,min_lambda_max,mean_lambda_max,max_lambda_max";

    pub fn rows_csv(&self) -> String {
        let mut out = format!("{}\n", Self::ROWS_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.k,
                r.algorithm,
                r.seed,
                num(r.lambda_max),
                num(r.margin),
                r.verdict_prop1,
                r.verdict_direct,
                r.evaluations,
                opt_num(r.wall_ms)
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{}\n", Self::SUMMARY_HEADER);
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.k,
                s.algorithm,
                s.runs,
                num(s.min_lambda_max),
                num(s.mean_lambda_max),
                num(s.max_lambda_max)
            ));
        }
        out
    }
}

// ---------------------------------------------------------------- trace

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// 1-based.
    pub iteration: usize,
    pub best_so_far: f64,
    pub avg_normalized_cost: f64,
    /// Set when several ant counts were compared.
    pub n_ants: Option<usize>,
    pub seed: Option<u64>,
}

/// Per-iteration ACS costs for every `(seed, ant count)` pair. Each run's
/// average cost is divided by its own largest value.
pub fn cmd_trace(
    inputs: &Inputs,
    k: usize,
    seeds: &[u64],
    ants: &[usize],
    acs: &AcsConfig,
) -> Result<Vec<TraceRow>> {
    if seeds.is_empty() || ants.is_empty() {
        return Err(Error::InvalidConfig(
            "trace needs at least one seed and one ant count".into(),
        ));
    }
    let comparing = ants.len() > 1 || seeds.len() > 1;
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| ants.iter().map(move |&a| (s, a)))
        .collect();
    let results: Vec<PlanResult> = jobs
        .par_iter()
        .map(|&(seed, n_ants)| {
            let cfg = AcsConfig {
                n_ants,
                seed,
                ..acs.clone()
            };
            run_planner(&inputs.net, &inputs.params, k, &Planner::Acs(cfg))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (&(seed, n_ants), r) in jobs.iter().zip(&results) {
        for (i, (&best, &avg)) in r
            .best_so_far_trace
            .iter()
            .zip(&r.avg_cost_trace)
            .enumerate()
        {
            rows.push(TraceRow {
                iteration: i + 1,
                best_so_far: best,
                avg_normalized_cost: avg,
                n_ants: comparing.then_some(n_ants),
                seed: comparing.then_some(seed),
            });
        }
    }
    Ok(rows)
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let comparing = rows.first().is_some_and(|r| r.n_ants.is_some());
    let mut out = String::from("iteration,best_so_far,avg_normalized_cost");
    if comparing {
        out.push_str(",n_ants,seed");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{}",
            r.iteration,
            num(r.best_so_far),
            num(r.avg_normalized_cost)
        ));
        if let (Some(a), Some(s)) = (r.n_ants, r.seed) {
            out.push_str(&format!(",{a},{s}"));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckDocument {
    pub plan: CommPlan,
    #[serde(flatten)]
    pub assessment: Assessment,
    /// Eigenvalues of the combined matrix, ascending.
    pub lambdas: Vec<f64>,
    /// Two roots per eigenvalue, as `[re, im]`.
    pub roots: Vec<Complex64>,
}

impl CheckDocument {
    pub const CSV_HEADER: &'static str =
        "members,lambda_max,threshold,margin,verdict_prop1,verdict_direct,disagreement,max_re_phi";

    pub fn to_csv(&self) -> String {
        let a = &self.assessment;
        format!(
            "{}\n{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            join_members(&self.plan),
            num(a.lambda_max),
            num(a.threshold),
            num(a.margin),
            a.verdict_prop1,
            a.verdict_direct,
            a.disagreement,
            opt_num(a.max_re_phi)
        )
    }
}

pub fn cmd_check(inputs: &Inputs, members: &[usize]) -> Result<CheckDocument> {
    let n = inputs.net.n_nodes();
    let plan = CommPlan::new(members.iter().copied(), n)?;
    let spectrum = state_spectrum(
        &inputs.params,
        &laplacian(&inputs.net),
        &comm_laplacian(&plan, n),
    )?;
    let lambda = *spectrum.lambdas.last().expect("network has nodes");
    let assessment = assess(inputs, &plan, lambda)?;
    Ok(CheckDocument {
        plan,
        assessment,
        lambdas: spectrum.lambdas,
        roots: spectrum.roots,
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateDocument {
    pub plan: CommPlan,
    pub config: SimConfig,
    pub tolerance: f64,
    pub steps: usize,
    pub rows: usize,
    pub diverged_at: Option<f64>,
    #[serde(flatten)]
    pub metrics: SettlingMetrics,
}

pub fn cmd_simulate(
    inputs: &Inputs,
    members: &[usize],
    config: &SimConfig,
    tolerance: f64,
) -> Result<(Trajectory, SimulateDocument)> {
    let plan = CommPlan::new(members.iter().copied(), inputs.net.n_nodes())?;
    let traj = simulate(&inputs.net, &plan, &inputs.params, config)?;
    let metrics = settling_metrics(&traj, tolerance)?;
    let doc = SimulateDocument {
        plan,
        config: config.clone(),
        tolerance,
        steps: config.steps(),
        rows: traj.len(),
        diverged_at: traj.diverged_at,
        metrics,
    };
    Ok((traj, doc))
}

// ---------------------------------------------------------------- manifest

/// Record written next to every output file; re-running `args` with the
/// same version reproduces the outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
    pub command: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub topology: String,
    pub params: Option<String>,
    pub algorithms: Vec<String>,
    pub k: Vec<usize>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

/// `SOURCE_DATE_EPOCH` when set and numeric, else the system clock.
pub fn manifest_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

/// Manifest path for an output file: `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    name.into()
}

// ---------------------------------------------------------------- parsing

/// `"a..b"` (inclusive), `"a..b:step"`, or a comma list.
pub fn parse_range(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidConfig(format!("bad range or list `{text}`"));
    let text = text.trim();
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, step.trim().parse::<u64>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        if step == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step as usize).collect());
    }
    parse_list(text)
}

/// Comma-separated integers; empty text is the empty list.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("`{s}` is not a valid number")))
        })
        .collect()
}

/// `node:delta_xi:delta_theta`.
pub fn parse_disturbance(text: &str) -> Result<Disturbance> {
    let bad = || {
        Error::InvalidConfig(format!(
            "disturbance `{text}` is not node:delta_xi:delta_theta"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [node, dxi, dtheta] = parts[..] else {
        return Err(bad());
    };
    Ok(Disturbance {
        node: node.trim().parse().map_err(|_| bad())?,
        delta_xi: dxi.trim().parse().map_err(|_| bad())?,
        delta_theta: dtheta.trim().parse().map_err(|_| bad())?,
    })
}
