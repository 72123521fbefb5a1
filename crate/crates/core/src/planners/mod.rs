//! Communication-plan search under a link budget `K`.
//!
//! A candidate link joins the control center to one generator, so a plan
//! with budget `K` is a `K`-subset of generators. Every planner minimizes the
//! largest eigenvalue of the combined coupling matrix and returns a
//! [`PlanResult`].

mod acs;
mod baselines;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{add_clique, laplacian, CommPlan, GridParams, PowerNetwork, SymMatrix};
use crate::spectral::{eigen_decomposition, largest_eigenvalue, rank_one_update_top};

pub use acs::{
    acs_plan, ant_rng, global_pheromone_update, local_pheromone_update, select_edge,
    select_edge_with_draws, transition_probabilities, AcsConfig, AntState, PheromoneTable,
};
pub use baselines::{
    brute_force_optimal, greedy_exhaustive, greedy_rayleigh, random_plan, BRUTE_FORCE_LIMIT,
};

/// Added to the shifted cost so it stays strictly positive.
pub const COST_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Acs,
    Greedy,
    Rayleigh,
    Random,
    Brute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Acs,
        Algorithm::Greedy,
        Algorithm::Rayleigh,
        Algorithm::Random,
        Algorithm::Brute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Acs => "acs",
            Algorithm::Greedy => "greedy",
            Algorithm::Rayleigh => "rayleigh",
            Algorithm::Random => "random",
            Algorithm::Brute => "brute",
        }
    }

    /// Whether the result depends on the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Acs | Algorithm::Random)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown algorithm `{s}` (expected acs, greedy, rayleigh, random or brute)"
                ))
            })
    }
}

/// A planner together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Planner {
    Acs(AcsConfig),
    Greedy,
    Rayleigh,
    Random { seed: u64 },
    Brute,
}

impl Planner {
    /// Builds the planner for `algorithm`; `seed` overrides the ACS seed.
    pub fn new(algorithm: Algorithm, acs: &AcsConfig, seed: u64) -> Self {
        match algorithm {
            Algorithm::Acs => Planner::Acs(AcsConfig {
                seed,
                ..acs.clone()
            }),
            Algorithm::Greedy => Planner::Greedy,
            Algorithm::Rayleigh => Planner::Rayleigh,
            Algorithm::Random => Planner::Random { seed },
            Algorithm::Brute => Planner::Brute,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Planner::Acs(_) => Algorithm::Acs,
            Planner::Greedy => Algorithm::Greedy,
            Planner::Rayleigh => Algorithm::Rayleigh,
            Planner::Random { .. } => Algorithm::Random,
            Planner::Brute => Algorithm::Brute,
        }
    }
}

/// Runs `planner` on the instance.
pub fn run_planner(
    net: &PowerNetwork,
    params: &GridParams,
    k: usize,
    planner: &Planner,
) -> Result<PlanResult> {
    match planner {
        Planner::Acs(cfg) => acs_plan(net, params, k, cfg),
        Planner::Greedy => greedy_exhaustive(net, params, k),
        Planner::Rayleigh => greedy_rayleigh(net, params, k),
        Planner::Random { seed } => random_plan(net, params, k, *seed),
        Planner::Brute => brute_force_optimal(net, params, k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub algorithm: Algorithm,
    pub plan: CommPlan,
    pub lambda_max: f64,
    /// ACS: best λ_max after each iteration. Greedy planners: λ_max after
    /// each accepted link, starting with the empty plan.
    pub best_so_far_trace: Vec<f64>,
    /// ACS only: per-iteration mean shifted cost, divided by its maximum.
    pub avg_cost_trace: Vec<f64>,
    /// ACS only: per-iteration mean shifted cost before normalization.
    pub raw_avg_cost_trace: Vec<f64>,
    /// ACS only: the `K` generators holding the most pheromone.
    pub pheromone_argmax_plan: Option<CommPlan>,
    pub pheromone_argmax_lambda: Option<f64>,
    /// Number of λ_max values computed.
    pub evaluations: usize,
    /// Rayleigh-quotient products (greedy_rayleigh only).
    pub rayleigh_products: usize,
    #[serde(skip)]
    pub wall_time: Duration,
    pub warnings: Vec<String>,
}

impl PlanResult {
    fn single(
        algorithm: Algorithm,
        plan: CommPlan,
        lambda_max: f64,
        evaluations: usize,
        k: usize,
    ) -> Self {
        Self {
            algorithm,
            plan,
            lambda_max,
            best_so_far_trace: vec![lambda_max],
            avg_cost_trace: Vec::new(),
            raw_avg_cost_trace: Vec::new(),
            pheromone_argmax_plan: None,
            pheromone_argmax_lambda: None,
            evaluations,
            rayleigh_products: 0,
            wall_time: Duration::ZERO,
            warnings: budget_warnings(k),
        }
    }
}

pub(crate) fn budget_warnings(k: usize) -> Vec<String> {
    if k == 1 {
        vec!["K = 1 attaches a single generator, which induces no communication edges".into()]
    } else {
        Vec::new()
    }
}

pub(crate) fn check_budget(k: usize, n_nodes: usize) -> Result<()> {
    if k > n_nodes {
        return Err(Error::BudgetOutOfRange { k, n_nodes });
    }
    Ok(())
}

/// λ_max of the combined matrix as a function of the plan, with memoization.
/// Values are pure functions of the plan, so the cache never changes results.
#[derive(Debug, Clone)]
pub struct Objective {
    power: SymMatrix,
    comm_coupling: f64,
    cache: HashMap<CommPlan, f64>,
    attach_cache: HashMap<CommPlan, Vec<f64>>,
    evaluations: usize,
}

impl Objective {
    pub fn new(net: &PowerNetwork, params: &GridParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            power: laplacian(net).scaled(params.power_coupling()),
            comm_coupling: params.comm_coupling(),
            cache: HashMap::new(),
            attach_cache: HashMap::new(),
            evaluations: 0,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.power.order()
    }

    pub fn comm_coupling(&self) -> f64 {
        self.comm_coupling
    }

    /// `c_c·L_c(plan) + c_p·L_p`.
    pub fn matrix(&self, plan: &CommPlan) -> SymMatrix {
        let mut a = self.power.clone();
        add_clique(&mut a, plan.members(), self.comm_coupling);
        a
    }

    pub fn lambda(&mut self, plan: &CommPlan) -> Result<f64> {
        if let Some(&v) = self.cache.get(plan) {
            return Ok(v);
        }
        let v = largest_eigenvalue(&self.matrix(plan))?;
        self.evaluations += 1;
        self.cache.insert(plan.clone(), v);
        Ok(v)
    }

    /// λ_max of `partial ∪ {c}` for every generator `c` outside `partial`
    /// (members get NaN).
    ///
    /// Attaching `c` to a partial plan `S` with `s ≥ 1` members changes the
    /// combined matrix by `c_c` times the star Laplacian from `c` to `S`,
    /// which splits as
    ///
    /// `c_c·(P_S − 1_S1_Sᵀ/s) + c_c·w wᵀ`, with `w = √s·e_c − 1_S/√s`
    ///
    /// and `P_S` the diagonal indicator of `S`. The first term does not depend
    /// on `c`, so one eigendecomposition of the shared part serves every
    /// candidate, each of which is then a rank-one secular problem.
    pub fn attach_costs(&mut self, partial: &CommPlan) -> Result<&[f64]> {
        if !self.attach_cache.contains_key(partial) {
            let costs = self.compute_attach_costs(partial)?;
            self.attach_cache.insert(partial.clone(), costs);
        }
        Ok(&self.attach_cache[partial])
    }

    fn compute_attach_costs(&mut self, partial: &CommPlan) -> Result<Vec<f64>> {
        let n = self.n_nodes();
        let members = partial.members();
        let s = members.len();
        let mut costs = vec![f64::NAN; n];
        if s == n {
            return Ok(costs);
        }
        if s == 0 || self.comm_coupling == 0.0 {
            // a one-member clique adds no edge; a zero weight adds nothing
            let base = self.lambda(partial)?;
            for (c, cost) in costs.iter_mut().enumerate() {
                if !partial.contains(c) {
                    *cost = base;
                }
            }
            return Ok(costs);
        }

        let cc = self.comm_coupling;
        let sf = s as f64;
        let mut shared = self.matrix(partial);
        for &i in members {
            shared.add_sym(i, i, cc);
            for &j in members {
                if j >= i {
                    shared.add_sym(i, j, -cc / sf);
                }
            }
        }
        let eig = eigen_decomposition(&shared)?;
        let root = sf.sqrt();
        let member_sums: Vec<f64> = eig
            .vectors
            .iter()
            .map(|v| members.iter().map(|&m| v[m]).sum())
            .collect();
        let mut z = vec![0.0; n];
        for (c, cost) in costs.iter_mut().enumerate() {
            if partial.contains(c) {
                continue;
            }
            for (zk, (v, &u)) in z.iter_mut().zip(eig.vectors.iter().zip(&member_sums)) {
                *zk = root * v[c] - u / root;
            }
            *cost = rank_one_update_top(&eig.values, &z, cc)?;
            self.evaluations += 1;
        }
        Ok(costs)
    }

    /// Offset making every cost positive: `−c_c·N + ε`. `c_c·N` lower-bounds
    /// the smallest eigenvalue of any reachable combined matrix.
    pub fn cost_shift(&self) -> f64 {
        -self.comm_coupling * self.n_nodes() as f64 + COST_EPSILON
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// λ_max after attaching `candidate` to the partial plan.
pub fn edge_cost(
    net: &PowerNetwork,
    params: &GridParams,
    partial: &CommPlan,
    candidate: usize,
) -> Result<f64> {
    if candidate >= net.n_nodes() {
        return Err(Error::InvalidPlanNode {
            node: candidate,
            n_nodes: net.n_nodes(),
        });
    }
    if partial.contains(candidate) {
        return Err(Error::CandidateSelected(candidate));
    }
    Objective::new(net, params)?.lambda(&partial.with(candidate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> GridParams {
        GridParams {
            resistance: 0.0,
            reactance: 1.0,
            ..GridParams::default()
        }
    }

    #[test]
    fn first_candidate_costs_tie() {
        let net = PowerNetwork::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let p = GridParams::default();
        let base = largest_eigenvalue(&laplacian(&net).scaled(p.power_coupling())).unwrap();
        for c in 0..4 {
            assert_eq!(edge_cost(&net, &p, &CommPlan::empty(), c).unwrap(), base);
        }
    }

    #[test]
    fn pair_cost_on_single_edge() {
        // (c_p + c_c)·L_edge has spectrum {0, 2(c_p + c_c)} = {0, 0}
        let net = PowerNetwork::new(2, &[(0, 1)]).unwrap();
        let p = unit_params();
        let plan = CommPlan::new([0], 2).unwrap();
        let cost = edge_cost(&net, &p, &plan, 1).unwrap();
        assert!(cost.abs() < 1e-15);

        let p = GridParams {
            feedback_slope: -0.25,
            ..unit_params()
        };
        let cost = edge_cost(&net, &p, &plan, 1).unwrap();
        assert!((cost - 2.0 * (1.0 - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn selected_candidate_is_rejected() {
        let net = PowerNetwork::new(2, &[(0, 1)]).unwrap();
        let plan = CommPlan::new([0], 2).unwrap();
        assert!(matches!(
            edge_cost(&net, &GridParams::default(), &plan, 0),
            Err(Error::CandidateSelected(0))
        ));
        assert!(matches!(
            edge_cost(&net, &GridParams::default(), &plan, 7),
            Err(Error::InvalidPlanNode { .. })
        ));
    }

    #[test]
    fn objective_caches_by_plan() {
        let net = PowerNetwork::new(3, &[(0, 1), (1, 2)]).unwrap();
        let mut obj = Objective::new(&net, &GridParams::default()).unwrap();
        let plan = CommPlan::new([0, 2], 3).unwrap();
        let a = obj.lambda(&plan).unwrap();
        let b = obj.lambda(&plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(obj.evaluations(), 1);
        assert!(obj.cost_shift() > 0.0);
        assert_eq!(obj.cost_shift(), 3.0 + COST_EPSILON);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("aco".parse::<Algorithm>().is_err());
    }
}
