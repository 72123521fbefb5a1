//! Ant Colony System planner.
//!
//! All ants start at the control center. At each step an ant scores every
//! generator not yet on its tabu list by the λ_max the plan would have with
//! that generator attached, turns the scores into transition probabilities
//! from pheromone and shifted cost, and picks one either greedily (when the
//! uniform draw `q` exceeds `Q`) or by roulette wheel. After the ant has
//! collected `K` generators, each chosen link receives `γ/g` pheromone, `g`
//! being the shifted cost observed when it was chosen. After every ant of an
//! iteration has finished, all pheromone evaporates by the factor `ρ`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{budget_warnings, check_budget, Algorithm, Objective, PlanResult};
use crate::error::{Error, Result};
use crate::grid::{CommPlan, GridParams, PowerNetwork};
use crate::spectral::splitmix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcsConfig {
    pub n_ants: usize,
    pub n_iterations: usize,
    /// Pheromone award `γ`.
    pub gamma: f64,
    /// Evaporation factor `ρ`.
    pub rho: f64,
    /// Exploitation threshold `Q`.
    pub q_threshold: f64,
    /// Pheromone exponent `α`.
    pub alpha: f64,
    /// Cost exponent `β`.
    pub beta: f64,
    /// Initial pheromone on every candidate link.
    pub tau0: f64,
    pub seed: u64,
}

impl Default for AcsConfig {
    fn default() -> Self {
        Self {
            n_ants: 15,
            n_iterations: 30,
            gamma: 10.0,
            rho: 0.9,
            q_threshold: 0.9,
            alpha: 2.0,
            beta: 2.0,
            tau0: 1.0,
            seed: 1,
        }
    }
}

impl AcsConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.n_ants >= 1, "n_ants must be >= 1"),
            (self.rho > 0.0 && self.rho < 1.0, "rho must be in (0, 1)"),
            (self.gamma > 1.0, "gamma must be > 1"),
            (
                (0.0..=1.0).contains(&self.q_threshold),
                "q_threshold must be in [0, 1]",
            ),
            (self.tau0 > 0.0 && self.tau0.is_finite(), "tau0 must be > 0"),
            (self.alpha.is_finite(), "alpha must be finite"),
            (self.beta.is_finite(), "beta must be finite"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(msg.into()));
            }
        }
        Ok(())
    }
}

/// Pheromone on each center→generator link.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneTable {
    tau: Vec<f64>,
}

impl PheromoneTable {
    pub fn uniform(n: usize, tau0: f64) -> Self {
        Self { tau: vec![tau0; n] }
    }

    pub fn from_values(tau: Vec<f64>) -> Self {
        Self { tau }
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// The `k` links with the most pheromone; ties go to the lower index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tau.len()).collect();
        order.sort_by(|&a, &b| self.tau[b].total_cmp(&self.tau[a]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        order
    }
}

/// One ant's partial construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AntState {
    pub selected: Vec<usize>,
    pub tabu: Vec<bool>,
    pub alive: bool,
}

impl AntState {
    pub fn new(n: usize) -> Self {
        Self {
            selected: Vec::new(),
            tabu: vec![false; n],
            alive: true,
        }
    }

    /// Records a choice: the node joins the solution and the tabu list.
    pub fn choose(&mut self, node: usize) {
        debug_assert!(!self.tabu[node]);
        self.selected.push(node);
        self.tabu[node] = true;
    }

    pub fn has_candidates(&self) -> bool {
        self.tabu.iter().any(|t| !t)
    }

    pub fn plan(&self) -> CommPlan {
        CommPlan::new(self.selected.iter().copied(), self.tabu.len())
            .expect("ant only selects valid nodes")
    }
}

/// Transition probabilities `τ_j^α g_j^(−β) / Σ τ_h^α g_h^(−β)` over the
/// non-tabu candidates; tabu entries get zero. `costs` holds shifted costs
/// and is ignored where `tabu` is set.
pub fn transition_probabilities(
    tau: &PheromoneTable,
    costs: &[f64],
    cfg: &AcsConfig,
    tabu: &[bool],
) -> Result<Vec<f64>> {
    let n = tau.len();
    if costs.len() != n || tabu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if costs.len() != n {
                costs.len()
            } else {
                tabu.len()
            },
        });
    }
    let mut weights = vec![0.0; n];
    let mut total = 0.0;
    let mut any = false;
    for j in 0..n {
        if tabu[j] {
            continue;
        }
        any = true;
        let g = costs[j];
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::NonPositiveCost(g));
        }
        let w = tau.tau[j].powf(cfg.alpha) * g.powf(-cfg.beta);
        weights[j] = w;
        total += w;
    }
    if !any {
        return Err(Error::AllTabu);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "transition weights sum to {total}"
        )));
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Picks the next node: argmax when `q > Q` (lowest index on ties),
/// otherwise roulette wheel.
pub fn select_edge(probabilities: &[f64], cfg: &AcsConfig, rng: &mut ChaCha8Rng) -> Result<usize> {
    let q: f64 = rng.random();
    let spin = if q > cfg.q_threshold {
        0.0
    } else {
        rng.random()
    };
    select_edge_with_draws(probabilities, cfg.q_threshold, q, spin)
}

/// [`select_edge`] with explicit draws: `q` for the branch and `spin` in
/// `[0, 1)` for the roulette wheel.
pub fn select_edge_with_draws(
    probabilities: &[f64],
    q_threshold: f64,
    q: f64,
    spin: f64,
) -> Result<usize> {
    let last_positive = probabilities
        .iter()
        .rposition(|&p| p > 0.0)
        .ok_or(Error::AllTabu)?;
    if q > q_threshold {
        let mut best = last_positive;
        for (j, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] || (p == probabilities[best] && j < best) {
                best = j;
            }
        }
        return Ok(best);
    }
    let total: f64 = probabilities.iter().sum();
    let target = spin * total;
    let mut acc = 0.0;
    for (j, &p) in probabilities.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        if target < acc {
            return Ok(j);
        }
    }
    Ok(last_positive)
}

/// `τ_chosen += γ / g`.
pub fn local_pheromone_update(
    tau: &mut PheromoneTable,
    chosen: usize,
    g: f64,
    cfg: &AcsConfig,
) -> Result<()> {
    if !(g > 0.0) {
        return Err(Error::NonPositiveCost(g));
    }
    tau.tau[chosen] += cfg.gamma / g;
    Ok(())
}

/// `τ ← ρ τ` on every link.
pub fn global_pheromone_update(tau: &mut PheromoneTable, cfg: &AcsConfig) {
    for t in &mut tau.tau {
        *t *= cfg.rho;
    }
}

/// Independent generator for one ant: ChaCha8 seeded with
/// `seed ⊕ splitmix64(iteration << 32 | ant)`.
pub fn ant_rng(seed: u64, iteration: usize, ant: usize) -> ChaCha8Rng {
    let tag = ((iteration as u64) << 32) | (ant as u64 & 0xffff_ffff);
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(tag))
}

pub fn acs_plan(
    net: &PowerNetwork,
    params: &GridParams,
    k: usize,
    cfg: &AcsConfig,
) -> Result<PlanResult> {
    let start = Instant::now();
    cfg.validate()?;
    let n = net.n_nodes();
    check_budget(k, n)?;
    let mut objective = Objective::new(net, params)?;
    let shift = objective.cost_shift();

    let mut tau = PheromoneTable::uniform(n, cfg.tau0);
    let mut best: Option<(CommPlan, f64)> = None;
    let mut best_trace = Vec::with_capacity(cfg.n_iterations);
    let mut raw_avg = Vec::with_capacity(cfg.n_iterations);
    let mut costs = vec![0.0; n];

    for iteration in 0..cfg.n_iterations {
        let mut cost_sum = 0.0;
        let mut completed = 0usize;
        for ant_index in 0..cfg.n_ants {
            let mut rng = ant_rng(cfg.seed, iteration, ant_index);
            let mut ant = AntState::new(n);
            let mut steps: Vec<(usize, f64)> = Vec::with_capacity(k);
            let mut partial = CommPlan::empty();
            let mut final_lambda = None;

            while ant.alive {
                if ant.selected.len() == k {
                    final_lambda = Some(objective.lambda(&partial)?);
                    ant.alive = false;
                    break;
                }
                if !ant.has_candidates() {
                    // blocked
                    ant.alive = false;
                    break;
                }
                let attach = objective.attach_costs(&partial)?;
                for j in 0..n {
                    if !ant.tabu[j] {
                        costs[j] = attach[j] + shift;
                    }
                }
                let probs = transition_probabilities(&tau, &costs, cfg, &ant.tabu)?;
                let chosen = select_edge(&probs, cfg, &mut rng)?;
                ant.choose(chosen);
                partial = partial.with(chosen);
                steps.push((chosen, costs[chosen]));
            }

            let Some(lambda) = final_lambda else {
                continue;
            };
            for &(node, g) in &steps {
                local_pheromone_update(&mut tau, node, g, cfg)?;
            }
            completed += 1;
            cost_sum += lambda + shift;
            if best.as_ref().is_none_or(|(_, b)| lambda < *b) {
                best = Some((partial, lambda));
            }
        }
        global_pheromone_update(&mut tau, cfg);
        raw_avg.push(if completed > 0 {
            cost_sum / completed as f64
        } else {
            f64::NAN
        });
        best_trace.push(best.as_ref().map_or(f64::INFINITY, |(_, b)| *b));
    }

    let pheromone_plan = CommPlan::new(tau.top_k(k), n)?;
    let pheromone_lambda = objective.lambda(&pheromone_plan)?;
    let (plan, lambda_max) = match best {
        Some((plan, lambda)) if lambda < pheromone_lambda => (plan, lambda),
        _ => (pheromone_plan.clone(), pheromone_lambda),
    };

    let peak = raw_avg
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let avg_cost_trace = raw_avg.iter().map(|x| x / peak).collect();

    Ok(PlanResult {
        algorithm: Algorithm::Acs,
        plan,
        lambda_max,
        best_so_far_trace: best_trace,
        avg_cost_trace,
        raw_avg_cost_trace: raw_avg,
        pheromone_argmax_plan: Some(pheromone_plan),
        pheromone_argmax_lambda: Some(pheromone_lambda),
        evaluations: objective.evaluations(),
        rayleigh_products: 0,
        wall_time: start.elapsed(),
        warnings: budget_warnings(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AcsConfig {
        AcsConfig::default()
    }

    #[test]
    fn defaults_are_the_published_settings() {
        let c = cfg();
        assert_eq!(
            (
                c.n_ants,
                c.n_iterations,
                c.gamma,
                c.rho,
                c.q_threshold,
                c.alpha,
                c.beta
            ),
            (15, 30, 10.0, 0.9, 0.9, 2.0, 2.0)
        );
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_validation() {
        for bad in [
            AcsConfig { rho: 1.0, ..cfg() },
            AcsConfig { rho: 0.0, ..cfg() },
            AcsConfig {
                gamma: 1.0,
                ..cfg()
            },
            AcsConfig {
                q_threshold: 1.5,
                ..cfg()
            },
            AcsConfig { n_ants: 0, ..cfg() },
            AcsConfig { tau0: 0.0, ..cfg() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn probabilities_from_cost() {
        let tau = PheromoneTable::uniform(2, 1.0);
        let p = transition_probabilities(&tau, &[1.0, 2.0], &cfg(), &[false, false]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn probabilities_from_pheromone() {
        let tau = PheromoneTable::from_values(vec![5.0, 1.0]);
        let p = transition_probabilities(&tau, &[1.0, 1.0], &cfg(), &[false, false]).unwrap();
        assert!((p[0] - 25.0 / 26.0).abs() < 1e-15 && (p[1] - 1.0 / 26.0).abs() < 1e-15);
    }

    #[test]
    fn tabu_entries_get_no_mass() {
        let tau = PheromoneTable::uniform(2, 1.0);
        let p = transition_probabilities(&tau, &[f64::NAN, 3.0], &cfg(), &[true, false]).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        assert!(matches!(
            transition_probabilities(&tau, &[1.0, 1.0], &cfg(), &[true, true]),
            Err(Error::AllTabu)
        ));
        assert!(matches!(
            transition_probabilities(&tau, &[0.0, 1.0], &cfg(), &[false, false]),
            Err(Error::NonPositiveCost(_))
        ));
    }

    #[test]
    fn argmax_branch_and_single_candidate() {
        assert_eq!(
            select_edge_with_draws(&[0.2, 0.8], 0.9, 0.95, 0.0).unwrap(),
            1
        );
        assert_eq!(
            select_edge_with_draws(&[0.5, 0.5], 0.9, 0.95, 0.0).unwrap(),
            0
        );
        assert_eq!(select_edge_with_draws(&[1.0], 0.9, 0.5, 0.3).unwrap(), 0);
        assert_eq!(
            select_edge_with_draws(&[0.0, 1.0], 0.9, 0.5, 0.0).unwrap(),
            1
        );
        assert!(select_edge_with_draws(&[0.0, 0.0], 0.9, 0.5, 0.0).is_err());
        assert!(select_edge_with_draws(&[], 0.9, 0.5, 0.0).is_err());
    }

    #[test]
    fn roulette_walks_cumulative_sums() {
        let p = [0.3, 0.0, 0.7];
        assert_eq!(select_edge_with_draws(&p, 0.9, 0.1, 0.0).unwrap(), 0);
        assert_eq!(select_edge_with_draws(&p, 0.9, 0.1, 0.29).unwrap(), 0);
        assert_eq!(select_edge_with_draws(&p, 0.9, 0.1, 0.31).unwrap(), 2);
        assert_eq!(select_edge_with_draws(&p, 0.9, 0.1, 0.999_999).unwrap(), 2);
    }

    #[test]
    fn roulette_frequencies() {
        let c = AcsConfig {
            q_threshold: 1.0,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| select_edge(&[0.3, 0.7], &c, &mut rng).unwrap() == 0)
            .count();
        assert!((hits as f64 / draws as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn local_update_rewards_cheaper_links_more() {
        let mut tau = PheromoneTable::uniform(2, 1.0);
        local_pheromone_update(&mut tau, 0, 5.0, &cfg()).unwrap();
        assert_eq!(tau.values(), &[3.0, 1.0]);
        local_pheromone_update(&mut tau, 1, 2.0, &cfg()).unwrap();
        assert_eq!(tau.values(), &[3.0, 6.0]);
        local_pheromone_update(&mut tau, 1, 1e300, &cfg()).unwrap();
        assert_eq!(tau.values(), &[3.0, 6.0]);
        assert!(local_pheromone_update(&mut tau, 0, 0.0, &cfg()).is_err());
        assert!(local_pheromone_update(&mut tau, 0, -1.0, &cfg()).is_err());
    }

    #[test]
    fn evaporation_scales_and_stays_positive() {
        let mut tau = PheromoneTable::from_values(vec![2.0, 4.0]);
        global_pheromone_update(&mut tau, &cfg());
        assert!((tau.values()[0] - 1.8).abs() < 1e-15);
        assert!((tau.values()[1] - 3.6).abs() < 1e-15);
        for _ in 0..1000 {
            global_pheromone_update(&mut tau, &cfg());
        }
        assert!(tau.values().iter().all(|&t| t > 0.0));
        let mut tau = PheromoneTable::uniform(1, 1.0);
        for _ in 0..7 {
            global_pheromone_update(&mut tau, &cfg());
        }
        assert!((tau.values()[0] - 0.9f64.powi(7)).abs() < 1e-15);
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        let tau = PheromoneTable::from_values(vec![1.0, 3.0, 3.0, 2.0, 3.0]);
        assert_eq!(tau.top_k(2), vec![1, 2]);
        assert_eq!(tau.top_k(4), vec![1, 2, 3, 4]);
        assert_eq!(tau.top_k(0), Vec::<usize>::new());
    }

    #[test]
    fn ant_state_tracks_tabu() {
        let mut ant = AntState::new(3);
        ant.choose(2);
        ant.choose(0);
        assert_eq!(ant.selected, vec![2, 0]);
        assert_eq!(ant.tabu, vec![true, false, true]);
        assert!(ant.has_candidates());
        ant.choose(1);
        assert!(!ant.has_candidates());
        assert_eq!(ant.plan().members(), &[0, 1, 2]);
    }

    #[test]
    fn ant_streams_differ() {
        let a: u64 = ant_rng(1, 0, 0).random();
        let b: u64 = ant_rng(1, 0, 1).random();
        let c: u64 = ant_rng(1, 1, 0).random();
        let again: u64 = ant_rng(1, 0, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, again);
    }
}
