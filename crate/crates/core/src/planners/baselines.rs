//! Reference planners: greedy with exact evaluation, greedy with
//! Rayleigh-quotient estimates, uniform random, and exhaustive search.

use std::time::Instant;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_budget, Algorithm, Objective, PlanResult};
use crate::error::{Error, Result};
use crate::grid::{CommPlan, GridParams, PowerNetwork, SymMatrix};
use crate::spectral::{lambda_max, rayleigh_estimate};

/// Largest number of subsets [`brute_force_optimal`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

const EIGEN_TOL: f64 = 1e-12;

/// Adds, one at a time, the generator whose attachment gives the smallest
/// exact λ_max. Ties go to the lowest index.
pub fn greedy_exhaustive(net: &PowerNetwork, params: &GridParams, k: usize) -> Result<PlanResult> {
    let start = Instant::now();
    let n = net.n_nodes();
    check_budget(k, n)?;
    let mut objective = Objective::new(net, params)?;
    let mut plan = CommPlan::empty();
    let mut trace = vec![objective.lambda(&plan)?];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !plan.contains(c)) {
            let value = objective.lambda(&plan.with(c))?;
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((c, value));
            }
        }
        let (c, value) = best.expect("k <= n leaves a candidate");
        plan = plan.with(c);
        trace.push(value);
    }
    let lambda_max = *trace.last().expect("trace starts non-empty");
    Ok(PlanResult {
        best_so_far_trace: trace,
        wall_time: start.elapsed(),
        ..PlanResult::single(
            Algorithm::Greedy,
            plan,
            lambda_max,
            objective.evaluations(),
            k,
        )
    })
}

/// Greedy on first-order estimates: each candidate is scored by
/// `vᵀ(A + Δ)v`, with `v` the current top eigenvector and `Δ` the change in
/// `c_c·L_c` from attaching it. One exact eigensolve per accepted link.
pub fn greedy_rayleigh(net: &PowerNetwork, params: &GridParams, k: usize) -> Result<PlanResult> {
    let start = Instant::now();
    let n = net.n_nodes();
    check_budget(k, n)?;
    let objective = Objective::new(net, params)?;
    let cc = objective.comm_coupling();

    let mut plan = CommPlan::empty();
    let mut a = objective.matrix(&plan);
    let mut top = lambda_max(&a, EIGEN_TOL)?;
    let mut solves = 1;
    let mut products = 0;
    let mut trace = vec![top.lambda_max];

    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !plan.contains(c)) {
            let delta = attach_delta(n, plan.members(), c, cc);
            let estimate = rayleigh_estimate(&a, &top.top_vector, &delta)?;
            products += 1;
            if best.is_none_or(|(_, b)| estimate < b) {
                best = Some((c, estimate));
            }
        }
        let (c, _) = best.expect("k <= n leaves a candidate");
        plan = plan.with(c);
        a = objective.matrix(&plan);
        top = lambda_max(&a, EIGEN_TOL)?;
        solves += 1;
        trace.push(top.lambda_max);
    }

    Ok(PlanResult {
        best_so_far_trace: trace,
        rayleigh_products: products,
        wall_time: start.elapsed(),
        ..PlanResult::single(Algorithm::Rayleigh, plan, top.lambda_max, solves, k)
    })
}

/// `c_c` times the Laplacian of the star joining `new` to every member.
fn attach_delta(n: usize, members: &[usize], new: usize, cc: f64) -> SymMatrix {
    let mut delta = SymMatrix::zeros(n);
    for &m in members {
        delta.add_sym(new, new, cc);
        delta.add_sym(m, m, cc);
        delta.add_sym(new, m, -cc);
    }
    delta
}

/// Uniformly random `K`-subset drawn from ChaCha8 seeded with `seed`.
pub fn random_plan(
    net: &PowerNetwork,
    params: &GridParams,
    k: usize,
    seed: u64,
) -> Result<PlanResult> {
    let start = Instant::now();
    let n = net.n_nodes();
    check_budget(k, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let plan = CommPlan::new(picks, n)?;
    let mut objective = Objective::new(net, params)?;
    let lambda = objective.lambda(&plan)?;
    Ok(PlanResult {
        wall_time: start.elapsed(),
        ..PlanResult::single(Algorithm::Random, plan, lambda, objective.evaluations(), k)
    })
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact minimizer over every `K`-subset, visited in lexicographic order;
/// the first minimum wins ties.
pub fn brute_force_optimal(
    net: &PowerNetwork,
    params: &GridParams,
    k: usize,
) -> Result<PlanResult> {
    let start = Instant::now();
    let n = net.n_nodes();
    check_budget(k, n)?;
    let subsets = binomial(n, k);
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            subsets,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut objective = Objective::new(net, params)?;
    let mut best: Option<(CommPlan, f64)> = None;
    for combo in (0..n).combinations(k) {
        let plan = CommPlan::new(combo, n)?;
        let value = objective.lambda(&plan)?;
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((plan, value));
        }
    }
    let (plan, lambda) = best.expect("at least one subset");
    Ok(PlanResult {
        wall_time: start.elapsed(),
        ..PlanResult::single(Algorithm::Brute, plan, lambda, objective.evaluations(), k)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> PowerNetwork {
        PowerNetwork::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(39, 20), 68_923_264_410);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn greedy_first_step_takes_index_zero() {
        let r = greedy_exhaustive(&path4(), &GridParams::default(), 1).unwrap();
        assert_eq!(r.plan.members(), &[0]);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn budget_errors() {
        let p = GridParams::default();
        for result in [
            greedy_exhaustive(&path4(), &p, 5),
            greedy_rayleigh(&path4(), &p, 5),
            random_plan(&path4(), &p, 5, 1),
            brute_force_optimal(&path4(), &p, 5),
        ] {
            assert!(matches!(
                result,
                Err(Error::BudgetOutOfRange { k: 5, n_nodes: 4 })
            ));
        }
    }

    #[test]
    fn brute_guard() {
        let net = crate::grid::new_england_39();
        let err = brute_force_optimal(&net, &GridParams::default(), 20).unwrap_err();
        assert!(matches!(err, Error::InstanceTooLarge { .. }));
        assert!(err.to_string().contains("instance too large"));
    }

    #[test]
    fn trivial_budgets() {
        let p = GridParams::default();
        for k in [0, 4] {
            let r = brute_force_optimal(&path4(), &p, k).unwrap();
            assert_eq!(r.plan.len(), k);
            assert_eq!(r.evaluations, 1);
            let g = random_plan(&path4(), &p, k, 3).unwrap();
            assert_eq!(g.plan, r.plan);
        }
        let r = greedy_rayleigh(&path4(), &p, 0).unwrap();
        assert!(r.plan.is_empty());
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn rayleigh_accounting() {
        let p = GridParams::default();
        let r = greedy_rayleigh(&path4(), &p, 3).unwrap();
        assert_eq!(r.evaluations, 4);
        assert_eq!(r.rayleigh_products, 4 + 3 + 2);
        assert_eq!(r.best_so_far_trace.len(), 4);
    }

    #[test]
    fn random_is_seeded() {
        let net = crate::grid::new_england_39();
        let p = GridParams::default();
        let a = random_plan(&net, &p, 10, 42).unwrap();
        let b = random_plan(&net, &p, 10, 42).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.lambda_max, b.lambda_max);
        assert_eq!(a.plan.len(), 10);
    }
}
