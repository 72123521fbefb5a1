//! Test-only oracles. Nothing here calls into the crate's eigen-solver or
//! integrator, so agreement with them is an independent check.
#![allow(dead_code)]

use gridsync::{CommPlan, GridParams, PowerNetwork, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass is below
/// 1e-14 of the total. Returns ascending eigenvalues.
pub fn jacobi_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-28 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    d
}

pub fn oracle_lambda_max(m: &SymMatrix) -> f64 {
    *jacobi_eigenvalues(&m.rows()).last().unwrap()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            rows[i][j] = x;
            rows[j][i] = x;
        }
    }
    SymMatrix::from_rows(&rows).unwrap()
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `p`.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, p: f64) -> PowerNetwork {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if !edges.contains(&(a, b)) && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    PowerNetwork::new(n, &edges).unwrap()
}

pub fn path(n: usize) -> PowerNetwork {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    PowerNetwork::new(n, &edges).unwrap()
}

pub fn cycle(n: usize) -> PowerNetwork {
    let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    edges.push((0, n - 1));
    PowerNetwork::new(n, &edges).unwrap()
}

pub fn star(n: usize) -> PowerNetwork {
    let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
    PowerNetwork::new(n, &edges).unwrap()
}

/// Combined matrix assembled entry by entry from the graph definitions.
pub fn combined_by_hand(params: &GridParams, net: &PowerNetwork, plan: &[usize]) -> SymMatrix {
    SymMatrix::from_rows(&coupling_by_hand(params, net, plan, 1.0)).unwrap()
}

/// `(h/M)·L_c + power_scale·c_p·L_p` as dense rows.
fn coupling_by_hand(
    params: &GridParams,
    net: &PowerNetwork,
    plan: &[usize],
    power_scale: f64,
) -> Vec<Vec<f64>> {
    let n = net.n_nodes();
    let cp = power_scale * params.voltage * params.voltage * params.reactance
        / (params.resistance * params.resistance + params.reactance * params.reactance);
    let cc = params.feedback_slope / params.inertia;
    let mut rows = vec![vec![0.0; n]; n];
    for &(a, b) in net.edges() {
        rows[a][b] -= cp;
        rows[b][a] -= cp;
        rows[a][a] += cp;
        rows[b][b] += cp;
    }
    for (x, &i) in plan.iter().enumerate() {
        for &j in &plan[x + 1..] {
            rows[i][j] -= cc;
            rows[j][i] -= cc;
            rows[i][i] += cc;
            rows[j][j] += cc;
        }
    }
    rows
}

/// State matrix `[[0, I], [A′, −(D/M) I]]`. `A′` carries the power term
/// as `c_p/M` (`literal = false`) or as `c_p` (`literal = true`).
pub fn state_matrix_by_hand(
    p: &GridParams,
    net: &PowerNetwork,
    plan: &[usize],
    literal: bool,
) -> Vec<Vec<f64>> {
    let n = net.n_nodes();
    let power_scale = if literal { 1.0 } else { 1.0 / p.inertia };
    let a = coupling_by_hand(p, net, plan, power_scale);
    let mut f = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        f[i][n + i] = 1.0;
        f[n + i][..n].copy_from_slice(&a[i]);
        f[n + i][n + i] = -p.damping / p.inertia;
    }
    f
}

/// Exhaustive minimum over all K-subsets using the Jacobi oracle. Returns
/// the minimum λ_max.
pub fn oracle_best_lambda(params: &GridParams, net: &PowerNetwork, k: usize) -> f64 {
    let n = net.n_nodes();
    let mut best = f64::INFINITY;
    for mask in 0u64..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let plan: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let l = oracle_lambda_max(&combined_by_hand(params, net, &plan));
        best = best.min(l);
    }
    best
}

pub fn plan(nodes: &[usize], n: usize) -> CommPlan {
    CommPlan::new(nodes.iter().copied(), n).unwrap()
}

/// Dense row-major square matrix helpers for the exponential oracle.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `exp(F t)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(f: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = f.len();
    let norm: f64 = f
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * t.abs();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = t / 2f64.powi(squarings);
    let a: Vec<Vec<f64>> = f
        .iter()
        .map(|r| r.iter().map(|x| x * scale).collect())
        .collect();
    let mut result: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = mat_mul(&term, &a);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}
