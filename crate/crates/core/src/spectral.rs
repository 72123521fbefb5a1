//! Symmetric eigenvalue machinery and the two synchronization verdicts.
//!
//! Dense orders up to [`DENSE_LIMIT`] go through Householder reduction to
//! tridiagonal form followed by implicit QL with Wilkinson-style shifts (the
//! EISPACK `tred2`/`tql2` pair). Larger matrices fall back to power iteration
//! on `A + sI`, with `s` the infinity norm so the top eigenvalue dominates.
//!
//! The eigenvalue-only path ([`largest_eigenvalue`]) performs exactly the
//! same floating-point operations on the diagonal and sub-diagonal as the
//! full decomposition, so both report bitwise-identical eigenvalues.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{combined_matrix, sync_threshold, GridParams, SymMatrix};

/// Orders above this use the shifted power iteration in [`lambda_max`].
pub const DENSE_LIMIT: usize = 512;

const QL_MAX_SWEEPS: usize = 60;
const POWER_MAX_ITERATIONS: usize = 200_000;
const SECULAR_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    /// Unit eigenvector for `lambda_max`; its largest-magnitude entry is
    /// positive.
    pub top_vector: Vec<f64>,
    /// Every eigenvalue, ascending, when a full decomposition was requested.
    pub all_lambdas: Option<Vec<f64>>,
}

/// Full eigendecomposition: ascending eigenvalues and matching unit columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the eigenvector of `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

pub fn eigen_decomposition(a: &SymMatrix) -> Result<Eigen> {
    let n = a.order();
    let (mut d, mut e, mut v) = tridiagonalize(a, true);
    ql_implicit(&mut d, &mut e, Some(&mut v), n)?;
    let order = ascending_order(&d);
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| v[k * n..(k + 1) * n].to_vec())
        .collect();
    Ok(Eigen { values, vectors })
}

/// All eigenvalues, ascending.
pub fn eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.order();
    let (mut d, mut e, _) = tridiagonalize(a, false);
    ql_implicit(&mut d, &mut e, None, n)?;
    let order = ascending_order(&d);
    Ok(order.iter().map(|&k| d[k]).collect())
}

/// Largest eigenvalue without the eigenvector; the hot path for planners.
pub fn largest_eigenvalue(a: &SymMatrix) -> Result<f64> {
    if a.order() == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let n = a.order();
    let (mut d, mut e, _) = tridiagonalize(a, false);
    ql_implicit(&mut d, &mut e, None, n)?;
    Ok(d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Dominant (largest signed) eigenpair.
pub fn lambda_max(a: &SymMatrix, tol: f64) -> Result<SpectralSummary> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let n = a.order();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if n > DENSE_LIMIT {
        return lambda_max_power(a, tol, POWER_MAX_ITERATIONS);
    }
    let eig = eigen_decomposition(a)?;
    let lambda = eig.values[n - 1];
    let mut v = eig.vectors[n - 1].clone();
    canonical_sign(&mut v);
    check_residual(a, lambda, &v)?;
    Ok(SpectralSummary {
        lambda_max: lambda,
        top_vector: v,
        all_lambdas: None,
    })
}

/// Shifted power iteration: iterates on `A + sI` with `s = ‖A‖∞`, so every
/// eigenvalue of the shifted matrix is non-negative and the top one
/// dominates. Stops once `‖Av − ρv‖ ≤ tol · max(1, |ρ|)`.
pub fn lambda_max_power(a: &SymMatrix, tol: f64, max_iterations: usize) -> Result<SpectralSummary> {
    let n = a.order();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let shift = a.max_abs_row_sum();
    let shifted = a.shifted(shift);

    // fixed start vector with no special structure
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = splitmix64(state);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    normalize(&mut v);

    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let mut w = shifted.mul_vec(&v);
        let norm = normalize(&mut w);
        if norm == 0.0 {
            // A = -sI exactly on the start vector's span
            break;
        }
        v = w;
        let av = a.mul_vec(&v);
        let rho: f64 = av.iter().zip(&v).map(|(x, y)| x * y).sum();
        residual = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - rho * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * rho.abs().max(1.0) {
            canonical_sign(&mut v);
            return Ok(SpectralSummary {
                lambda_max: rho,
                top_vector: v,
                all_lambdas: None,
            });
        }
    }
    Err(Error::NoConvergence { residual })
}

/// All eigenvalues ascending plus the top eigenvector.
pub fn full_spectrum(a: &SymMatrix) -> Result<SpectralSummary> {
    let n = a.order();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let eig = eigen_decomposition(a)?;
    let mut v = eig.vectors[n - 1].clone();
    canonical_sign(&mut v);
    Ok(SpectralSummary {
        lambda_max: eig.values[n - 1],
        top_vector: v,
        all_lambdas: Some(eig.values),
    })
}

/// First-order estimate `vᵀAv + vᵀΔv` of the top eigenvalue of `A + Δ`.
pub fn rayleigh_estimate(a: &SymMatrix, v: &[f64], delta: &SymMatrix) -> Result<f64> {
    if v.len() != a.order() || delta.order() != a.order() {
        return Err(Error::DimensionMismatch {
            expected: a.order(),
            found: if v.len() != a.order() {
                v.len()
            } else {
                delta.order()
            },
        });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnitVector { norm });
    }
    Ok(a.quadratic_form(v) + delta.quadratic_form(v))
}

/// Roots of one decoupled mode `M φ² + D φ − b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRoots {
    pub phi1: Complex64,
    pub phi2: Complex64,
}

impl ModeRoots {
    pub fn max_re(&self) -> f64 {
        self.phi1.re.max(self.phi2.re)
    }
}

/// Characteristic roots for mode eigenvalue `lambda_i`, with the bracket
/// `b = h + V²XM|Z|⁻² λ_i`.
pub fn mode_roots(params: &GridParams, lambda_i: f64) -> ModeRoots {
    let bracket = params.feedback_slope
        + params.voltage * params.voltage * params.reactance * params.inertia * lambda_i
            / params.impedance_sq();
    mode_roots_for_bracket(params.inertia, params.damping, bracket)
}

/// `φ₁,₂ = (−D ± √(D² + 4M b)) / 2M`.
pub fn mode_roots_for_bracket(inertia: f64, damping: f64, bracket: f64) -> ModeRoots {
    let disc = damping * damping + 4.0 * inertia * bracket;
    let root = Complex64::new(disc, 0.0).sqrt();
    let two_m = 2.0 * inertia;
    ModeRoots {
        phi1: (Complex64::new(-damping, 0.0) + root) / two_m,
        phi2: (Complex64::new(-damping, 0.0) - root) / two_m,
    }
}

/// Threshold test on the largest eigenvalue of the combined matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncVerdict {
    pub lambda_max: f64,
    pub threshold: f64,
    /// `threshold − lambda_max`.
    pub margin: f64,
    /// Strict: `lambda_max < threshold`.
    pub synchronizable: bool,
}

pub fn threshold_verdict(params: &GridParams, lambda: f64) -> SyncVerdict {
    let threshold = sync_threshold(params);
    SyncVerdict {
        lambda_max: lambda,
        threshold,
        margin: threshold - lambda,
        synchronizable: lambda < threshold,
    }
}

pub fn is_synchronizable_prop1(
    params: &GridParams,
    lp: &SymMatrix,
    lc: &SymMatrix,
) -> Result<SyncVerdict> {
    let a = combined_matrix(params, lp, lc)?;
    Ok(threshold_verdict(params, largest_eigenvalue(&a)?))
}

/// Eigenvalues of the block state matrix `[[0, I], [A, −(D/M) I]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSpectrum {
    /// Two roots per eigenvalue of `A`, ordered by ascending eigenvalue,
    /// `+` root first.
    pub roots: Vec<Complex64>,
    /// Eigenvalues of `A`, ascending.
    pub lambdas: Vec<f64>,
    /// Largest real part over all `2N` roots (includes the marginal
    /// rigid-body root at 0).
    pub abscissa: f64,
    /// Largest eigenvalue of `A` on the disagreement subspace `1⊥`.
    pub non_rigid_lambda_max: Option<f64>,
    /// Largest real part over the modes orthogonal to the consensus
    /// direction; `None` for a single generator.
    pub non_rigid_abscissa: Option<f64>,
    pub is_synchronizable_direct: bool,
}

/// Both roots of `φ² + (D/M) φ − λ = 0`.
pub fn state_roots(damping_ratio: f64, lambda: f64) -> [Complex64; 2] {
    let disc = Complex64::new(damping_ratio * damping_ratio + 4.0 * lambda, 0.0).sqrt();
    let b = Complex64::new(-damping_ratio, 0.0);
    [(b + disc) / 2.0, (b - disc) / 2.0]
}

pub fn state_spectrum(
    params: &GridParams,
    lp: &SymMatrix,
    lc: &SymMatrix,
) -> Result<StateSpectrum> {
    let a = combined_matrix(params, lp, lc)?;
    state_spectrum_of(&a, params.damping / params.inertia)
}

/// State spectrum for an explicit coupling block `a`.
pub fn state_spectrum_of(a: &SymMatrix, damping_ratio: f64) -> Result<StateSpectrum> {
    let lambdas = eigenvalues(a)?;
    let roots: Vec<Complex64> = lambdas
        .iter()
        .flat_map(|&l| state_roots(damping_ratio, l))
        .collect();
    let abscissa = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);

    let non_rigid = disagreement_eigenvalues(a)?;
    let non_rigid_lambda_max = non_rigid.last().copied();
    let non_rigid_abscissa = non_rigid_lambda_max.map(|l| {
        state_roots(damping_ratio, l)
            .iter()
            .map(|r| r.re)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(StateSpectrum {
        roots,
        lambdas,
        abscissa,
        non_rigid_lambda_max,
        non_rigid_abscissa,
        is_synchronizable_direct: non_rigid_abscissa.is_none_or(|x| x < 0.0),
    })
}

/// Largest eigenvalue of `diag(values) + rho·z zᵀ`, with `values` ascending.
///
/// The answer is the largest root of the secular equation
/// `1/rho + Σ z_i² / (values_i − μ) = 0`, which interlacing confines to
/// `[values[n−2], values[n−1]]` when `rho < 0` and to
/// `[values[n−1], values[n−1] + rho‖z‖²]` when `rho > 0`. The secular function
/// increases between poles, so safeguarded Newton with a shrinking bracket
/// converges; components of `z` that vanish simply leave the corresponding
/// eigenvalue in place, which the bracket endpoints already cover.
pub fn rank_one_update_top(values: &[f64], z: &[f64], rho: f64) -> Result<f64> {
    let n = values.len();
    if n == 0 || z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(1),
            found: z.len(),
        });
    }
    let top = values[n - 1];
    let z_sq: f64 = z.iter().map(|x| x * x).sum();
    if rho == 0.0 || z_sq == 0.0 {
        return Ok(top);
    }
    if n == 1 {
        return Ok(top + rho * z_sq);
    }
    let (mut lo, mut hi) = if rho < 0.0 {
        (values[n - 2], top)
    } else {
        (top, top + rho * z_sq)
    };
    let inv_rho = 1.0 / rho;
    let secular = |mu: f64| {
        let mut f = inv_rho;
        let mut df = 0.0;
        for (&v, &zi) in values.iter().zip(z) {
            let t = zi / (v - mu);
            f += zi * t;
            df += t * t;
        }
        (f, df)
    };

    let mut mu = lo + 0.5 * (hi - lo);
    for _ in 0..SECULAR_MAX_ITERATIONS {
        if mu <= lo || mu >= hi {
            break;
        }
        let (f, df) = secular(mu);
        if f == 0.0 {
            return Ok(mu);
        }
        if f < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu - f / df;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            lo + 0.5 * (hi - lo)
        };
        if (next - mu).abs() <= 2.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        mu = next;
    }
    Ok(lo + 0.5 * (hi - lo))
}

/// Eigenvalues of `a` restricted to the complement of the all-ones vector,
/// ascending. `a` must have the all-ones vector in its kernel (any weighted
/// Laplacian does). The consensus direction is pushed below the spectrum by
/// subtracting `σ·11ᵀ/n` and then dropped.
pub fn disagreement_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.order();
    let sigma = 2.0 * a.max_abs_row_sum() + 1.0;
    let mut deflated = a.clone();
    let w = -sigma / n as f64;
    for i in 0..n {
        for j in i..n {
            deflated.add_sym(i, j, w);
        }
    }
    let mut values = eigenvalues(&deflated)?;
    values.remove(0);
    Ok(values)
}

fn check_residual(a: &SymMatrix, lambda: f64, v: &[f64]) -> Result<()> {
    let av = a.mul_vec(v);
    let residual = av
        .iter()
        .zip(v)
        .map(|(x, y)| (x - lambda * y).powi(2))
        .sum::<f64>()
        .sqrt();
    if residual > 1e-8 * lambda.abs().max(1.0) {
        return Err(Error::NoConvergence { residual });
    }
    Ok(())
}

fn ascending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    order
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is
/// positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Householder reduction to tridiagonal form. Returns the diagonal, the
/// sub-diagonal (`e[i]` couples `i − 1` and `i`, `e[0] = 0`) and, when
/// requested, the accumulated orthogonal transform with column `k` stored
/// contiguously at `[k * n, (k + 1) * n)`.
fn tridiagonalize(a: &SymMatrix, want_vectors: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.order();
    let mut v = a.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return (d, e, v);
    }
    // Column-major view of the (symmetric) input, so the inner loops below
    // walk contiguous memory; the arithmetic is unchanged.
    let idx = |r: usize, c: usize| c * n + r;

    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !want_vectors {
        for i in 0..n {
            d[i] = v[idx(i, i)];
        }
        e[0] = 0.0;
        return (d, e, Vec::new());
    }

    for i in 0..(n - 1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
    (d, e, v)
}

/// `sqrt(a² + b²)`; plain squares unless they could over- or underflow.
#[inline]
fn pythag(a: f64, b: f64) -> f64 {
    let big = a.abs().max(b.abs());
    if (1e-150..1e150).contains(&big) {
        (a * a + b * b).sqrt()
    } else {
        a.hypot(b)
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. On return `d` holds the
/// (unsorted) eigenvalues and `z`, if given, the rotated eigenvectors, one
/// per contiguous block of `n`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Vec<f64>>, n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n - 1] is zero, so m < n here
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(Error::NoConvergence {
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = pythag(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = pythag(p, e[i]);
                    e[i + 1] = s * r;
                    let inv = 1.0 / r;
                    s = e[i] * inv;
                    c = p * inv;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (lo, hi) = z[i * n..(i + 2) * n].split_at_mut(n);
                        for (zi, zh) in lo.iter_mut().zip(hi.iter_mut()) {
                            let h = *zh;
                            *zh = s * *zi + c * h;
                            *zi = c * *zi - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
