//! Time-domain swing dynamics with communication feedback.
//!
//! State is `x = (ξ, θ)` with `ξ̇ = θ` and
//!
//! `θ̇ᵢ = (h/M)·(L_c ξ)ᵢ + (c_p/M)·(L_p ξ)ᵢ − (D/M)·θᵢ`
//!
//! under the default [`Convention::Consistent`]. The nonlinear mode replaces
//! the power term by the exact sine/cosine electric power. Integration is
//! classical fixed-step RK4.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{comm_laplacian, laplacian, CommPlan, GridParams, PowerNetwork, SymMatrix};

/// Norm past which a state counts as blown up.
pub const BLOW_UP_NORM: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Linearized,
    Nonlinear,
}

/// How the coupling block of the state matrix is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Every right-hand term of the `θ̇` equation divided by `M`:
    /// `(h/M) L_c + (c_p/M) L_p`.
    #[default]
    Consistent,
    /// The power term without `1/M`: `(h/M) L_c + c_p L_p`, the matrix whose
    /// λ_max the synchronization threshold is stated for.
    PaperLiteral,
    /// Per-node virtual-network reading: `h/M − c_p N_i` on the diagonal
    /// (`N_i` = power degree) and `c_p` towards each power neighbour.
    /// Linearized mode only.
    VirtualNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disturbance {
    pub node: usize,
    pub delta_xi: f64,
    pub delta_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    /// Applied to the zero equilibrium at `t = 0`.
    pub disturbance: Vec<Disturbance>,
    /// Keep every `record_stride`-th step; the last step is always kept.
    pub record_stride: usize,
    pub convention: Convention,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 20.0,
            mode: Mode::Linearized,
            disturbance: vec![Disturbance {
                node: 0,
                delta_xi: 0.0,
                delta_theta: 0.1,
            }],
            record_stride: 1,
            convention: Convention::Consistent,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be >= dt, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record_stride must be >= 1".into()));
        }
        if self.mode == Mode::Nonlinear && self.convention == Convention::VirtualNetwork {
            return Err(Error::InvalidConfig(
                "the virtual-network convention is linearized only".into(),
            ));
        }
        for d in &self.disturbance {
            if d.node >= n_nodes {
                return Err(Error::InvalidPlanNode {
                    node: d.node,
                    n_nodes,
                });
            }
            if !d.delta_xi.is_finite() || !d.delta_theta.is_finite() {
                return Err(Error::InvalidConfig("disturbance must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of integration steps: `t_end / dt`, rounded up unless it is an
    /// integer to within rounding.
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Rows a full (non-diverging) run records: `⌈steps/stride⌉ + 1`.
    pub fn recorded_rows(&self) -> usize {
        self.steps().div_ceil(self.record_stride) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    /// Angle deviation from the operating point.
    pub xi: Vec<f64>,
    /// Angle rate.
    pub theta: Vec<f64>,
}

impl SystemState {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: vec![0.0; n],
            theta: vec![0.0; n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.xi.len()
    }

    /// `‖ξ − mean(ξ)·1‖₂`.
    pub fn disagreement(&self) -> f64 {
        let n = self.xi.len() as f64;
        let mean = self.xi.iter().sum::<f64>() / n;
        self.xi
            .iter()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn rate_norm(&self) -> f64 {
        self.theta.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn is_blown_up(&self) -> bool {
        let norm_sq: f64 = self.xi.iter().chain(&self.theta).map(|x| x * x).sum();
        !norm_sq.is_finite() || norm_sq.sqrt() > BLOW_UP_NORM
    }

    /// `(ξ, θ)` concatenated.
    pub fn to_vector(&self) -> Vec<f64> {
        self.xi.iter().chain(&self.theta).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    /// Time of the first step whose state was non-finite or exceeded
    /// [`BLOW_UP_NORM`]; integration stops there.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Tabular text: header `t,xi_0..,theta_0..` and one row per sample,
    /// numbers in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, SystemState::n_nodes);
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",xi_{i}"));
        }
        for i in 0..n {
            out.push_str(&format!(",theta_{i}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format_number(*t));
            for x in s.xi.iter().chain(&s.theta) {
                out.push(',');
                out.push_str(&format_number(*x));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

/// Lower-left block `A′` of the state matrix under `convention`.
pub fn coupling_block(
    params: &GridParams,
    net: &PowerNetwork,
    plan: &CommPlan,
    convention: Convention,
) -> Result<SymMatrix> {
    params.validate()?;
    let n = net.n_nodes();
    check_plan(plan, n)?;
    let m = params.inertia;
    let h_over_m = params.feedback_slope / m;
    let cp = params.power_coupling();
    let lp = laplacian(net);
    let lc = comm_laplacian(plan, n);
    match convention {
        Convention::Consistent => lc.lin_comb(h_over_m, &lp, cp / m),
        Convention::PaperLiteral => lc.lin_comb(h_over_m, &lp, cp),
        Convention::VirtualNetwork => {
            let mut a = SymMatrix::zeros(n);
            let degrees = net.degrees();
            for (i, &deg) in degrees.iter().enumerate() {
                a.add_sym(i, i, h_over_m - cp * deg as f64);
            }
            for &(i, j) in net.edges() {
                a.add_sym(i, j, cp);
            }
            Ok(a)
        }
    }
}

/// The `2N × 2N` matrix `F̂ = [[0, I], [A′, −(D/M) I]]`, as rows.
pub fn assemble_state_matrix(
    params: &GridParams,
    net: &PowerNetwork,
    plan: &CommPlan,
    convention: Convention,
) -> Result<Vec<Vec<f64>>> {
    let a = coupling_block(params, net, plan, convention)?;
    let n = net.n_nodes();
    let damping = params.damping / params.inertia;
    let mut f = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        f[i][n + i] = 1.0;
        for j in 0..n {
            f[n + i][j] = a.get(i, j);
        }
        f[n + i][n + i] = -damping;
    }
    Ok(f)
}

/// Exact electric power at `node`:
/// `V² Re Y + (V²/|Z|²)·[R(Nᵢ − Σ cos(δᵢ − δₖ)) − X Σ sin(δᵢ − δₖ)]`,
/// summed over power neighbours `k`, with `δᵢ − δₖ = ξᵢ − ξₖ` because every
/// generator shares the operating angle.
pub fn electric_power_exact(
    state: &SystemState,
    net: &PowerNetwork,
    params: &GridParams,
    node: usize,
) -> Result<f64> {
    let n = net.n_nodes();
    if node >= n {
        return Err(Error::InvalidPlanNode { node, n_nodes: n });
    }
    if state.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.n_nodes(),
        });
    }
    let adjacency = net.adjacency();
    Ok(power_at(&state.xi, &adjacency[node], node, params))
}

fn power_at(xi: &[f64], neighbours: &[usize], node: usize, params: &GridParams) -> f64 {
    let v2 = params.voltage * params.voltage;
    let mut cos_sum = 0.0;
    let mut sin_sum = 0.0;
    for &k in neighbours {
        let diff = xi[node] - xi[k];
        cos_sum += diff.cos();
        sin_sum += diff.sin();
    }
    let n_i = neighbours.len() as f64;
    v2 * params.shunt_conductance
        + v2 / params.impedance_sq()
            * (params.resistance * (n_i - cos_sum) - params.reactance * sin_sum)
}

fn check_plan(plan: &CommPlan, n: usize) -> Result<()> {
    if let Some(&node) = plan.members().iter().find(|&&m| m >= n) {
        return Err(Error::InvalidPlanNode { node, n_nodes: n });
    }
    Ok(())
}

/// Right-hand side of the first-order system.
struct Dynamics {
    n: usize,
    damping: f64,
    /// Linearized: full `A′`. Nonlinear: the communication part only.
    coupling: Vec<f64>,
    /// Nonlinear only: neighbour lists and the factor on the power term.
    nonlinear: Option<(Vec<Vec<usize>>, f64, GridParams)>,
}

impl Dynamics {
    fn new(
        params: &GridParams,
        net: &PowerNetwork,
        plan: &CommPlan,
        sim: &SimConfig,
    ) -> Result<Self> {
        let n = net.n_nodes();
        let (coupling, nonlinear) = match sim.mode {
            Mode::Linearized => (coupling_block(params, net, plan, sim.convention)?, None),
            Mode::Nonlinear => {
                params.validate()?;
                check_plan(plan, n)?;
                let scale = match sim.convention {
                    Convention::PaperLiteral => 1.0,
                    _ => 1.0 / params.inertia,
                };
                let comm = comm_laplacian(plan, n).scaled(params.feedback_slope / params.inertia);
                (comm, Some((net.adjacency(), scale, *params)))
            }
        };
        Ok(Self {
            n,
            damping: params.damping / params.inertia,
            coupling: coupling.as_slice().to_vec(),
            nonlinear,
        })
    }

    /// Writes `ẋ` for `x = (ξ, θ)` into `out`.
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (xi, theta) = x.split_at(n);
        let (dxi, dtheta) = out.split_at_mut(n);
        dxi.copy_from_slice(theta);
        for i in 0..n {
            let row = &self.coupling[i * n..(i + 1) * n];
            let acc: f64 = row.iter().zip(xi).map(|(a, b)| a * b).sum();
            dtheta[i] = acc - self.damping * theta[i];
        }
        if let Some((adjacency, scale, params)) = &self.nonlinear {
            let v2y = params.voltage * params.voltage * params.shunt_conductance;
            for i in 0..n {
                // swing: M θ̇ = P_m − P_e, with P_m = V² Re Y at the operating point
                let pe = power_at(xi, &adjacency[i], i, params);
                dtheta[i] -= scale * (pe - v2y);
            }
        }
    }
}

/// Integrates from the disturbed equilibrium with fixed-step RK4.
pub fn simulate(
    net: &PowerNetwork,
    plan: &CommPlan,
    params: &GridParams,
    sim: &SimConfig,
) -> Result<Trajectory> {
    let n = net.n_nodes();
    sim.validate(n)?;
    let dynamics = Dynamics::new(params, net, plan, sim)?;

    let mut x = vec![0.0; 2 * n];
    for d in &sim.disturbance {
        x[d.node] += d.delta_xi;
        x[n + d.node] += d.delta_theta;
    }
    let steps = sim.steps();
    let dt = sim.dt;
    let mut times = vec![0.0];
    let mut states = vec![split(&x, n)];
    let mut diverged_at = None;

    let mut k1 = vec![0.0; 2 * n];
    let mut k2 = vec![0.0; 2 * n];
    let mut k3 = vec![0.0; 2 * n];
    let mut k4 = vec![0.0; 2 * n];
    let mut tmp = vec![0.0; 2 * n];

    for step in 1..=steps {
        dynamics.eval(&x, &mut k1);
        for i in 0..2 * n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        dynamics.eval(&tmp, &mut k2);
        for i in 0..2 * n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        dynamics.eval(&tmp, &mut k3);
        for i in 0..2 * n {
            tmp[i] = x[i] + dt * k3[i];
        }
        dynamics.eval(&tmp, &mut k4);
        for i in 0..2 * n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let t = step as f64 * dt;
        let state = split(&x, n);
        if state.is_blown_up() {
            diverged_at = Some(t);
            times.push(t);
            states.push(state);
            break;
        }
        if step % sim.record_stride == 0 || step == steps {
            times.push(t);
            states.push(state);
        }
    }
    Ok(Trajectory {
        times,
        states,
        diverged_at,
    })
}

fn split(x: &[f64], n: usize) -> SystemState {
    SystemState {
        xi: x[..n].to_vec(),
        theta: x[n..].to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettlingMetrics {
    /// `e(t_end) < tol · e(0)`, with `e = ‖ξ − mean ξ‖₂ + ‖θ‖₂`.
    pub converged: bool,
    /// First sample time after which `e` stays below `tol · e(0)`.
    pub settling_time: Option<f64>,
    /// Least-squares slope of `ln e(t)` over the second half of the run;
    /// `None` when `e(0) = 0` or too few positive samples remain.
    pub decay_rate: Option<f64>,
    /// Blew up, or ended above its start while growing.
    pub diverged: bool,
    pub initial_error: f64,
    pub final_error: f64,
}

pub fn settling_metrics(traj: &Trajectory, tol: f64) -> Result<SettlingMetrics> {
    if traj.is_empty() {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    let errors: Vec<f64> = traj
        .states
        .iter()
        .map(|s| s.disagreement() + s.rate_norm())
        .collect();
    let initial = errors[0];
    let last = *errors.last().expect("non-empty");
    let threshold = tol * initial;
    let finite = last.is_finite();
    let converged = finite && last < threshold;

    let settling_time = if converged {
        let last_above = errors.iter().rposition(|&e| e >= threshold);
        Some(last_above.map_or(traj.times[0], |i| traj.times[i + 1]))
    } else {
        None
    };

    let decay_rate = if initial > 0.0 {
        let horizon = *traj.times.last().expect("non-empty");
        let start = traj.times[0] + 0.5 * (horizon - traj.times[0]);
        let points: Vec<(f64, f64)> = traj
            .times
            .iter()
            .zip(&errors)
            .filter(|&(&t, &e)| t >= start && e > 0.0 && e.is_finite())
            .map(|(&t, &e)| (t, e.ln()))
            .collect();
        least_squares_slope(&points)
    } else {
        None
    };

    let blown_up = traj.diverged_at.is_some() || !finite;
    let diverged = blown_up || (last > initial && decay_rate.is_some_and(|r| r > 0.0));
    Ok(SettlingMetrics {
        converged,
        settling_time,
        decay_rate,
        diverged,
        initial_error: initial,
        final_error: last,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for &(t, y) in points {
        sxy += (t - mean_t) * (y - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}
