//! Grid model: generator sites, transmission lines, communication plans and
//! the Laplacian matrices built from them.
//!
//! Every generator is identical and every line shares one impedance
//! `Z = R + jX`, so the power network contributes `c_p * L_p` and the
//! control-center clique contributes `c_c * L_c` to the combined coupling
//! matrix, with `c_p = V²X/|Z|²` and `c_c = h/M`.

use std::collections::{BTreeSet, VecDeque};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants shared by all generators and lines (per-unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Rotor inertia `M`.
    #[serde(rename = "M")]
    pub inertia: f64,
    /// Mechanical damping `D`.
    #[serde(rename = "D")]
    pub damping: f64,
    /// Slope `h` of the mechanical-power feedback; must be negative.
    #[serde(rename = "h")]
    pub feedback_slope: f64,
    /// Generator voltage magnitude `V`.
    #[serde(rename = "V")]
    pub voltage: f64,
    /// Line resistance `R`.
    #[serde(rename = "R")]
    pub resistance: f64,
    /// Line reactance `X`.
    #[serde(rename = "X")]
    pub reactance: f64,
    /// Real part of the shunt admittance.
    #[serde(rename = "Y_re")]
    pub shunt_conductance: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            inertia: 1.0,
            damping: 1.0,
            feedback_slope: -1.0,
            voltage: 1.0,
            resistance: 0.01,
            reactance: 0.1,
            shunt_conductance: 0.0,
        }
    }
}

const PARAM_KEYS: [&str; 7] = ["M", "D", "h", "V", "R", "X", "Y_re"];

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.inertia > 0.0, "M must be > 0"),
            (self.damping > 0.0, "D must be > 0"),
            (self.feedback_slope < 0.0, "h must be < 0"),
            (self.voltage > 0.0, "V must be > 0"),
            (self.resistance >= 0.0, "R must be >= 0"),
            (self.reactance > 0.0, "X must be > 0"),
            (self.shunt_conductance.is_finite(), "Y_re must be finite"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.to_string()));
            }
        }
        Ok(())
    }

    /// `|Z|² = R² + X²`.
    pub fn impedance_sq(&self) -> f64 {
        self.resistance * self.resistance + self.reactance * self.reactance
    }

    /// Power coupling coefficient `c_p = V²X/|Z|²` (positive).
    pub fn power_coupling(&self) -> f64 {
        self.voltage * self.voltage * self.reactance / self.impedance_sq()
    }

    /// Communication coupling coefficient `c_c = h/M` (negative).
    pub fn comm_coupling(&self) -> f64 {
        self.feedback_slope / self.inertia
    }

    /// Parses the flat `key = value` parameter file. Missing keys keep their
    /// default values; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        let mut params = GridParams::default();
        for (key, value) in &table {
            let number = match value {
                toml::Value::Float(f) => *f,
                toml::Value::Integer(i) => *i as f64,
                other => {
                    return Err(Error::Parse {
                        line: None,
                        msg: format!("key `{key}` must be a number, got {}", other.type_str()),
                    })
                }
            };
            let slot = match key.as_str() {
                "M" => &mut params.inertia,
                "D" => &mut params.damping,
                "h" => &mut params.feedback_slope,
                "V" => &mut params.voltage,
                "R" => &mut params.resistance,
                "X" => &mut params.reactance,
                "Y_re" => &mut params.shunt_conductance,
                _ => {
                    return Err(Error::Parse {
                        line: None,
                        msg: format!("unknown key `{key}` (expected one of {PARAM_KEYS:?})"),
                    })
                }
            };
            *slot = number;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        format!(
            "M = {:?}\nD = {:?}\nh = {:?}\nV = {:?}\nR = {:?}\nX = {:?}\nY_re = {:?}\n",
            self.inertia,
            self.damping,
            self.feedback_slope,
            self.voltage,
            self.resistance,
            self.reactance,
            self.shunt_conductance
        )
    }
}

/// Synchronization threshold `-h|Z|²/(M V² X)`; strictly positive for valid
/// parameters.
pub fn sync_threshold(params: &GridParams) -> f64 {
    -params.feedback_slope * params.impedance_sq()
        / (params.inertia * params.voltage * params.voltage * params.reactance)
}

/// Undirected, connected graph of generator sites and transmission lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerNetwork {
    name: String,
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    #[serde(default)]
    name: String,
    n_nodes: usize,
    #[serde(default)]
    one_based: bool,
    edges: Vec<[usize; 2]>,
}

impl PowerNetwork {
    /// Validates and builds a network from zero-based edges. Edges are stored
    /// as `(min, max)` pairs in input order.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_name("", n_nodes, edges)
    }

    pub fn with_name(name: &str, n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Parse {
                line: None,
                msg: "network must have at least one node".into(),
            });
        }
        let mut seen = BTreeSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for (idx, &(a, b)) in edges.iter().enumerate() {
            for node in [a, b] {
                if node >= n_nodes {
                    return Err(Error::NodeOutOfRange {
                        edge: idx,
                        node,
                        n_nodes,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop { edge: idx, node: a });
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge {
                    edge: idx,
                    a: key.0,
                    b: key.1,
                });
            }
            stored.push(key);
        }
        let net = Self {
            name: name.to_string(),
            n_nodes,
            edges: stored,
        };
        if let Some(unreachable) = net.first_unreachable() {
            return Err(Error::Disconnected { unreachable });
        }
        Ok(net)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    fn first_unreachable(&self) -> Option<usize> {
        let adj = self.adjacency();
        let mut visited = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        visited.iter().position(|v| !v)
    }
}

/// Reads a topology document (JSON) and returns the validated network.
pub fn load_topology<R: Read>(mut source: R) -> Result<PowerNetwork> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    parse_topology(&text)
}

pub fn parse_topology(text: &str) -> Result<PowerNetwork> {
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: Some(e.line()),
        msg: e.to_string(),
    })?;
    let mut edges = Vec::with_capacity(file.edges.len());
    for (idx, [a, b]) in file.edges.into_iter().enumerate() {
        if file.one_based {
            for node in [a, b] {
                if node == 0 || node > file.n_nodes {
                    return Err(Error::NodeOutOfRange {
                        edge: idx,
                        node,
                        n_nodes: file.n_nodes,
                    });
                }
            }
            edges.push((a - 1, b - 1));
        } else {
            edges.push((a, b));
        }
    }
    PowerNetwork::with_name(&file.name, file.n_nodes, &edges)
}

/// The bundled IEEE 39-bus New England topology.
pub fn new_england_39() -> PowerNetwork {
    parse_topology(NEW_ENGLAND_39_JSON).expect("bundled topology is valid")
}

pub const NEW_ENGLAND_39_JSON: &str = include_str!("../data/new_england_39.json");

/// Set of generators attached to the control center. Every pair of members is
/// communication-adjacent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommPlan {
    members: Vec<usize>,
}

impl CommPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a plan for `n_nodes` generators; duplicates collapse.
    pub fn new<I: IntoIterator<Item = usize>>(nodes: I, n_nodes: usize) -> Result<Self> {
        let set: BTreeSet<usize> = nodes.into_iter().collect();
        if let Some(&node) = set.iter().find(|&&i| i >= n_nodes) {
            return Err(Error::InvalidPlanNode { node, n_nodes });
        }
        Ok(Self {
            members: set.into_iter().collect(),
        })
    }

    pub fn full(n_nodes: usize) -> Self {
        Self {
            members: (0..n_nodes).collect(),
        }
    }

    /// Sorted member indices.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// Plan with `node` added.
    pub fn with(&self, node: usize) -> Self {
        let mut members = self.members.clone();
        if let Err(pos) = members.binary_search(&node) {
            members.insert(pos, node);
        }
        Self { members }
    }

    /// `j ▷ i`: both attached and distinct.
    pub fn comm_adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.contains(i) && self.contains(j)
    }
}

/// Dense symmetric matrix stored row-major. Every mutator writes both
/// triangles, so `a[i][j] == a[j][i]` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds from rows; rejects non-square or non-symmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Adds `value` to `(i, j)` and `(j, i)` (once on the diagonal).
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] += value;
        if i != j {
            self.data[j * self.n + i] += value;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Largest absolute row sum (infinity norm, a Gershgorin bound on |λ|).
    pub fn max_abs_row_sum(&self) -> f64 {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: f64, other: &SymMatrix, beta: f64) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Self { n: self.n, data })
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.data[i * self.n + i] += shift;
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Unit-weight Laplacian of the power network.
pub fn laplacian(net: &PowerNetwork) -> SymMatrix {
    let mut l = SymMatrix::zeros(net.n_nodes());
    for &(a, b) in net.edges() {
        l.add_sym(a, a, 1.0);
        l.add_sym(b, b, 1.0);
        l.add_sym(a, b, -1.0);
    }
    l
}

/// Laplacian of the clique on the plan members, embedded in an
/// `n_nodes`-order matrix.
pub fn comm_laplacian(plan: &CommPlan, n_nodes: usize) -> SymMatrix {
    let mut l = SymMatrix::zeros(n_nodes);
    add_clique(&mut l, plan.members(), 1.0);
    l
}

/// Adds `weight * L_clique(members)` into `target`.
pub(crate) fn add_clique(target: &mut SymMatrix, members: &[usize], weight: f64) {
    let k = members.len();
    if k < 2 {
        return;
    }
    let diag = weight * (k - 1) as f64;
    for (pos, &i) in members.iter().enumerate() {
        target.add_sym(i, i, diag);
        for &j in &members[pos + 1..] {
            target.add_sym(i, j, -weight);
        }
    }
}

/// Combined coupling matrix `c_c * L_c + c_p * L_p`.
pub fn combined_matrix(params: &GridParams, lp: &SymMatrix, lc: &SymMatrix) -> Result<SymMatrix> {
    lc.lin_comb(params.comm_coupling(), lp, params.power_coupling())
}
