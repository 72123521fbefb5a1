use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error{}: {msg}", fmt_line(*.line))]
    Parse { line: Option<usize>, msg: String },

    #[error("self-loop on node {node} (edge #{edge})")]
    SelfLoop { edge: usize, node: usize },

    #[error("duplicate edge ({a}, {b}) (edge #{edge})")]
    DuplicateEdge { edge: usize, a: usize, b: usize },

    #[error("node index {node} out of range for {n_nodes} nodes (edge #{edge})")]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        n_nodes: usize,
    },

    #[error("network is disconnected: node {unreachable} is not reachable from node 0")]
    Disconnected { unreachable: usize },

    #[error("invalid grid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("eigensolver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("vector is not unit length (norm {norm})")]
    NonUnitVector { norm: f64 },

    #[error("budget K = {k} out of range for {n_nodes} generators")]
    BudgetOutOfRange { k: usize, n_nodes: usize },

    #[error("node {node} is not a valid plan member for {n_nodes} nodes")]
    InvalidPlanNode { node: usize, n_nodes: usize },

    #[error("candidate {0} is already in the plan")]
    CandidateSelected(usize),

    #[error("all candidates are tabu")]
    AllTabu,

    #[error("edge cost must be positive, got {0}")]
    NonPositiveCost(f64),

    #[error("instance too large: {subsets} subsets exceeds limit {limit}")]
    InstanceTooLarge { subsets: u128, limit: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
