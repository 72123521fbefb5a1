//! Communication-plan design for power-grid synchronization.
//!
//! A plan attaches a subset of generators to a control center; every pair of
//! attached generators then exchanges measurements. The quality of a plan is
//! the largest eigenvalue of `c_c·L_c + c_p·L_p`, the combined coupling matrix
//! of the communication clique and the power network. Lower is better.
//!
//! - [`grid`]: topology, parameters, Laplacians.
//! - [`spectral`]: eigen-solvers, mode roots, synchronization verdicts.
//! - [`planners`]: ant colony planner and the greedy, Rayleigh, random and
//!   brute-force baselines.
//! - [`sim`]: time-domain swing-equation simulation.
//! - [`cli`]: the command implementations behind the `gridsync` binary.

pub mod cli;
pub mod error;
pub mod grid;
pub mod planners;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{
    combined_matrix, comm_laplacian, laplacian, load_topology, new_england_39, sync_threshold,
    CommPlan, GridParams, PowerNetwork, SymMatrix,
};
