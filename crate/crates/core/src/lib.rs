//! Capacities, energies and exact edge-flip simulation for dynamical
//! percolation on rooted trees.
//!
//! Every edge of a tree flips between open and closed as an independent
//! two-state Markov chain (closed → open at rate `p`, open → closed at rate
//! `1 - p`). The crate computes the space-time kernel capacities that govern
//! whether the root is ever joined to the boundary during a target time set,
//! and checks them against exact simulation.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod target;
pub mod tree;

mod serde_float;

pub use capacity::{
    capacity_sweep, dimh_sg, energy, hps_condition, minimize_energy, potential, sandwich_bounds, CapacityResult,
    DimSweep, ProductMeasure,
};
pub use dynamics::{
    estimate_hit_probability, exceptional_dim_estimate, hits_target, percolation_trace, simulate_edges, z_statistic,
    HitEstimate, PercolationTrace, SimulationRun,
};
pub use error::{Error, Result};
pub use kernels::{assemble_matrix, KernelMatrix, KernelSpec};
pub use target::{discretize, TargetSet, TimeGrid};
pub use tree::{LevelCounts, PercolationParams, Tree};
