//! Space-time parallel solver for the forced heat equation on the unit cube.
//!
//! The crate is `no_std` (with `alloc`) and contains only numerics:
//! Gauss-Lobatto collocation, structured-grid stencils, a geometric
//! multigrid solver, IMEX spectral deferred corrections, two-level MLSDC
//! with FAS coupling, the PFASST controller with a deterministic sequential
//! scheduler, and the speedup model. Clocks, threads and file formats are
//! supplied by the caller.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod grid;
pub mod heat;
pub mod hierarchy;
pub mod perfmodel;
pub mod pfasst;
pub mod pmg;
pub mod quadrature;
pub mod sweeper;

pub use error::{Error, Result};
pub use grid::{Field, Interpolation, StencilKind};
pub use heat::{ForcingMode, HeatProblem, LevelProblem};
pub use hierarchy::TwoLevel;
pub use perfmodel::{Clock, NullClock, SpeedupParams, TimingRecord};
pub use pfasst::{Backend, RankState, SequentialBackend, SimulationConfig, SimulationReport};
pub use pmg::MgConfig;
pub use quadrature::CollocationSet;
pub use sweeper::{ImexProblem, SweepState};
