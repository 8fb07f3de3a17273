//! Kinetic model of a closed economy divided into income classes.
//!
//! Individuals exchange money in binary encounters; every payment is taxed at
//! the earner's class rate and the proceeds are redistributed across classes
//! according to per-class welfare weights. The population fractions evolve
//! under a system of `n` quadratic ODEs whose stationary state is indexed by
//! the conserved total income. This crate builds the transition coefficients,
//! integrates the system, and evaluates inequality and fiscal indicators.
//!
//! The crate is `no_std` with `alloc`; IO and parallel sweeps live in the
//! companion `kinetic-welfare` crate.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dynamics;
mod error;
pub mod kernel;
pub mod metrics;
pub mod scenario;

pub use dynamics::{
    integrate_to_equilibrium, total_income, DistributionState, EquilibriumResult, InvariantDrift,
    Rk4, SolverSettings,
};
pub use error::{Error, Result};
pub use kernel::{
    ClassLadder, DirectKernel, FiscalPolicy, ModelKernel, PayMatrix, TaxSchedule, WelfareWeights,
};
pub use metrics::{class_diff, gini, linear_fit, lorenz, tax_revenue, FitResult, LorenzCurve};
pub use scenario::{Abscissa, ScenarioConfig, SweepRecord};
