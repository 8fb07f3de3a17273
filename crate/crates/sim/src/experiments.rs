//! Policy sweeps over a shared initial condition.
//!
//! Points are independent and run on a rayon pool; results keep the input
//! order. A point that fails to converge yields a failed record instead of
//! aborting the sweep.

use kinetic_welfare_core::scenario::{make_initial_condition, Evaluation};
use kinetic_welfare_core::{DistributionState, ScenarioConfig, SweepRecord};
use rayon::prelude::*;

use crate::SimError;

/// Record of one policy point plus its equilibrium distribution when it
/// converged.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub record: SweepRecord,
    pub distribution: Option<Vec<f64>>,
}

impl PointResult {
    fn run(config: &ScenarioConfig, x0: &DistributionState) -> Self {
        match Evaluation::run(config, x0) {
            Ok(eval) => Self {
                record: eval.record(),
                distribution: Some(eval.equilibrium.state.into_fractions()),
            },
            Err(e) => Self {
                record: SweepRecord::failed(config, &e),
                distribution: None,
            },
        }
    }
}

/// Sweep output in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.points.iter().map(|p| p.record.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| !p.record.is_ok()).count()
    }
}

/// Runs every configuration from the same initial condition, built from
/// `base`.
pub fn run_points(
    base: &ScenarioConfig,
    configs: &[ScenarioConfig],
    jobs: usize,
) -> Result<SweepResult, SimError> {
    base.validate()?;
    for config in configs {
        config.validate()?;
    }
    let x0 = make_initial_condition(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let points = pool.install(|| {
        configs
            .par_iter()
            .map(|config| PointResult::run(config, &x0))
            .collect()
    });
    Ok(SweepResult { points })
}

/// Varies `(tau_min, tau_max)` with the welfare shape of `config`.
pub fn tax_sweep(
    config: &ScenarioConfig,
    pairs: &[(f64, f64)],
    jobs: usize,
) -> Result<SweepResult, SimError> {
    if pairs.is_empty() {
        return Err(SimError::Usage(
            "tax sweep needs at least one (tau_min, tau_max) pair".into(),
        ));
    }
    let configs: Vec<_> = pairs
        .iter()
        .map(|&(lo, hi)| config.with_taxes(lo, hi))
        .collect();
    run_points(config, &configs, jobs)
}

/// Varies the welfare shape with the tax bounds of `config`.
pub fn welfare_sweep(
    config: &ScenarioConfig,
    gammas: &[f64],
    jobs: usize,
) -> Result<SweepResult, SimError> {
    if gammas.is_empty() {
        return Err(SimError::Usage(
            "welfare sweep needs at least one gamma".into(),
        ));
    }
    let configs: Vec<_> = gammas.iter().map(|&g| config.with_gamma(g)).collect();
    run_points(config, &configs, jobs)
}

/// Equilibrium with every tax rate set to zero: pure direct exchange.
pub fn pre_redistribution_run(config: &ScenarioConfig) -> Result<PointResult, SimError> {
    let untaxed = config.with_taxes(0.0, 0.0);
    let mut result = run_points(config, std::slice::from_ref(&untaxed), 1)?;
    Ok(result.points.remove(0))
}

/// Single policy point.
pub fn equilibrium_point(config: &ScenarioConfig) -> Result<PointResult, SimError> {
    let mut result = run_points(config, std::slice::from_ref(config), 1)?;
    Ok(result.points.remove(0))
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
