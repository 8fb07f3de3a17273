//! Scenario configuration, initial conditions and single policy-point
//! evaluation. Parallel sweeps and result files are in the std crate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    integrate_to_equilibrium, total_income, DistributionState, EquilibriumResult, SolverSettings,
};
use crate::error::{invalid, Error, Result};
use crate::kernel::{ClassLadder, FiscalPolicy, ModelKernel, WelfareWeights};
use crate::metrics::{gini, linear_fit, tax_revenue, FitResult};

/// Total income of the first worked example.
pub const MU_EXAMPLE_1: f64 = 135.00;
/// Total income of the second worked example.
pub const MU_EXAMPLE_2: f64 = 127.65;

/// `(tau_min, tau_max)` grid of the tax-rate sweeps.
pub const TAX_PAIRS: [(f64, f64); 5] = [
    (0.30, 0.45),
    (0.25, 0.50),
    (0.20, 0.55),
    (0.15, 0.60),
    (0.10, 0.65),
];

/// Welfare shapes of the welfare sweeps, from uniform welfare down.
pub const WELFARE_GAMMAS: [f64; 8] = [0.50, 0.45, 0.40, 0.35, 0.30, 0.25, 0.20, 0.15];

/// Tax bounds held fixed in the welfare sweeps.
pub const WELFARE_TAX_PAIR: (f64, f64) = (0.30, 0.45);

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub n: usize,
    pub spacing: f64,
    /// Transaction amount `S`.
    #[cfg_attr(feature = "serde", serde(rename = "s"))]
    pub transaction: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub gamma: f64,
    pub mu_target: f64,
    pub seed: u64,
    pub tol: f64,
    pub dt: f64,
    pub max_time: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let solver = SolverSettings::default();
        Self {
            n: 15,
            spacing: 25.0,
            transaction: 1.0,
            tau_min: WELFARE_TAX_PAIR.0,
            tau_max: WELFARE_TAX_PAIR.1,
            gamma: 0.5,
            mu_target: MU_EXAMPLE_1,
            seed: 1,
            tol: solver.tol,
            dt: solver.dt,
            max_time: solver.max_time,
        }
    }
}

impl ScenarioConfig {
    pub fn ladder(&self) -> Result<ClassLadder> {
        ClassLadder::linear(self.n, self.spacing)
    }

    pub fn policy(&self) -> FiscalPolicy {
        FiscalPolicy::new(self.tau_min, self.tau_max, self.gamma).with_transaction(self.transaction)
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            dt: self.dt,
            max_time: self.max_time,
            ..SolverSettings::default()
        }
    }

    pub fn with_taxes(&self, tau_min: f64, tau_max: f64) -> Self {
        Self {
            tau_min,
            tau_max,
            ..self.clone()
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ladder = self.ladder()?;
        self.policy().validate(&ladder)?;
        self.solver().validate()?;
        let (lo, hi) = (ladder.poorest(), ladder.richest());
        if !(self.mu_target > lo && self.mu_target < hi) {
            return Err(invalid!(
                "mu_target must lie strictly between {lo} and {hi}, got {}",
                self.mu_target
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelKernel> {
        ModelKernel::build(self.ladder()?, self.policy())
    }
}

/// Seeded random start with most of the population in the lower classes and
/// total income exactly `mu_target`.
///
/// Class `j` (1-based) draws `u_j (n + 1 - j)` with `u_j` uniform on
/// `(0, 1]`; the normalized draw is then blended with all-poorest or
/// all-richest, whichever lies on the other side of the target, using the
/// largest blend weight that hits `mu_target`.
pub fn make_initial_condition(config: &ScenarioConfig) -> Result<DistributionState> {
    let ladder = config.ladder()?;
    let n = ladder.len();
    let (lo, hi) = (ladder.poorest(), ladder.richest());
    let target = config.mu_target;
    if !(target > lo && target < hi) {
        return Err(invalid!(
            "mu_target must lie strictly between {lo} and {hi}, got {target}"
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x: Vec<f64> = (0..n)
        .map(|j| (1.0 - rng.random::<f64>()) * (n - j) as f64)
        .collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);

    let mu = total_income(&x, &ladder);
    if mu != target {
        let (anchor, anchor_income) = if mu > target { (0, lo) } else { (n - 1, hi) };
        let keep = (target - anchor_income) / (mu - anchor_income);
        x.iter_mut().for_each(|v| *v *= keep);
        x[anchor] += 1.0 - keep;
    }
    DistributionState::new(x)
}

/// Equilibrium of one policy point and its indicators.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub model: ModelKernel,
    pub equilibrium: EquilibriumResult,
    pub gini: f64,
    pub tax_revenue: f64,
}

impl Evaluation {
    pub fn run(config: &ScenarioConfig, x0: &DistributionState) -> Result<Self> {
        config.validate()?;
        let model = config.model()?;
        let equilibrium = integrate_to_equilibrium(&model, x0, &config.solver())?;
        let x = equilibrium.state.fractions();
        let gini = gini(x, model.ladder())?;
        let tax_revenue = tax_revenue(x, &model)?;
        Ok(Self {
            model,
            equilibrium,
            gini,
            tax_revenue,
        })
    }

    pub fn record(&self) -> SweepRecord {
        let policy = self.model.policy();
        SweepRecord {
            tau_min: policy.tau_min,
            tau_max: policy.tau_max,
            gamma: policy.gamma,
            w_ratio: self.model.weights().richest_to_poorest(),
            gini: self.gini,
            tax_revenue: self.tax_revenue,
            mu: total_income(self.equilibrium.state.fractions(), self.model.ladder()),
            residual: self.equilibrium.residual,
            error: None,
        }
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRecord {
    pub tau_min: f64,
    pub tau_max: f64,
    pub gamma: f64,
    /// `w_n / w_1`.
    #[cfg_attr(feature = "serde", serde(with = "nan_as_null"))]
    pub w_ratio: f64,
    #[cfg_attr(feature = "serde", serde(with = "nan_as_null"))]
    pub gini: f64,
    #[cfg_attr(feature = "serde", serde(with = "nan_as_null"))]
    pub tax_revenue: f64,
    /// Realized total income at equilibrium.
    #[cfg_attr(feature = "serde", serde(with = "nan_as_null"))]
    pub mu: f64,
    #[cfg_attr(feature = "serde", serde(with = "nan_as_null"))]
    pub residual: f64,
    /// Set when the point failed; indicator fields are then NaN.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn failed(config: &ScenarioConfig, error: &Error) -> Self {
        let w_ratio = config
            .ladder()
            .and_then(|l| WelfareWeights::build(&l, config.gamma))
            .map(|w| w.richest_to_poorest())
            .unwrap_or(f64::NAN);
        let residual = match error {
            Error::NonConvergence { residual, .. } => *residual,
            _ => f64::NAN,
        };
        Self {
            tau_min: config.tau_min,
            tau_max: config.tau_max,
            gamma: config.gamma,
            w_ratio,
            gini: f64::NAN,
            tax_revenue: f64::NAN,
            mu: f64::NAN,
            residual,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Tax spread in percentage points.
    pub fn delta_tau_points(&self) -> f64 {
        (self.tau_max - self.tau_min) * 100.0
    }
}

/// JSON has no NaN; failed points carry `null` indicators.
#[cfg(feature = "serde")]
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Evaluates one point, folding failures into the record.
pub fn record_point(config: &ScenarioConfig, x0: &DistributionState) -> SweepRecord {
    match Evaluation::run(config, x0) {
        Ok(eval) => eval.record(),
        Err(e) => SweepRecord::failed(config, &e),
    }
}

/// Abscissa of a Gini regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Abscissa {
    /// `tau_max - tau_min` in percentage points.
    DeltaTau,
    /// `w_n / w_1`.
    WRatio,
}

impl Abscissa {
    pub fn of(&self, record: &SweepRecord) -> f64 {
        match self {
            Abscissa::DeltaTau => record.delta_tau_points(),
            Abscissa::WRatio => record.w_ratio,
        }
    }
}

/// Least-squares fit of the Gini index against `abscissa` over the
/// successful records.
pub fn regression_report(records: &[SweepRecord], abscissa: Abscissa) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (abscissa.of(r), r.gini))
        .collect();
    if points.len() < 3 {
        return Err(Error::DegenerateInput(alloc::format!(
            "regression needs at least 3 successful records, got {}",
            points.len()
        )));
    }
    linear_fit(&points)
}
