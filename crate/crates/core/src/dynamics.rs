//! Right-hand side of the class-population ODE system, RK4 integration and
//! the search for the stationary distribution.
//!
//! ```text
//! dx_i/dt = sum_h sum_k (C[h][k][i] + T[h][k][i](x)) x_h x_k - x_i sum_k x_k
//! ```
//!
//! `T = U + V` carries the tax and redistribution flux. Both the total mass
//! `sum_i x_i` and the total income `sum_i r_i x_i` are first integrals.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernel::{ClassLadder, ModelKernel};

/// Largest negative fraction tolerated after a step.
const NEGATIVE_FRACTION_LIMIT: f64 = -1e-9;
/// Largest mass drift tolerated after a step.
const MASS_DRIFT_LIMIT: f64 = 1e-7;
/// Simplex tolerance for caller-supplied states.
const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Population fractions of the `n` classes at model time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionState {
    fractions: Vec<f64>,
    time: f64,
}

impl DistributionState {
    /// A state at `t = 0`. Fractions must be nonnegative and sum to one.
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(invalid!("a distribution needs at least one class"));
        }
        if let Some((i, v)) = fractions
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(invalid!("fraction of class {i} is {v}"));
        }
        let mass: f64 = fractions.iter().sum();
        if (mass - 1.0).abs() >= SIMPLEX_TOLERANCE {
            return Err(invalid!("fractions sum to {mass}, expected 1"));
        }
        Ok(Self {
            fractions,
            time: 0.0,
        })
    }

    /// All mass in class `j`.
    pub fn vertex(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(invalid!("class {j} out of range for {n} classes"));
        }
        let mut fractions = vec![0.0; n];
        fractions[j] = 1.0;
        Self::new(fractions)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("a distribution needs at least one class"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub(crate) fn from_parts(fractions: Vec<f64>, time: f64) -> Self {
        Self { fractions, time }
    }

    #[inline]
    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn into_fractions(self) -> Vec<f64> {
        self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn mass(&self) -> f64 {
        self.fractions.iter().sum()
    }

    pub fn min_fraction(&self) -> f64 {
        self.fractions.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `mu(x) = sum_i r_i x_i`.
pub fn total_income(x: &[f64], ladder: &ClassLadder) -> f64 {
    x.iter().zip(ladder.incomes()).map(|(x, r)| x * r).sum()
}

fn weighted_mass(model: &ModelKernel, x: &[f64]) -> Result<(f64, f64)> {
    let w = model.weights().weights();
    let n = w.len();
    let below_top: f64 = (0..n - 1).map(|j| w[j] * x[j]).sum();
    let total = below_top + w[n - 1] * x[n - 1];
    if !(total > 0.0) {
        return Err(Error::NumericalDomain(alloc::format!(
            "welfare-weighted mass is {total}"
        )));
    }
    Ok((below_top, total))
}

/// Redistribution flux `U[h][k][i](x)`: recipients advance one class.
pub fn advancement_term(
    model: &ModelKernel,
    i: usize,
    h: usize,
    k: usize,
    x: &[f64],
) -> Result<f64> {
    let (_, total) = weighted_mass(model, x)?;
    Ok(advancement(model, i, h, k, x, total))
}

fn advancement(model: &ModelKernel, i: usize, h: usize, k: usize, x: &[f64], total: f64) -> f64 {
    let n = model.len();
    let ladder = model.ladder();
    let w = model.weights();
    let s = model.policy().transaction;
    let prefactor = model.pay().get(h, k) * s * model.taxes().rate(k) / total;
    let mut bracket = 0.0;
    if i >= 1 {
        bracket += w.weight(i - 1) * x[i - 1] / ladder.gap(i - 1);
    }
    if i + 1 < n {
        bracket -= w.weight(i) * x[i] / ladder.gap(i);
    }
    prefactor * bracket
}

/// Taxation flux `V[h][k][i](x)`: the payer falls back one class.
pub fn retrocession_term(
    model: &ModelKernel,
    i: usize,
    h: usize,
    k: usize,
    x: &[f64],
) -> Result<f64> {
    let (below_top, total) = weighted_mass(model, x)?;
    Ok(retrocession(model, i, h, k, below_top, total))
}

fn retrocession(
    model: &ModelKernel,
    i: usize,
    h: usize,
    k: usize,
    below_top: f64,
    total: f64,
) -> f64 {
    let n = model.len();
    let r = model.ladder().incomes();
    let s = model.policy().transaction;
    let prefactor = model.pay().get(h, k) * s * model.taxes().rate(k) * below_top / total;
    let mut bracket = 0.0;
    if i + 1 < n && h == i + 1 {
        bracket += 1.0 / (r[h] - r[i]);
    }
    if i >= 1 && h == i {
        bracket -= 1.0 / (r[h] - r[i - 1]);
    }
    prefactor * bracket
}

/// `T[h][k][i](x) = U[h][k][i](x) + V[h][k][i](x)`, the variation density in
/// class `i` caused by taxation and redistribution when an `h`-individual
/// pays a `k`-individual.
pub fn indirect_term(model: &ModelKernel, i: usize, h: usize, k: usize, x: &[f64]) -> Result<f64> {
    let n = model.len();
    if i >= n || h >= n || k >= n {
        return Err(invalid!("class index out of range for {n} classes"));
    }
    if x.len() != n {
        return Err(invalid!("state has {} classes, model has {n}", x.len()));
    }
    let (below_top, total) = weighted_mass(model, x)?;
    Ok(advancement(model, i, h, k, x, total) + retrocession(model, i, h, k, below_top, total))
}

/// Writes `dx/dt` at `x` into `out`.
///
/// The direct part uses the tridiagonal structure of `C`; the indirect part
/// factors the sums over `h` and `k` out of `T`, so one evaluation is
/// `O(n^2)`.
pub fn rhs_into(model: &ModelKernel, x: &[f64], out: &mut [f64]) -> Result<()> {
    let n = model.len();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(out.len(), n);
    let ladder = model.ladder();
    let pay = model.pay();
    let tau = model.taxes().rates();
    let w = model.weights().weights();
    let direct = model.direct();
    let s = model.policy().transaction;
    let (below_top, total) = weighted_mass(model, x)?;

    out.iter_mut().for_each(|v| *v = 0.0);

    // Direct interactions, and per-payer tax flux sum_k p_hk tau_k x_h x_k.
    let mut tax_flux_total = 0.0;
    for h in 0..n {
        let xh = x[h];
        let mut tax_flux = 0.0;
        for k in 0..n {
            let pair = xh * x[k];
            let [down, stay, up] = direct.moves(h, k);
            if h >= 1 {
                out[h - 1] += down * pair;
            }
            out[h] += stay * pair;
            if h + 1 < n {
                out[h + 1] += up * pair;
            }
            tax_flux += pay.get(h, k) * tau[k] * x[k];
        }
        let tax_flux = s * xh * tax_flux;
        tax_flux_total += tax_flux;
        // Retrocession of the payer h into h - 1 (h = 0 never pays).
        if h >= 1 {
            let moved = tax_flux * below_top / total / ladder.gap(h - 1);
            out[h - 1] += moved;
            out[h] -= moved;
        }
    }

    // Advancement of recipients: class i gains from i - 1 and loses to i + 1.
    let scale = tax_flux_total / total;
    for i in 0..n {
        let mut bracket = 0.0;
        if i >= 1 {
            bracket += w[i - 1] * x[i - 1] / ladder.gap(i - 1);
        }
        if i + 1 < n {
            bracket -= w[i] * x[i] / ladder.gap(i);
        }
        out[i] += scale * bracket;
    }

    let mass: f64 = x.iter().sum();
    for (o, xi) in out.iter_mut().zip(x) {
        *o -= xi * mass;
    }
    Ok(())
}

pub fn rhs(model: &ModelKernel, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.len()];
    rhs_into(model, x, &mut out)?;
    Ok(out)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Max-norm of `dx/dt` at `x`.
pub fn residual(model: &ModelKernel, x: &[f64]) -> Result<f64> {
    Ok(max_norm(&rhs(model, x)?))
}

/// Classical fourth-order Runge-Kutta stepper with reusable scratch space.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    fn resize(&mut self, n: usize) {
        for buf in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.stage,
        ] {
            buf.resize(n, 0.0);
        }
    }

    /// Advances `state` by `dt`. On a simplex breach the state is left
    /// untouched and [`Error::StepSize`] is returned.
    pub fn step(
        &mut self,
        model: &ModelKernel,
        state: &mut DistributionState,
        dt: f64,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(invalid!("step size must be positive, got {dt}"));
        }
        let n = model.len();
        if state.len() != n {
            return Err(invalid!("state has {} classes, model has {n}", state.len()));
        }
        self.resize(n);
        let x = &state.fractions;

        rhs_into(model, x, &mut self.k1)?;
        for i in 0..n {
            self.stage[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        rhs_into(model, &self.stage, &mut self.k2)?;
        for i in 0..n {
            self.stage[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        rhs_into(model, &self.stage, &mut self.k3)?;
        for i in 0..n {
            self.stage[i] = x[i] + dt * self.k3[i];
        }
        rhs_into(model, &self.stage, &mut self.k4)?;
        for i in 0..n {
            self.stage[i] =
                x[i] + dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }

        let min_fraction = self.stage.iter().cloned().fold(f64::INFINITY, f64::min);
        let mass_drift = (self.stage.iter().sum::<f64>() - 1.0).abs();
        let time = state.time + dt;
        if min_fraction < NEGATIVE_FRACTION_LIMIT || !(mass_drift <= MASS_DRIFT_LIMIT) {
            return Err(Error::StepSize {
                time,
                min_fraction,
                mass_drift,
            });
        }
        state.fractions.copy_from_slice(&self.stage);
        state.time = time;
        Ok(())
    }
}

/// One RK4 step from `state`, returning the new state.
pub fn step(model: &ModelKernel, state: &DistributionState, dt: f64) -> Result<DistributionState> {
    let mut next = state.clone();
    Rk4::new(model.len()).step(model, &mut next, dt)?;
    Ok(next)
}

/// Stopping rule and step size of the equilibrium search.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverSettings {
    /// Convergence threshold on the max-norm of `dx/dt`.
    pub tol: f64,
    pub dt: f64,
    pub max_time: f64,
    /// Steps between residual evaluations.
    pub check_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dt: 0.1,
            max_time: 1e6,
            check_every: 100,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid!("step size must be positive, got {}", self.dt));
        }
        if !(self.max_time > 0.0) {
            return Err(invalid!("max_time must be positive, got {}", self.max_time));
        }
        if self.check_every == 0 {
            return Err(invalid!("check_every must be at least 1"));
        }
        Ok(())
    }
}

/// Worst deviations from the conserved quantities seen along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InvariantDrift {
    /// `max_t |sum_i x_i(t) - 1|`.
    pub mass: f64,
    /// `max_t |mu(x(t)) - mu(x0)|`.
    pub income: f64,
    /// `min_t min_i x_i(t)`.
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub state: DistributionState,
    /// Max-norm of `dx/dt` at `state`.
    pub residual: f64,
    pub elapsed_time: f64,
    pub steps: u64,
    pub drift: InvariantDrift,
}

/// Integrates from `x0` until the max-norm of `dx/dt` drops below
/// `settings.tol`, checking every `settings.check_every` steps.
pub fn integrate_to_equilibrium(
    model: &ModelKernel,
    x0: &DistributionState,
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    let n = model.len();
    if x0.len() != n {
        return Err(invalid!("state has {} classes, model has {n}", x0.len()));
    }
    let ladder = model.ladder();
    let mu0 = total_income(x0.fractions(), ladder);
    let mut state = DistributionState::from_parts(x0.fractions.clone(), 0.0);
    let mut drift = InvariantDrift {
        mass: (x0.mass() - 1.0).abs(),
        income: 0.0,
        min_fraction: x0.min_fraction(),
    };

    let mut derivative = vec![0.0; n];
    rhs_into(model, state.fractions(), &mut derivative)?;
    let mut residual = max_norm(&derivative);
    let mut stepper = Rk4::new(n);
    let mut steps: u64 = 0;

    while !(residual < settings.tol) {
        if steps as f64 * settings.dt >= settings.max_time {
            return Err(Error::NonConvergence {
                time: state.time,
                residual,
            });
        }
        for _ in 0..settings.check_every {
            stepper.step(model, &mut state, settings.dt)?;
            steps += 1;
            let x = state.fractions();
            drift.mass = drift.mass.max((x.iter().sum::<f64>() - 1.0).abs());
            drift.income = drift.income.max((total_income(x, ladder) - mu0).abs());
            drift.min_fraction = drift.min_fraction.min(state.min_fraction());
        }
        // Multiplying avoids accumulating round-off in the clock.
        state.time = steps as f64 * settings.dt;
        rhs_into(model, state.fractions(), &mut derivative)?;
        residual = max_norm(&derivative);
    }

    Ok(EquilibriumResult {
        elapsed_time: state.time,
        state,
        residual,
        steps,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ClassLadder, FiscalPolicy};

    fn standard(tau_min: f64, tau_max: f64, gamma: f64) -> ModelKernel {
        ModelKernel::build(
            ClassLadder::standard(),
            FiscalPolicy::new(tau_min, tau_max, gamma),
        )
        .unwrap()
    }

    /// Deterministic pseudo-random simplex points (xorshift), enough for
    /// unit tests without pulling in an RNG.
    fn simplex_points(n: usize, count: usize) -> Vec<Vec<f64>> {
        let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| next() + 1e-3).collect();
                let total: f64 = v.iter().sum();
                v.into_iter().map(|x| x / total).collect()
            })
            .collect()
    }

    #[test]
    fn state_validation() {
        assert!(DistributionState::new(vec![0.5, 0.5]).is_ok());
        assert!(DistributionState::new(vec![0.5, 0.6]).is_err());
        assert!(DistributionState::new(vec![1.1, -0.1]).is_err());
        assert!(DistributionState::new(vec![f64::NAN, 1.0]).is_err());
        assert!(DistributionState::new(vec![]).is_err());
        assert!(DistributionState::vertex(3, 3).is_err());
    }

    #[test]
    fn total_income_examples() {
        let ladder = ClassLadder::standard();
        let e1 = DistributionState::vertex(15, 0).unwrap();
        assert_eq!(total_income(e1.fractions(), &ladder), 25.0);
        let u = DistributionState::uniform(15).unwrap();
        assert!((total_income(u.fractions(), &ladder) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn vertices_are_fixed_points() {
        let m = standard(0.30, 0.45, 0.5);
        for j in [0, 14] {
            let x = DistributionState::vertex(15, j).unwrap();
            assert!(rhs(&m, x.fractions()).unwrap().iter().all(|v| *v == 0.0));
            let next = step(&m, &x, 0.1).unwrap();
            assert_eq!(next.fractions(), x.fractions());
        }
    }

    #[test]
    fn payer_in_poorest_class_has_no_indirect_effect() {
        // Equivalent to an explicit h > 1 guard on U and V.
        let m = standard(0.30, 0.45, 0.3);
        for x in simplex_points(15, 5) {
            for k in 0..15 {
                for i in 0..15 {
                    assert_eq!(indirect_term(&m, i, 0, k, &x).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn indirect_terms_sum_to_zero() {
        let m = standard(0.15, 0.60, 0.25);
        for x in simplex_points(15, 20) {
            for h in 0..15 {
                for k in 0..15 {
                    let sum: f64 = (0..15)
                        .map(|i| indirect_term(&m, i, h, k, &x).unwrap())
                        .sum();
                    assert!(sum.abs() < 1e-12, "h={h} k={k}: {sum}");
                }
            }
        }
    }

    #[test]
    fn factored_rhs_matches_literal_quadruple_sum() {
        let m = standard(0.10, 0.65, 0.2);
        let n = 15;
        for x in simplex_points(n, 10) {
            let fast = rhs(&m, &x).unwrap();
            for i in 0..n {
                let mut literal = 0.0;
                for h in 0..n {
                    for k in 0..n {
                        literal += (m.direct().get(h, k, i)
                            + indirect_term(&m, i, h, k, &x).unwrap())
                            * x[h]
                            * x[k];
                    }
                }
                literal -= x[i] * x.iter().sum::<f64>();
                assert!((literal - fast[i]).abs() < 1e-14, "class {i}");
            }
        }
    }

    #[test]
    fn rhs_conserves_mass_and_income() {
        let m = standard(0.20, 0.55, 0.35);
        for x in simplex_points(15, 50) {
            let d = rhs(&m, &x).unwrap();
            assert!(d.iter().sum::<f64>().abs() < 1e-15);
            assert!(total_income(&d, m.ladder()).abs() < 1e-12);
        }
    }

    #[test]
    fn step_preserves_linear_invariants() {
        let m = standard(0.30, 0.45, 0.5);
        let mut rk = Rk4::new(15);
        for x in simplex_points(15, 20) {
            let mut s = DistributionState::new(x).unwrap();
            let mu = total_income(s.fractions(), m.ladder());
            rk.step(&m, &mut s, 0.1).unwrap();
            assert!((s.mass() - 1.0).abs() < 1e-12);
            assert!((total_income(s.fractions(), m.ladder()) - mu).abs() < 1e-12);
            assert!((s.time() - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn oversized_step_is_reported() {
        let m = standard(0.30, 0.45, 0.5);
        let x = DistributionState::new(simplex_points(15, 1).remove(0)).unwrap();
        let before = x.clone();
        let mut s = x;
        let err = Rk4::new(15).step(&m, &mut s, 500.0).unwrap_err();
        assert!(matches!(err, Error::StepSize { .. }), "{err:?}");
        assert_eq!(s, before);
        assert!(Rk4::new(15).step(&m, &mut s, 0.0).is_err());
    }

    #[test]
    fn equilibrium_from_vertex_is_immediate() {
        let m = standard(0.30, 0.45, 0.5);
        let e1 = DistributionState::vertex(15, 0).unwrap();
        let eq = integrate_to_equilibrium(&m, &e1, &SolverSettings::default()).unwrap();
        assert_eq!(eq.state.fractions(), e1.fractions());
        assert_eq!(eq.residual, 0.0);
        assert_eq!(eq.steps, 0);
    }

    #[test]
    fn non_convergence_carries_residual() {
        let m = standard(0.30, 0.45, 0.5);
        let x = DistributionState::uniform(15).unwrap();
        let settings = SolverSettings {
            max_time: 5.0,
            ..SolverSettings::default()
        };
        match integrate_to_equilibrium(&m, &x, &settings) {
            Err(Error::NonConvergence { residual, time }) => {
                assert!(residual > settings.tol);
                assert!(time >= 5.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        let m = standard(0.30, 0.45, 0.5);
        let x = DistributionState::uniform(15).unwrap();
        for settings in [
            SolverSettings {
                tol: 0.0,
                ..Default::default()
            },
            SolverSettings {
                dt: -1.0,
                ..Default::default()
            },
            SolverSettings {
                max_time: 0.0,
                ..Default::default()
            },
            SolverSettings {
                check_every: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                integrate_to_equilibrium(&m, &x, &settings),
                Err(Error::InvalidArgument(_))
            ));
        }
        let short = DistributionState::uniform(3).unwrap();
        assert!(integrate_to_equilibrium(&m, &short, &SolverSettings::default()).is_err());
    }
}
