//! Coefficients of the evolution equation.
//!
//! Classes are indexed from 0 in this API: class `j` has average income
//! `ladder.income(j)`, the poorest class is 0 and the richest is `n - 1`.
//! Everything here is built once per policy point and is immutable
//! afterwards.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Ordered average incomes of the `n` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLadder {
    incomes: Vec<f64>,
}

impl ClassLadder {
    /// Linear ladder `r_j = spacing * j`, `j = 1..=n`.
    pub fn linear(n: usize, spacing: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid!("class count must be at least 2, got {n}"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(invalid!("ladder spacing must be positive, got {spacing}"));
        }
        let incomes = (1..=n).map(|j| spacing * j as f64).collect();
        Ok(Self { incomes })
    }

    /// The 15-class ladder `25, 50, ..., 375`.
    pub fn standard() -> Self {
        Self::linear(15, 25.0).expect("standard ladder is valid")
    }

    pub fn from_incomes(incomes: Vec<f64>) -> Result<Self> {
        if incomes.len() < 2 {
            return Err(invalid!(
                "class count must be at least 2, got {}",
                incomes.len()
            ));
        }
        if !incomes.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(invalid!("incomes must be finite and positive"));
        }
        if incomes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid!("incomes must be strictly increasing"));
        }
        Ok(Self { incomes })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.incomes.len()
    }

    /// Always false; a ladder has at least two classes.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.incomes.is_empty()
    }

    #[inline]
    pub fn income(&self, j: usize) -> f64 {
        self.incomes[j]
    }

    #[inline]
    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn poorest(&self) -> f64 {
        self.incomes[0]
    }

    pub fn richest(&self) -> f64 {
        self.incomes[self.incomes.len() - 1]
    }

    /// `r_{j+1} - r_j`.
    #[inline]
    pub fn gap(&self, j: usize) -> f64 {
        self.incomes[j + 1] - self.incomes[j]
    }

    pub fn min_gap(&self) -> f64 {
        (0..self.len() - 1)
            .map(|j| self.gap(j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same ladder with every income multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_incomes(self.incomes.iter().map(|r| r * factor).collect())
    }
}

/// Tax bounds, welfare shape and transaction size of one policy point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiscalPolicy {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Welfare shape; `0.5` grants the same weight to every class.
    pub gamma: f64,
    /// Amount `S` moved in one direct interaction.
    pub transaction: f64,
}

impl FiscalPolicy {
    pub fn new(tau_min: f64, tau_max: f64, gamma: f64) -> Self {
        Self {
            tau_min,
            tau_max,
            gamma,
            transaction: 1.0,
        }
    }

    pub fn with_transaction(mut self, transaction: f64) -> Self {
        self.transaction = transaction;
        self
    }

    /// Same policy with every tax rate set to zero.
    pub fn untaxed(self) -> Self {
        Self {
            tau_min: 0.0,
            tau_max: 0.0,
            ..self
        }
    }

    pub fn delta_tau(&self) -> f64 {
        self.tau_max - self.tau_min
    }

    pub fn validate(&self, ladder: &ClassLadder) -> Result<()> {
        validate_rates(self.tau_min, self.tau_max)?;
        validate_gamma(self.gamma)?;
        let gap = ladder.min_gap();
        if !(self.transaction > 0.0) || !(self.transaction < gap) {
            return Err(invalid!(
                "transaction amount must lie in (0, {gap}) for this ladder, got {}",
                self.transaction
            ));
        }
        Ok(())
    }
}

fn validate_rates(tau_min: f64, tau_max: f64) -> Result<()> {
    for (name, t) in [("tau_min", tau_min), ("tau_max", tau_max)] {
        if !(0.0..1.0).contains(&t) {
            return Err(invalid!("{name} must lie in [0, 1), got {t}"));
        }
    }
    if tau_min > tau_max {
        return Err(invalid!(
            "tau_min ({tau_min}) must not exceed tau_max ({tau_max})"
        ));
    }
    Ok(())
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(invalid!("gamma must lie in (0, 1/2], got {gamma}"));
    }
    Ok(())
}

/// Progressive tax rates interpolated linearly between the poorest and the
/// richest class.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxSchedule {
    rates: Vec<f64>,
}

impl TaxSchedule {
    pub fn progressive(n: usize, tau_min: f64, tau_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid!("class count must be at least 2, got {n}"));
        }
        validate_rates(tau_min, tau_max)?;
        let span = (n - 1) as f64;
        let mut rates: Vec<f64> = (0..n)
            .map(|j| tau_min + j as f64 / span * (tau_max - tau_min))
            .collect();
        // exact endpoints
        rates[0] = tau_min;
        rates[n - 1] = tau_max;
        Ok(Self { rates })
    }

    pub fn build(ladder: &ClassLadder, policy: &FiscalPolicy) -> Result<Self> {
        Self::progressive(ladder.len(), policy.tau_min, policy.tau_max)
    }

    #[inline]
    pub fn rate(&self, j: usize) -> f64 {
        self.rates[j]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Per-class shares of redistributed tax revenue.
///
/// `w_j = r_{n+1-j} + 2 gamma (j - (n+1)/2) (r_n - r_1) / (n - 1)` in
/// 1-based class numbering, so `w_1 - w_n = (r_n - r_1)(1 - 2 gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareWeights {
    weights: Vec<f64>,
}

impl WelfareWeights {
    pub fn build(ladder: &ClassLadder, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        let n = ladder.len();
        let spread = ladder.richest() - ladder.poorest();
        let centre = (n + 1) as f64 / 2.0;
        let weights: Vec<f64> = (1..=n)
            .map(|j| {
                ladder.income(n - j) + 2.0 / (n - 1) as f64 * gamma * (j as f64 - centre) * spread
            })
            .collect();
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
            return Err(Error::Construction(alloc::format!(
                "welfare weight of class {j} is {w}; weights must be positive"
            )));
        }
        Ok(Self { weights })
    }

    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Welfare granted to the richest class relative to the poorest.
    pub fn richest_to_poorest(&self) -> f64 {
        self.weights[self.weights.len() - 1] / self.weights[0]
    }
}

/// `p[h][k]`: probability that, when an `h`-individual meets a
/// `k`-individual, the `h`-individual pays.
#[derive(Debug, Clone, PartialEq)]
pub struct PayMatrix {
    n: usize,
    p: Vec<f64>,
}

impl PayMatrix {
    pub fn build(ladder: &ClassLadder) -> Result<Self> {
        let n = ladder.len();
        let r = ladder.incomes();
        let rn = ladder.richest();
        let mut p = alloc::vec![0.0; n * n];
        for h in 0..n {
            for k in 0..n {
                p[h * n + k] = r[h].min(r[k]) / (4.0 * rn);
            }
        }
        // Exceptions, applied in order over the default.
        for j in 1..n - 1 {
            p[j * n + j] = r[j] / (2.0 * rn);
        }
        for h in 1..n {
            p[h * n] = r[0] / (2.0 * rn);
        }
        let from_first_column = p[(n - 1) * n];
        for k in 0..n - 1 {
            p[(n - 1) * n + k] = r[k] / (2.0 * rn);
        }
        if p[(n - 1) * n] != from_first_column {
            return Err(Error::Construction(
                "pay-probability exceptions disagree on the (richest, poorest) cell".into(),
            ));
        }
        for k in 0..n {
            p[k] = 0.0;
        }
        for h in 0..n {
            p[h * n + n - 1] = 0.0;
        }

        let matrix = Self { n, p };
        matrix.check()?;
        Ok(matrix)
    }

    fn check(&self) -> Result<()> {
        for h in 0..self.n {
            for k in 0..self.n {
                let v = self.get(h, k);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Construction(alloc::format!(
                        "p[{h}][{k}] = {v} is not a probability"
                    )));
                }
                if v + self.get(k, h) > 1.0 {
                    return Err(Error::Construction(alloc::format!(
                        "p[{h}][{k}] + p[{k}][{h}] exceeds 1"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, h: usize, k: usize) -> f64 {
        self.p[h * self.n + k]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Transition densities of direct interactions.
///
/// `get(h, k, i)` is the probability that an `h`-individual ends up in class
/// `i` after a direct interaction with a `k`-individual. Only `i` in
/// `{h - 1, h, h + 1}` can be nonzero, so entries are stored as
/// `[down, stay, up]` per `(h, k)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectKernel {
    n: usize,
    entries: Vec<[f64; 3]>,
}

const DOWN: usize = 0;
const STAY: usize = 1;
const UP: usize = 2;

impl DirectKernel {
    pub fn build(
        ladder: &ClassLadder,
        pay: &PayMatrix,
        taxes: &TaxSchedule,
        transaction: f64,
    ) -> Result<Self> {
        let n = ladder.len();
        if pay.len() != n || taxes.rates().len() != n {
            return Err(invalid!("kernel inputs disagree on the class count"));
        }
        if !(transaction > 0.0 && transaction < ladder.min_gap()) {
            return Err(invalid!(
                "transaction amount must lie in (0, {}), got {transaction}",
                ladder.min_gap()
            ));
        }
        let s = transaction;
        let tau = |j: usize| taxes.rate(j);
        let mut entries = alloc::vec![[0.0; 3]; n * n];

        for i in 0..n {
            for k in 0..n {
                // (i+1, k) -> i: the richer payer drops one class.
                if i + 1 < n && k + 1 < n {
                    entries[(i + 1) * n + k][DOWN] =
                        pay.get(i + 1, k) * s * (1.0 - tau(k)) / ladder.gap(i);
                }
                let mut stay = 1.0;
                if i + 1 < n && k >= 1 {
                    stay -= pay.get(k, i) * s * (1.0 - tau(i)) / ladder.gap(i);
                }
                if i >= 1 && k + 1 < n {
                    stay -= pay.get(i, k) * s * (1.0 - tau(k)) / ladder.gap(i - 1);
                }
                entries[i * n + k][STAY] = stay;
                // (i-1, k) -> i: the poorer earner advances one class.
                if i >= 1 && k >= 1 {
                    entries[(i - 1) * n + k][UP] =
                        pay.get(k, i - 1) * s * (1.0 - tau(i - 1)) / ladder.gap(i - 1);
                }
            }
        }

        for h in 0..n {
            for k in 0..n {
                let e = entries[h * n + k];
                if e.iter().any(|c| !(*c >= 0.0)) {
                    return Err(Error::Construction(alloc::format!(
                        "direct transition from class {h} against class {k} is negative ({e:?}); transaction too large"
                    )));
                }
                let total: f64 = e.iter().sum();
                if (total - 1.0).abs() >= 1e-12 {
                    return Err(Error::Construction(alloc::format!(
                        "direct transitions from class {h} against class {k} sum to {total}"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, h: usize, k: usize, i: usize) -> f64 {
        let e = &self.entries[h * self.n + k];
        if i + 1 == h {
            e[DOWN]
        } else if i == h {
            e[STAY]
        } else if i == h + 1 {
            e[UP]
        } else {
            0.0
        }
    }

    /// `[down, stay, up]` for the pair `(h, k)`; `down` is zero for `h = 0`
    /// and `up` is zero for `h = n - 1`.
    #[inline]
    pub fn moves(&self, h: usize, k: usize) -> [f64; 3] {
        self.entries[h * self.n + k]
    }
}

/// Every coefficient of one policy point, compiled once.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelKernel {
    ladder: ClassLadder,
    policy: FiscalPolicy,
    taxes: TaxSchedule,
    weights: WelfareWeights,
    pay: PayMatrix,
    direct: DirectKernel,
}

impl ModelKernel {
    pub fn build(ladder: ClassLadder, policy: FiscalPolicy) -> Result<Self> {
        policy.validate(&ladder)?;
        let taxes = TaxSchedule::build(&ladder, &policy)?;
        let weights = WelfareWeights::build(&ladder, policy.gamma)?;
        let pay = PayMatrix::build(&ladder)?;
        let direct = DirectKernel::build(&ladder, &pay, &taxes, policy.transaction)?;
        Ok(Self {
            ladder,
            policy,
            taxes,
            weights,
            pay,
            direct,
        })
    }

    pub fn len(&self) -> usize {
        self.ladder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ladder.is_empty()
    }

    pub fn ladder(&self) -> &ClassLadder {
        &self.ladder
    }

    pub fn policy(&self) -> &FiscalPolicy {
        &self.policy
    }

    pub fn taxes(&self) -> &TaxSchedule {
        &self.taxes
    }

    pub fn weights(&self) -> &WelfareWeights {
        &self.weights
    }

    pub fn pay(&self) -> &PayMatrix {
        &self.pay
    }

    pub fn direct(&self) -> &DirectKernel {
        &self.direct
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn table1_kernel() -> ModelKernel {
        ModelKernel::build(ClassLadder::standard(), FiscalPolicy::new(0.30, 0.45, 0.5)).unwrap()
    }

    #[test]
    fn linear_ladders() {
        let l = ClassLadder::linear(15, 25.0).unwrap();
        let expected: Vec<f64> = (1..=15).map(|j| 25.0 * j as f64).collect();
        assert_eq!(l.incomes(), &expected[..]);
        assert_eq!(ClassLadder::linear(2, 1.0).unwrap().incomes(), &[1.0, 2.0]);
        assert_eq!(
            ClassLadder::linear(3, 10.0).unwrap().incomes(),
            &[10.0, 20.0, 30.0]
        );
    }

    #[test]
    fn ladder_rejects_bad_arguments() {
        assert!(matches!(
            ClassLadder::linear(1, 25.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            ClassLadder::linear(5, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            ClassLadder::linear(5, -1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(ClassLadder::from_incomes(vec![1.0, 1.0, 2.0]).is_err());
        assert!(ClassLadder::from_incomes(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn tax_schedule_endpoints_and_midpoint() {
        let t = TaxSchedule::progressive(15, 0.30, 0.45).unwrap();
        assert_eq!(t.rate(0), 0.30);
        assert_eq!(t.rate(14), 0.45);
        assert!((t.rate(7) - 0.375).abs() < 1e-15);
        assert!(t.rates().windows(2).all(|w| w[0] <= w[1]));

        let t = TaxSchedule::progressive(15, 0.10, 0.65).unwrap();
        assert_eq!(t.rate(14), 0.65);
    }

    #[test]
    fn flat_tax() {
        for n in [2, 3, 15, 40] {
            let t = TaxSchedule::progressive(n, 0.2, 0.2).unwrap();
            assert!(t.rates().iter().all(|&r| r == 0.2));
        }
    }

    #[test]
    fn tax_schedule_rejects_inverted_bounds() {
        assert!(matches!(
            TaxSchedule::progressive(15, 0.5, 0.3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(TaxSchedule::progressive(15, -0.1, 0.3).is_err());
        assert!(TaxSchedule::progressive(15, 0.1, 1.0).is_err());
    }

    #[test]
    fn uniform_welfare_at_half() {
        let w = WelfareWeights::build(&ClassLadder::standard(), 0.5).unwrap();
        let max = w.weights().iter().cloned().fold(f64::MIN, f64::max);
        let min = w.weights().iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min < 1e-12);
    }

    #[test]
    fn welfare_ratios_match_published_column() {
        let ladder = ClassLadder::standard();
        let published = [
            (0.45, 0.84),
            (0.40, 0.70),
            (0.35, 0.58),
            (0.30, 0.48),
            (0.25, 0.39),
            (0.20, 0.31),
            (0.15, 0.24),
        ];
        for (gamma, ratio) in published {
            let w = WelfareWeights::build(&ladder, gamma).unwrap();
            assert!(
                (w.richest_to_poorest() - ratio).abs() <= 0.005,
                "gamma {gamma}: {}",
                w.richest_to_poorest()
            );
        }
    }

    #[test]
    fn welfare_rejects_gamma_out_of_range() {
        let ladder = ClassLadder::standard();
        for gamma in [0.0, -0.1, 0.51, f64::NAN] {
            assert!(matches!(
                WelfareWeights::build(&ladder, gamma),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn welfare_rejects_nonpositive_weights() {
        // Strongly convex ladder: w_n = r_1 + gamma (r_n - r_1) stays positive,
        // but an interior weight goes negative for small gamma.
        let ladder = ClassLadder::from_incomes(vec![1.0, 2.0, 1000.0]).unwrap();
        // w_2 = r_2 + 0 = 2 > 0; w_1 = r_3 - gamma * 999 > 0 for gamma <= 0.5.
        assert!(WelfareWeights::build(&ladder, 0.5).is_ok());
        let ladder = ClassLadder::from_incomes(vec![1.0, 2.0, 3.0, 1000.0]).unwrap();
        // w_2 = r_3 + (2/3) gamma (2 - 2.5) 999 = 3 - 333 gamma < 0 for gamma = 0.5.
        assert!(matches!(
            WelfareWeights::build(&ladder, 0.5),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn pay_matrix_examples() {
        let p = PayMatrix::build(&ClassLadder::standard()).unwrap();
        for k in 0..15 {
            assert_eq!(p.get(0, k), 0.0);
            assert_eq!(p.get(k, 14), 0.0);
        }
        assert!((p.get(1, 2) - 1.0 / 30.0).abs() < 1e-15);
        assert!((p.get(14, 3) - 100.0 / 750.0).abs() < 1e-15);
        assert!((p.get(14, 0) - 25.0 / 750.0).abs() < 1e-15);
        assert!((p.get(5, 5) - 150.0 / 750.0).abs() < 1e-15);
        assert!((p.get(5, 0) - 25.0 / 750.0).abs() < 1e-15);
        assert!((p.get(5, 9) - 150.0 / 1500.0).abs() < 1e-15);
    }

    #[test]
    fn pay_matrix_bounds() {
        for n in [2, 3, 7, 15] {
            let p = PayMatrix::build(&ClassLadder::linear(n, 25.0).unwrap()).unwrap();
            for h in 0..n {
                for k in 0..n {
                    assert!((0.0..=1.0).contains(&p.get(h, k)));
                    assert!(p.get(h, k) + p.get(k, h) <= 1.0);
                }
            }
        }
    }

    #[test]
    fn direct_kernel_is_stochastic_and_tridiagonal() {
        let m = table1_kernel();
        let c = m.direct();
        for h in 0..15 {
            for k in 0..15 {
                let sum: f64 = (0..15).map(|i| c.get(h, k, i)).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for i in 0..15 {
                    assert!(c.get(h, k, i) >= 0.0);
                    if i.abs_diff(h) > 1 {
                        assert_eq!(c.get(h, k, i), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn poorest_against_poorest_never_moves() {
        let m = table1_kernel();
        assert_eq!(m.direct().get(0, 0, 0), 1.0);
        assert_eq!(m.direct().get(0, 0, 1), 0.0);
    }

    #[test]
    fn direct_kernel_hand_value() {
        // 1-based C[2][2][1] = p_{2,2} (1 - tau_2) S / (r_2 - r_1)
        let m = table1_kernel();
        let tau2 = 0.30 + 0.15 / 14.0;
        let expected = (50.0 / 750.0) * (1.0 - tau2) / 25.0;
        assert!((m.direct().get(1, 1, 0) - expected).abs() < 1e-16);
        assert!((expected - 0.001_838_095_238_095_238).abs() < 1e-15);
    }

    #[test]
    fn oversized_transaction_is_rejected() {
        let ladder = ClassLadder::standard();
        let policy = FiscalPolicy::new(0.3, 0.45, 0.5).with_transaction(25.0);
        assert!(matches!(
            ModelKernel::build(ladder.clone(), policy),
            Err(Error::InvalidArgument(_))
        ));
        let taxes = TaxSchedule::progressive(15, 0.0, 0.0).unwrap();
        let pay = PayMatrix::build(&ladder).unwrap();
        assert!(DirectKernel::build(&ladder, &pay, &taxes, 30.0).is_err());
    }
}
