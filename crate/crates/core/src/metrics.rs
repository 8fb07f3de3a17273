//! Inequality and fiscal indicators on class distributions.
//!
//! Each class is treated as a point mass at its average income, so the
//! Lorenz curve is piecewise linear through `n + 1` vertices and the
//! trapezoid rule gives its Gini index exactly.

use alloc::vec::Vec;
use core::ops::Range;

use crate::dynamics::total_income;
use crate::error::{invalid, Error, Result};
use crate::kernel::{ClassLadder, ModelKernel};

/// Vertices `(population share, income share)` from `(0, 0)` to `(1, 1)`,
/// classes taken from poorest to richest.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzCurve {
    points: Vec<(f64, f64)>,
}

impl LorenzCurve {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Twice the area between the diagonal and the curve.
    pub fn gini(&self) -> f64 {
        let under: f64 = self
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
            .sum();
        1.0 - under
    }
}

pub fn lorenz(x: &[f64], ladder: &ClassLadder) -> Result<LorenzCurve> {
    if x.len() != ladder.len() {
        return Err(invalid!(
            "state has {} classes, ladder has {}",
            x.len(),
            ladder.len()
        ));
    }
    let mu = total_income(x, ladder);
    if !(mu > 0.0) {
        return Err(Error::DegenerateInput(alloc::format!(
            "total income is {mu}; the Lorenz curve is undefined"
        )));
    }
    let mut points = Vec::with_capacity(x.len() + 1);
    points.push((0.0, 0.0));
    let (mut population, mut income) = (0.0, 0.0);
    for (xi, ri) in x.iter().zip(ladder.incomes()) {
        population += xi;
        income += ri * xi;
        points.push((population, income / mu));
    }
    Ok(LorenzCurve { points })
}

/// Gini index of the class distribution `x`; 0 is complete equality.
pub fn gini(x: &[f64], ladder: &ClassLadder) -> Result<f64> {
    Ok(lorenz(x, ladder)?.gini())
}

/// Tax collected per unit time at state `x`:
/// `S sum_h sum_k sum_{j<n} p_hk tau_k (w_j x_j / sum_i w_i x_i) x_h x_k`.
pub fn tax_revenue(x: &[f64], model: &ModelKernel) -> Result<f64> {
    let n = model.len();
    if x.len() != n {
        return Err(invalid!("state has {} classes, model has {n}", x.len()));
    }
    let w = model.weights().weights();
    let weighted: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    if !(weighted > 0.0) {
        return Err(Error::DegenerateInput(alloc::format!(
            "welfare-weighted mass is {weighted}"
        )));
    }
    let pay = model.pay();
    let tau = model.taxes().rates();
    let mut revenue = 0.0;
    for h in 0..n {
        for k in 0..n {
            let payment = pay.get(h, k) * tau[k] * x[h] * x[k];
            for j in 0..n - 1 {
                revenue += payment * w[j] * x[j] / weighted;
            }
        }
    }
    Ok(model.policy().transaction * revenue)
}

/// Componentwise `a - b`.
pub fn class_diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(invalid!(
            "distributions have {} and {} classes",
            a.len(),
            b.len()
        ));
    }
    Ok(a.iter().zip(b).map(|(a, b)| a - b).collect())
}

/// The classes that gained, provided they form one contiguous band and both
/// the poorest and the richest class lost.
pub fn middle_class_gain(diff: &[f64]) -> Option<Range<usize>> {
    let n = diff.len();
    if n < 3 || !(diff[0] < 0.0) || !(diff[n - 1] < 0.0) {
        return None;
    }
    let start = diff.iter().position(|d| *d > 0.0)?;
    let end = start + diff[start..].iter().take_while(|d| **d > 0.0).count();
    if diff[end..].iter().any(|d| *d > 0.0) {
        return None;
    }
    Some(start..end)
}

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// `1 - SS_res / SS_tot`, equal to the squared Pearson correlation.
    pub r_squared: f64,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "a line needs at least two points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid!("fit points must be finite"));
    }
    let count = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("abscissa is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
    })
}
