//! How well frontier configurations found on training inputs hold up on
//! held-out inputs: per-configuration medians on both sets and a
//! least-squares line of test against train.

use serde::{Deserialize, Serialize};

use super::{Evaluate, KernelEvaluator, Objective};
use crate::bench::{InputSet, Kernel};
use crate::energy::EpiTable;
use crate::error::{Error, Result};
use crate::fpcore::Width;
use crate::scope::Configuration;

/// `y = slope * x + intercept` with Pearson correlation `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when one side has zero variance and the sides differ.
    pub r: Option<f64>,
}

/// Least-squares fit of `y` on `x`. Identical vectors give `r = 1` even when
/// constant.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<Fit> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!("a fit needs at least two points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if x == y {
        return Ok(Fit { slope: 1.0, intercept: 0.0, r: Some(1.0) });
    }
    if sxx == 0.0 {
        return Ok(Fit { slope: 0.0, intercept: my, r: None });
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { None } else { Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)) };
    Ok(Fit { slope, intercept: my - slope * mx, r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub config: Configuration,
    pub train_error_pct: f64,
    pub test_error_pct: f64,
    pub train_energy: f64,
    pub test_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessStats {
    pub rows: Vec<RobustnessRow>,
    pub error_fit: Fit,
    pub energy_fit: Fit,
}

/// Train and test medians for each configuration, without fitting.
pub fn robustness_rows(
    configs: &[Configuration],
    kernel: &dyn Kernel,
    inputs: &InputSet,
    width: Width,
    table: &EpiTable,
    objective: Objective,
) -> Result<Vec<RobustnessRow>> {
    if inputs.train.is_empty() || inputs.test.is_empty() {
        return Err(Error::Config("robustness needs both training and test inputs".into()));
    }
    let train = KernelEvaluator::new(kernel, inputs.train.clone(), width, table.clone())?.evaluate_batch(configs)?;
    let test = KernelEvaluator::new(kernel, inputs.test.clone(), width, table.clone())?.evaluate_batch(configs)?;
    Ok(train
        .into_iter()
        .zip(test)
        .map(|(a, b)| {
            let (ea, fa) = a.objectives(objective);
            let (eb, fb) = b.objectives(objective);
            RobustnessRow {
                config: a.config,
                train_error_pct: ea,
                test_error_pct: eb,
                train_energy: fa,
                test_energy: fb,
            }
        })
        .collect())
}

/// Fit test against train for error and for energy.
pub fn fit_rows(rows: Vec<RobustnessRow>) -> Result<RobustnessStats> {
    let col = |f: fn(&RobustnessRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let error_fit = linear_fit(&col(|r| r.train_error_pct), &col(|r| r.test_error_pct))?;
    let energy_fit = linear_fit(&col(|r| r.train_energy), &col(|r| r.test_energy))?;
    Ok(RobustnessStats { rows, error_fit, energy_fit })
}

/// Evaluate `configs` on both halves of `inputs` and fit. Energy means the
/// normalized value selected by `objective`.
pub fn robustness(
    configs: &[Configuration],
    kernel: &dyn Kernel,
    inputs: &InputSet,
    width: Width,
    table: &EpiTable,
    objective: Objective,
) -> Result<RobustnessStats> {
    if configs.len() < 2 {
        return Err(Error::Degenerate(format!("robustness needs at least two configurations, got {}", configs.len())));
    }
    fit_rows(robustness_rows(configs, kernel, inputs, width, table, objective)?)
}
