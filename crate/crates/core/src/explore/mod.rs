//! Search over configurations: the evaluation contract, exhaustive and
//! NSGA-II search, frontier extraction, and train/test robustness.

pub mod exhaustive;
pub mod nsga2;
pub mod pareto;
pub mod robustness;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{baseline, run_kernel, Baseline, Kernel, KernelInput};
use crate::energy::EpiTable;
use crate::error::{Error, Result};
use crate::fpcore::Width;
use crate::scope::{Configuration, RuleKind, ScopeId};

pub use exhaustive::{exhaustive_search, DEFAULT_SPACE_CAP};
pub use nsga2::{nsga2_search, GaParams};
pub use pareto::{
    crowding_distance, dominates, hull_value_at, lower_convex_hull, nondominated_sort, pareto_front, quantize_frontier,
    Savings, DEFAULT_THRESHOLDS,
};
pub use robustness::{fit_rows, linear_fit, robustness, robustness_rows, Fit, RobustnessRow, RobustnessStats};

/// Second search objective; the first is always the error percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Normalized FPU energy.
    #[default]
    Fpu,
    /// Normalized FPU plus memory energy.
    Combined,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpu" => Ok(Objective::Fpu),
            "combined" => Ok(Objective::Combined),
            _ => Err(Error::Config(format!("unknown objective `{s}`"))),
        }
    }
}

/// Outcome of one configuration, as medians over an input set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub config: Configuration,
    pub error_pct: f64,
    pub fpu_norm: f64,
    pub mem_norm: f64,
    pub combined_norm: f64,
    pub fpu_pj: f64,
    pub mem_pj: f64,
}

impl EvalPoint {
    pub fn objectives(&self, objective: Objective) -> (f64, f64) {
        match objective {
            Objective::Fpu => (self.error_pct, self.fpu_norm),
            Objective::Combined => (self.error_pct, self.combined_norm),
        }
    }
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Anything that turns a configuration into an [`EvalPoint`]. Must be
/// deterministic.
pub trait Evaluate: Sync {
    fn evaluate(&self, config: &Configuration) -> Result<EvalPoint>;

    /// Evaluate a batch, possibly in parallel; results keep batch order.
    fn evaluate_batch(&self, configs: &[Configuration]) -> Result<Vec<EvalPoint>> {
        configs.par_iter().map(|c| self.evaluate(c)).collect()
    }
}

/// Runs a kernel over a fixed list of inputs against their full-precision
/// baselines.
pub struct KernelEvaluator<'k> {
    kernel: &'k dyn Kernel,
    inputs: Vec<KernelInput>,
    baselines: Vec<Baseline>,
    table: EpiTable,
}

impl<'k> KernelEvaluator<'k> {
    pub fn new(kernel: &'k dyn Kernel, inputs: Vec<KernelInput>, width: Width, table: EpiTable) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Config("evaluation needs at least one input".into()));
        }
        let baselines = inputs.iter().map(|i| baseline(kernel, i, width, &table)).collect::<Result<_>>()?;
        Ok(Self { kernel, inputs, baselines, table })
    }

    pub fn kernel(&self) -> &'k dyn Kernel {
        self.kernel
    }

    pub fn inputs(&self) -> &[KernelInput] {
        &self.inputs
    }
}

impl Evaluate for KernelEvaluator<'_> {
    fn evaluate(&self, config: &Configuration) -> Result<EvalPoint> {
        let n = self.inputs.len();
        let mut cols: [Vec<f64>; 6] = Default::default();
        for (input, base) in self.inputs.iter().zip(&self.baselines) {
            let r = run_kernel(self.kernel, config, input, base, &self.table, false)?;
            let base_total = base.energy.fpu_pj + base.energy.mem_pj;
            let combined = crate::energy::percent_of(r.fpu_pj() + r.mem_pj(), base_total);
            for (col, v) in
                cols.iter_mut().zip([r.error_pct, r.fpu_norm(), r.mem_norm(), combined, r.fpu_pj(), r.mem_pj()])
            {
                col.reserve(n);
                col.push(v);
            }
        }
        let [error, fpu, mem, combined, fpu_pj, mem_pj] = cols.map(|c| median(&c));
        Ok(EvalPoint {
            config: config.clone(),
            error_pct: error,
            fpu_norm: fpu,
            mem_norm: mem,
            combined_norm: combined,
            fpu_pj,
            mem_pj,
        })
    }
}

/// The configurations reachable with one rule kind, target list, and
/// per-gene alphabet of mantissa levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    pub rule_kind: RuleKind,
    pub width: Width,
    pub targets: Vec<ScopeId>,
    /// Sorted ascending, no duplicates.
    pub alphabet: Vec<u32>,
}

impl SearchSpace {
    pub fn new(rule_kind: RuleKind, width: Width, targets: Vec<ScopeId>, mut alphabet: Vec<u32>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("search space has no targets".into()));
        }
        if rule_kind == RuleKind::Wp && targets.len() != 1 {
            return Err(Error::Config("whole-program search has exactly one target".into()));
        }
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.is_empty() {
            return Err(Error::Config("empty mantissa alphabet".into()));
        }
        for &b in &alphabet {
            width.check_bits(b)?;
        }
        Ok(Self { rule_kind, width, targets, alphabet })
    }

    /// Every mantissa width from 1 to full precision.
    pub fn full_alphabet(width: Width) -> Vec<u32> {
        (1..=width.full_mantissa()).collect()
    }

    pub fn genes(&self) -> usize {
        self.targets.len()
    }

    /// Number of configurations, saturating.
    pub fn size(&self) -> u128 {
        (self.alphabet.len() as u128).checked_pow(self.genes() as u32).unwrap_or(u128::MAX)
    }

    /// Genome of alphabet indices for the highest available level on every
    /// target; the identity when the alphabet includes full precision.
    pub fn top_genome(&self) -> Vec<usize> {
        vec![self.alphabet.len() - 1; self.genes()]
    }

    pub fn config(&self, genome: &[usize]) -> Result<Configuration> {
        let bits = genome.iter().map(|&g| self.alphabet[g]).collect();
        Configuration::new(self.rule_kind, self.width, self.targets.clone(), bits)
    }

    /// Mixed-radix decoding of a configuration number, first gene most
    /// significant.
    pub fn decode(&self, mut index: u128) -> Vec<usize> {
        let radix = self.alphabet.len() as u128;
        let mut genome = vec![0; self.genes()];
        for g in genome.iter_mut().rev() {
            *g = (index % radix) as usize;
            index /= radix;
        }
        genome
    }

    pub fn encode(&self, genome: &[usize]) -> u128 {
        let radix = self.alphabet.len() as u128;
        genome.iter().fold(0u128, |acc, &g| acc * radix + g as u128)
    }
}

/// Nondominated points of an evaluation log and their lower convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub objective: Objective,
    /// Ascending error.
    pub points: Vec<EvalPoint>,
    /// Ascending error, a subset of `points`.
    pub hull: Vec<EvalPoint>,
    /// Positions of `points` in the log they were drawn from.
    pub point_ids: Vec<usize>,
    pub hull_ids: Vec<usize>,
}

impl Frontier {
    pub fn from_log(log: &[EvalPoint], objective: Objective) -> Self {
        let objs: Vec<(f64, f64)> = log.iter().map(|p| p.objectives(objective)).collect();
        let mut point_ids = pareto_front(&objs);
        // ties broken by genome for a stable order
        point_ids.sort_by(|&a, &b| {
            pareto_cmp(objs[a], objs[b]).then_with(|| log[a].config.genome.cmp(&log[b].config.genome)).then(a.cmp(&b))
        });
        let front_objs: Vec<(f64, f64)> = point_ids.iter().map(|&i| objs[i]).collect();
        let hull_ids: Vec<usize> = lower_convex_hull(&front_objs).into_iter().map(|k| point_ids[k]).collect();
        Self {
            objective,
            points: point_ids.iter().map(|&i| log[i].clone()).collect(),
            hull: hull_ids.iter().map(|&i| log[i].clone()).collect(),
            point_ids,
            hull_ids,
        }
    }

    pub fn hull_objectives(&self) -> Vec<(f64, f64)> {
        self.hull.iter().map(|p| p.objectives(self.objective)).collect()
    }

    pub fn savings(&self, thresholds: &[f64]) -> Vec<Savings> {
        let pts: Vec<(f64, f64, f64)> = self.points.iter().map(|p| (p.error_pct, p.fpu_norm, p.mem_norm)).collect();
        quantize_frontier(&pts, thresholds)
    }
}

fn pareto_cmp(a: (f64, f64), b: (f64, f64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Result of a search: every evaluation in order, and the frontier of all of
/// them.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub log: Vec<EvalPoint>,
    pub frontier: Frontier,
    pub generations_run: usize,
    /// The search stopped early for lack of hypervolume progress.
    pub stalled: bool,
}

impl SearchResult {
    pub fn evaluations(&self) -> usize {
        self.log.len()
    }
}

/// Largest vertical gap by which `upper`'s hull falls below `lower`'s,
/// checked at every vertex of `upper`. Non-positive means `lower` lies on or
/// below `upper` everywhere (both hulls are piecewise linear and `lower` is
/// convex, so the vertices of `upper` are the only places to look).
pub fn hull_excess(lower: &[(f64, f64)], upper: &[(f64, f64)]) -> f64 {
    upper.iter().map(|&(x, y)| hull_value_at(lower, x) - y).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn space_encoding_round_trips() {
        let s = SearchSpace::new(
            RuleKind::Cip,
            Width::Single,
            vec!["a".into(), "b".into(), "c".into()],
            vec![24, 6, 12, 18],
        )
        .unwrap();
        assert_eq!(s.alphabet, vec![6, 12, 18, 24]);
        assert_eq!(s.size(), 64);
        for i in 0..64 {
            assert_eq!(s.encode(&s.decode(i)), i);
        }
        assert_eq!(s.config(&s.top_genome()).unwrap().genome, vec![24, 24, 24]);
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::new(RuleKind::Cip, Width::Single, vec![], vec![4]).is_err());
        assert!(SearchSpace::new(RuleKind::Cip, Width::Single, vec!["a".into()], vec![25]).is_err());
        assert!(SearchSpace::new(RuleKind::Wp, Width::Single, vec!["a".into(), "b".into()], vec![4]).is_err());
        assert_eq!(SearchSpace::full_alphabet(Width::Double).len(), 53);
    }

    #[test]
    fn hull_excess_sign() {
        let low = [(0.0, 100.0), (10.0, 10.0)];
        let high = [(0.0, 100.0), (5.0, 80.0), (10.0, 40.0)];
        assert!(hull_excess(&low, &high) <= 0.0);
        assert!(hull_excess(&high, &low) > 0.0);
    }
}
