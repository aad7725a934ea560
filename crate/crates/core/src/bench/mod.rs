//! Built-in instrumented kernels, their input sets, quality metrics, and the
//! single-configuration runner.

pub mod blackscholes;
pub mod cnn;
pub mod kmeans;
pub mod micro;
pub mod particlefilter;
pub mod radar;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyReport, EpiTable, ExecutionCounters, TOP_N};
use crate::error::{Error, Result};
use crate::fpcore::Width;
use crate::instrument::{Execution, Instrumented, TraceRecord};
use crate::scope::{Configuration, PlacementRule, RuleKind, ScopeId, WHOLE_PROGRAM};

/// Unwrap the input variant belonging to this kernel.
macro_rules! expect_input {
    ($input:expr, $variant:ident, $spec:expr) => {
        match $input {
            $crate::bench::KernelInput::$variant(i) => i,
            _ => return Err($crate::error::Error::InputMismatch($spec.name.to_string())),
        }
    };
}
pub(crate) use expect_input;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Guard for zero baselines in relative errors.
pub const EPSILON: f64 = 1e-12;

/// Per-element error assigned when an output is not finite but its baseline
/// is. Keeps every error figure finite so points stay comparable.
pub const NON_FINITE_ERROR_PCT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean of `|x - x0| / max(|x0|, eps)`, in percent.
    MeanRelative,
    /// `rms(x - x0) / max(rms(x0), eps)`, in percent.
    RelativeRmse,
    /// Share of differing class labels, in percent.
    LabelMismatch,
}

#[derive(Debug)]
pub struct KernelSpec {
    pub name: &'static str,
    /// Instance-level tunable scopes.
    pub scopes: &'static [&'static str],
    pub width: Width,
    pub metric: Metric,
    pub default_size: usize,
    pub description: &'static str,
    /// Layer-category scopes for per-category placement; empty when the
    /// kernel has no layers.
    pub categories: &'static [&'static str],
    /// Call-stack targets used when an FCS search names none; empty means the
    /// CIP selection.
    pub fcs_targets: &'static [&'static str],
}

impl KernelSpec {
    /// Whether `scope` is something a configuration of this kernel may map.
    pub fn knows_scope(&self, scope: &str) -> bool {
        self.scopes.contains(&scope) || self.categories.contains(&scope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", content = "data", rename_all = "snake_case")]
pub enum KernelInput {
    Blackscholes(blackscholes::Input),
    Kmeans(kmeans::Input),
    Radar(radar::Input),
    Particlefilter(particlefilter::Input),
    Cnn(cnn::Input),
    Micro(micro::Input),
}

pub trait Kernel: Send + Sync {
    fn spec(&self) -> &KernelSpec;
    fn generate(&self, seed: u64, size: usize) -> KernelInput;
    /// Plain arithmetic, no instrumentation.
    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>>;
    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>>;
}

static KERNELS: [&dyn Kernel; 6] = [
    &blackscholes::BlackScholes,
    &kmeans::KMeans,
    &radar::Radar,
    &particlefilter::ParticleFilter,
    &cnn::CnnDigits,
    &micro::Micro,
];

pub fn kernels() -> &'static [&'static dyn Kernel] {
    &KERNELS
}

pub fn kernel_names() -> Vec<&'static str> {
    KERNELS.iter().map(|k| k.spec().name).collect()
}

pub fn kernel(name: &str) -> Result<&'static dyn Kernel> {
    KERNELS.iter().copied().find(|k| k.spec().name == name).ok_or_else(|| Error::UnknownKernel(name.to_string()))
}

pub fn error_rate(output: &[f64], baseline: &[f64], metric: Metric) -> Result<f64> {
    if output.len() != baseline.len() {
        return Err(Error::ShapeMismatch { left: output.len(), right: baseline.len() });
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let n = output.len() as f64;
    let pct = match metric {
        Metric::MeanRelative => {
            let sum: f64 = output
                .iter()
                .zip(baseline)
                .map(|(&x, &x0)| {
                    if x.to_bits() == x0.to_bits() {
                        0.0
                    } else if !x.is_finite() || !x0.is_finite() {
                        NON_FINITE_ERROR_PCT
                    } else {
                        ((x - x0).abs() / x0.abs().max(EPSILON) * 100.0).min(NON_FINITE_ERROR_PCT)
                    }
                })
                .sum();
            sum / n
        }
        Metric::RelativeRmse => {
            if output.iter().chain(baseline).any(|v| !v.is_finite()) {
                if output.iter().zip(baseline).all(|(a, b)| a.to_bits() == b.to_bits()) {
                    return Ok(0.0);
                }
                return Ok(NON_FINITE_ERROR_PCT);
            }
            let num = (output.iter().zip(baseline).map(|(x, x0)| (x - x0) * (x - x0)).sum::<f64>() / n).sqrt();
            let den = (baseline.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
            (num / den.max(EPSILON) * 100.0).min(NON_FINITE_ERROR_PCT)
        }
        Metric::LabelMismatch => {
            let diff = output.iter().zip(baseline).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
            diff as f64 / n * 100.0
        }
    };
    Ok(pct)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th input drawn from stream `stream` of a base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)).wrapping_add(index))
}

pub const DEFAULT_TRAIN: usize = 3;
pub const DEFAULT_TEST: usize = 9;

/// Disjoint training and test inputs for one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSet {
    pub kernel: String,
    pub size: usize,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    pub train: Vec<KernelInput>,
    pub test: Vec<KernelInput>,
}

impl InputSet {
    pub fn generate(kernel: &dyn Kernel, seed: u64, size: usize, n_train: usize, n_test: usize) -> Result<Self> {
        let train_seeds: Vec<u64> = (0..n_train as u64).map(|i| derive_seed(seed, 1, i)).collect();
        let test_seeds: Vec<u64> = (0..n_test as u64).map(|i| derive_seed(seed, 2, i)).collect();
        let set = Self {
            kernel: kernel.spec().name.to_string(),
            size,
            train: train_seeds.iter().map(|&s| kernel.generate(s, size)).collect(),
            test: test_seeds.iter().map(|&s| kernel.generate(s, size)).collect(),
            train_seeds,
            test_seeds,
        };
        set.check_disjoint()?;
        Ok(set)
    }

    /// Training inputs reused as the test set.
    pub fn self_test(&self) -> Self {
        Self { test_seeds: self.train_seeds.clone(), test: self.train.clone(), ..self.clone() }
    }

    pub fn check_disjoint(&self) -> Result<()> {
        for (s, input) in self.train_seeds.iter().zip(&self.train) {
            if self.test_seeds.contains(s) || self.test.contains(input) {
                return Err(Error::Config(format!("training input with seed {s} also appears in the test set")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Full-precision reference for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub output: Vec<f64>,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: Vec<f64>,
    pub counters: ExecutionCounters,
    pub error_pct: f64,
    pub energy: EnergyReport,
    pub trace: Option<Vec<TraceRecord>>,
}

impl RunResult {
    pub fn fpu_pj(&self) -> f64 {
        self.energy.fpu_pj
    }

    pub fn mem_pj(&self) -> f64 {
        self.energy.mem_pj
    }

    pub fn fpu_norm(&self) -> f64 {
        self.energy.normalized_fpu.unwrap_or(100.0)
    }

    pub fn mem_norm(&self) -> f64 {
        self.energy.normalized_mem.unwrap_or(100.0)
    }
}

/// Reject configurations naming scopes the kernel does not have.
pub fn check_targets(kernel: &dyn Kernel, config: &Configuration) -> Result<()> {
    config.validate()?;
    let spec = kernel.spec();
    for t in &config.targets {
        let ok =
            if config.rule_kind == RuleKind::Wp { t.as_str() == WHOLE_PROGRAM } else { spec.knows_scope(t.as_str()) };
        if !ok {
            return Err(Error::UnknownScope { kernel: spec.name.to_string(), scope: t.to_string() });
        }
    }
    Ok(())
}

/// Execute once under `rule`, returning the output and the counters.
pub fn execute(
    kernel: &dyn Kernel,
    rule: &PlacementRule,
    input: &KernelInput,
    trace: bool,
) -> Result<(Vec<f64>, Execution)> {
    let mut ctx = Instrumented::new(rule);
    if trace {
        ctx = ctx.with_trace();
    }
    let output = kernel.run_instrumented(&mut ctx, input)?;
    Ok((output, ctx.finish()?))
}

pub fn baseline(kernel: &dyn Kernel, input: &KernelInput, width: Width, table: &EpiTable) -> Result<Baseline> {
    let rule = PlacementRule::identity(width);
    let (output, exec) = execute(kernel, &rule, input, false)?;
    Ok(Baseline { output, energy: EnergyReport::new(&exec.counters, table)? })
}

pub fn run_kernel(
    kernel: &dyn Kernel,
    config: &Configuration,
    input: &KernelInput,
    baseline: &Baseline,
    table: &EpiTable,
    trace: bool,
) -> Result<RunResult> {
    check_targets(kernel, config)?;
    let rule = config.to_rule()?;
    let (output, exec) = execute(kernel, &rule, input, trace)?;
    let error_pct = error_rate(&output, &baseline.output, kernel.spec().metric)?;
    let energy = EnergyReport::new(&exec.counters, table)?.normalized_against(&baseline.energy);
    Ok(RunResult { output, counters: exec.counters, error_pct, energy, trace: exec.trace })
}

/// Tunable targets a search uses when the user names none.
///
/// WP has the single whole-program target. CIP takes the `TOP_N` kernel
/// scopes with the most target-width FLOPs in `profile`. FCS uses the
/// kernel's call-stack targets when it declares them, else the CIP choice.
/// PLC maps layer categories and PLI layer instances.
pub fn default_targets(
    kernel: &dyn Kernel,
    rule: RuleKind,
    width: Width,
    profile: &ExecutionCounters,
) -> Result<Vec<ScopeId>> {
    let spec = kernel.spec();
    let targets: Vec<ScopeId> = match rule {
        RuleKind::Wp => vec![ScopeId::from_static(WHOLE_PROGRAM)],
        RuleKind::Fcs if !spec.fcs_targets.is_empty() => {
            spec.fcs_targets.iter().map(|&s| ScopeId::from_static(s)).collect()
        }
        RuleKind::Cip | RuleKind::Fcs => profile
            .top_scopes(usize::MAX, Some(width))
            .into_iter()
            .filter(|s| spec.scopes.contains(&s.as_str()))
            .take(TOP_N)
            .collect(),
        RuleKind::Plc => spec.categories.iter().map(|&s| ScopeId::from_static(s)).collect(),
        RuleKind::Pli if !spec.categories.is_empty() => spec.scopes.iter().map(|&s| ScopeId::from_static(s)).collect(),
        RuleKind::Pli => Vec::new(),
    };
    if targets.is_empty() {
        return Err(Error::Config(format!("kernel `{}` has no {} targets for {width}", spec.name, rule.as_str())));
    }
    Ok(targets)
}
