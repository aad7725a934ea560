//! Subcommand bodies. Each returns the lines it wants printed; `main` owns
//! stdout, stderr and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use precis::bench::{
    baseline, default_targets, derive_seed, execute, kernel, kernels, run_kernel, InputSet, Kernel, KernelInput,
    DEFAULT_TEST, DEFAULT_TRAIN,
};
use precis::energy::{profile_report, EpiTable};
use precis::explore::{
    exhaustive_search, fit_rows, lower_convex_hull, median, nsga2_search, pareto_front, quantize_frontier,
    robustness_rows, GaParams, KernelEvaluator, Objective, SearchSpace, DEFAULT_SPACE_CAP, DEFAULT_THRESHOLDS,
};
use precis::fpcore::Width;
use precis::report::{self, EvalRow, RunRow};
use precis::scope::{parse_genome, Configuration, PlacementRule, RuleKind, ScopeId};
use precis::{Error, Result};

use crate::manifest::{Mode, RunManifest, SpaceRecord, SPACE_FILE};

pub const DEFAULT_OUT: &str = "precis-out";

/// Outcome of a command that completed but wants a nonzero exit.
pub struct Outcome {
    pub lines: Vec<String>,
    pub warning: Option<String>,
}

impl From<Vec<String>> for Outcome {
    fn from(lines: Vec<String>) -> Self {
        Self { lines, warning: None }
    }
}

/// Fields every command resolves the same way.
struct Setup {
    kernel: &'static dyn Kernel,
    width: Width,
    seed: u64,
    size: usize,
    table: EpiTable,
    out: PathBuf,
}

impl Setup {
    fn new(m: &RunManifest) -> Result<Self> {
        let name =
            m.kernel.as_deref().ok_or_else(|| Error::Config("no kernel given (use --kernel or a manifest)".into()))?;
        let kernel = kernel(name)?;
        let spec = kernel.spec();
        let table = match &m.epi_table {
            Some(p) => EpiTable::load(p)?,
            None => EpiTable::default(),
        };
        let out = m.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&out)?;
        Ok(Self {
            kernel,
            width: m.width.unwrap_or(spec.width),
            seed: m.resolved_seed()?,
            size: m.input_size.unwrap_or(spec.default_size),
            table,
            out,
        })
    }

    /// Training inputs, plus the test inputs when `with_test` is set.
    fn inputs(&self, m: &RunManifest, with_test: bool) -> Result<InputSet> {
        let test = if with_test { m.test.unwrap_or(DEFAULT_TEST) } else { 0 };
        InputSet::generate(self.kernel, self.seed, self.size, m.train.unwrap_or(DEFAULT_TRAIN), test)
    }

    /// Explicit targets, or the defaults from an identity profile of the
    /// first input. Also rejects a width the kernel never computes in.
    fn targets(&self, rule: RuleKind, m: &RunManifest, first: &KernelInput) -> Result<Vec<ScopeId>> {
        let (_, exec) = execute(self.kernel, &PlacementRule::identity(self.width), first, false)?;
        let total = exec.counters.total();
        if total.total_flops() > 0 && total.flops_of_width(self.width) == 0 {
            return Err(Error::Config(format!("kernel `{}` issues no {} FLOPs", self.kernel.spec().name, self.width)));
        }
        match &m.targets {
            Some(t) if rule == RuleKind::Wp => {
                Err(Error::Config(format!("whole-program runs take no targets, got {}", t.len())))
            }
            Some(t) => Ok(t.clone()),
            None => default_targets(self.kernel, rule, self.width, &exec.counters),
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }
}

fn first(set: &InputSet) -> Result<&KernelInput> {
    set.train.first().ok_or_else(|| Error::Config("at least one training input is required".into()))
}

pub fn kernels_list() -> Vec<String> {
    kernels()
        .iter()
        .map(|k| {
            let s = k.spec();
            format!("{:<22} {:<6} {}  [{}]", s.name, s.width, s.description, s.scopes.join(", "))
        })
        .collect()
}

/// Per-scope FLOP table of one input under full precision.
pub fn profile(m: &RunManifest) -> Result<Outcome> {
    let setup = Setup::new(m)?;
    let input = setup.kernel.generate(derive_seed(setup.seed, 1, 0), setup.size);
    let (_, exec) = execute(setup.kernel, &PlacementRule::identity(setup.width), &input, false)?;
    let rep = profile_report(&exec.counters);
    report::write_csv(setup.path("profile.csv"), &report::profile_rows(&rep), report::PROFILE_HEADER)?;
    let summary = report::profile_summary_rows(&rep);
    report::write_csv(setup.path("profile_summary.csv"), &summary, report::SUMMARY_HEADER)?;
    let mut lines: Vec<String> = summary.iter().map(|r| format!("{}: {}", r.metric, r.value)).collect();
    lines.push(format!("wrote {}", setup.path("profile.csv").display()));
    Ok(lines.into())
}

/// One configuration over the training inputs, with an optional trace of
/// the first.
pub fn run(m: &RunManifest, trace: bool) -> Result<Outcome> {
    let setup = Setup::new(m)?;
    let inputs = setup.inputs(m, false)?;
    let rule = m.rule.unwrap_or(RuleKind::Wp);
    let targets = setup.targets(rule, m, first(&inputs)?)?;
    let config = match &m.genome {
        Some(g) => Configuration::new(rule, setup.width, targets, g.clone())?,
        None => Configuration::identity(rule, setup.width, targets)?,
    };
    let mut rows = Vec::new();
    let mut trace_records = None;
    for (i, input) in inputs.train.iter().enumerate() {
        let base = baseline(setup.kernel, input, setup.width, &setup.table)?;
        let r = run_kernel(setup.kernel, &config, input, &base, &setup.table, trace && i == 0)?;
        if i == 0 {
            trace_records = r.trace.clone();
        }
        rows.push(RunRow::from_result(i.to_string(), rule, &config.genome, &r));
    }
    let med = |f: fn(&RunRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let summary = RunRow {
        input: "median".into(),
        rule_kind: rule,
        genome: config.genome_string(),
        error_pct: med(|r| r.error_pct),
        fpu_norm: med(|r| r.fpu_norm),
        mem_norm: med(|r| r.mem_norm),
        fpu_pj: med(|r| r.fpu_pj),
        mem_pj: med(|r| r.mem_pj),
        flops_single: med(|r| r.flops_single as f64) as u64,
        flops_double: med(|r| r.flops_double as f64) as u64,
    };
    let mut lines = vec![format!(
        "error_pct {:.6}  fpu_norm {:.3}%  mem_norm {:.3}%",
        summary.error_pct, summary.fpu_norm, summary.mem_norm
    )];
    rows.push(summary);
    report::write_csv(setup.path("run.csv"), &rows, report::RUN_HEADER)?;
    if let Some(records) = trace_records {
        fs::write(setup.path("trace.csv"), report::trace_csv(&records))?;
        lines.push(format!("trace: {} operations", records.len()));
    }
    Ok(lines.into())
}

fn ga_params(m: &RunManifest, seed: u64) -> GaParams {
    let d = GaParams::default();
    GaParams {
        population_size: m.population.unwrap_or(d.population_size),
        generations: m.generations.unwrap_or(d.generations),
        crossover_rate: m.crossover_rate.unwrap_or(d.crossover_rate),
        mutation_rate: m.mutation_rate.or(d.mutation_rate),
        eval_budget: m.budget.unwrap_or(d.eval_budget),
        seed,
        stall_generations: m.stall_generations.or(d.stall_generations),
        objective: m.objective.unwrap_or_default(),
    }
}

/// Search a space and write the evaluation log, frontier and savings.
pub fn explore(m: &RunManifest) -> Result<Outcome> {
    let setup = Setup::new(m)?;
    let mode = m.mode.unwrap_or_default();
    let params = ga_params(m, setup.seed);
    if mode == Mode::Nsga2 {
        // fail before any kernel work
        params.validate()?;
    }
    let inputs = setup.inputs(m, false)?;
    let rule = m.rule.unwrap_or(RuleKind::Cip);
    let targets = setup.targets(rule, m, first(&inputs)?)?;
    let alphabet = m.alphabet.clone().unwrap_or_else(|| SearchSpace::full_alphabet(setup.width));
    let space = SearchSpace::new(rule, setup.width, targets, alphabet)?;
    let evaluator = KernelEvaluator::new(setup.kernel, inputs.train.clone(), setup.width, setup.table.clone())?;
    let result = match mode {
        Mode::Nsga2 => nsga2_search(&space, &params, &evaluator)?,
        Mode::Exhaustive => exhaustive_search(&space, &evaluator, params.objective, DEFAULT_SPACE_CAP)?,
    };
    report::write_csv(setup.path("evaluations.csv"), &report::eval_rows(&result), report::EVAL_HEADER)?;
    report::write_csv(setup.path("frontier.csv"), &report::frontier_rows(&result), report::EVAL_HEADER)?;
    let savings = report::savings_rows(rule, &result.frontier.savings(&DEFAULT_THRESHOLDS));
    report::write_csv(setup.path("savings.csv"), &savings, report::SAVINGS_HEADER)?;
    SpaceRecord {
        kernel: setup.kernel.spec().name.to_string(),
        rule_kind: rule,
        width: setup.width,
        targets: space.targets.clone(),
        alphabet: space.alphabet.clone(),
    }
    .save(&setup.out)?;
    // the effective settings, so the run can be repeated from the output alone
    let effective = RunManifest { seed: Some(setup.seed), ..m.clone() };
    fs::write(setup.path("manifest.toml"), effective.to_toml()?)?;
    let mut lines = vec![
        format!("targets: {}", space.targets.iter().map(ScopeId::as_str).collect::<Vec<_>>().join(", ")),
        format!("evaluations: {}", result.evaluations()),
        format!("frontier: {}  hull: {}", result.frontier.points.len(), result.frontier.hull.len()),
    ];
    if result.stalled {
        lines.push(format!("stopped after {} generations without progress", result.generations_run));
    }
    for s in &savings {
        lines.push(format!(
            "<= {:>4}% error: fpu saving {:.2}%  mem saving {:.2}%",
            s.threshold_pct, s.fpu_saving_pct, s.mem_saving_pct
        ));
    }
    Ok(lines.into())
}

fn frontier_file(path: &Path) -> Result<Vec<EvalRow>> {
    let rows: Vec<EvalRow> = report::read_csv(path)?;
    // an evaluation log works too
    if rows.iter().any(|r| r.is_frontier) {
        Ok(rows.into_iter().filter(|r| r.is_frontier).collect())
    } else {
        Ok(rows)
    }
}

/// Re-run frontier configurations on training and held-out inputs.
pub fn robustness(m: &RunManifest, frontier: &Path, self_test: bool) -> Result<Outcome> {
    let setup = Setup::new(m)?;
    let rows = frontier_file(frontier)?;
    let mut inputs = setup.inputs(m, !self_test)?;
    if self_test {
        inputs = inputs.self_test();
    }
    let sibling = frontier.parent().unwrap_or(Path::new(".")).join(SPACE_FILE);
    let (rule, targets) = if m.targets.is_none() && sibling.exists() {
        let rec = SpaceRecord::load(&sibling)?;
        if rec.kernel != setup.kernel.spec().name || rec.width != setup.width {
            return Err(Error::Config(format!("{} was written for {} {}", sibling.display(), rec.kernel, rec.width)));
        }
        (rec.rule_kind, rec.targets)
    } else {
        let rule = m.rule.or(rows.first().map(|r| r.rule_kind)).unwrap_or(RuleKind::Cip);
        (rule, setup.targets(rule, m, first(&inputs)?)?)
    };
    let configs = rows
        .iter()
        .map(|r| Configuration::new(rule, setup.width, targets.clone(), parse_genome(&r.genome)?))
        .collect::<Result<Vec<_>>>()?;
    let objective = m.objective.unwrap_or(Objective::Fpu);
    let rr = robustness_rows(&configs, setup.kernel, &inputs, setup.width, &setup.table, objective)?;
    let ids: Vec<usize> = rows.iter().map(|r| r.config_id).collect();
    report::write_csv(
        setup.path("robustness.csv"),
        &report::robustness_csv_rows(&rr, &ids),
        report::ROBUSTNESS_HEADER,
    )?;
    let (stats, warning) = match fit_rows(rr) {
        Ok(s) => (Some(s), None),
        Err(Error::Degenerate(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let fits = report::fit_csv_rows(stats.as_ref());
    report::write_csv(setup.path("robustness_fit.csv"), &fits, report::FIT_HEADER)?;
    let fmt = |r: Option<f64>| r.map_or("undefined".to_string(), |r| format!("{r:.4}"));
    let lines = fits.iter().map(|f| format!("{} r = {}", f.quantity, fmt(f.r))).collect();
    let warning = warning
        .or_else(|| fits.iter().find(|f| !f.defined).map(|f| format!("{} fit has no defined correlation", f.quantity)));
    Ok(Outcome { lines, warning })
}

/// Rebuild frontiers, hulls and savings from evaluation CSVs.
pub fn report_cmd(files: &[PathBuf], thresholds: &[f64], out: &Path) -> Result<Outcome> {
    if files.is_empty() {
        return Err(Error::Config("report needs at least one evaluation CSV".into()));
    }
    fs::create_dir_all(out)?;
    let mut all_rows = Vec::new();
    let mut all_savings = Vec::new();
    let mut lines = Vec::new();
    for f in files {
        let rows: Vec<EvalRow> = report::read_csv(f)?;
        let rule =
            rows.first().map(|r| r.rule_kind).ok_or_else(|| Error::Format(format!("{} has no rows", f.display())))?;
        let objs: Vec<(f64, f64)> = rows.iter().map(|r| (r.error_pct, r.fpu_norm)).collect();
        let mut front = pareto_front(&objs);
        front.sort_by(|&a, &b| objs[a].0.total_cmp(&objs[b].0).then(objs[a].1.total_cmp(&objs[b].1)).then(a.cmp(&b)));
        let front_objs: Vec<(f64, f64)> = front.iter().map(|&i| objs[i]).collect();
        let hull: Vec<usize> = lower_convex_hull(&front_objs).into_iter().map(|k| front[k]).collect();
        for &i in &front {
            all_rows.push(EvalRow { is_frontier: true, is_hull: hull.contains(&i), ..rows[i].clone() });
        }
        let pts: Vec<(f64, f64, f64)> =
            front.iter().map(|&i| (rows[i].error_pct, rows[i].fpu_norm, rows[i].mem_norm)).collect();
        let savings = report::savings_rows(rule, &quantize_frontier(&pts, thresholds));
        lines.push(format!("{}: {} rows, {} frontier, {} hull", f.display(), rows.len(), front.len(), hull.len()));
        for s in &savings {
            lines.push(format!(
                "  {} <= {}%: fpu {:.2}%  mem {:.2}%",
                rule, s.threshold_pct, s.fpu_saving_pct, s.mem_saving_pct
            ));
        }
        all_savings.extend(savings);
    }
    report::write_csv(out.join("report_frontier.csv"), &all_rows, report::EVAL_HEADER)?;
    report::write_csv(out.join("report_savings.csv"), &all_savings, report::SAVINGS_HEADER)?;
    Ok(lines.into())
}
