//! FPU and memory energy estimation from instrumented execution counters.
//!
//! FPU energy for one FLOP is its full-precision energy-per-instruction scaled
//! by the fraction of significand bits in use across the two operands and the
//! result. Memory energy charges every bit of floating-point data moved at a
//! flat per-byte cost; reduced-precision values move `1 + exponent + (k - 1)`
//! bits.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpcore::{manipulated_bits, FpValue, OpClass, Width};
use crate::scope::{ScopeId, ROOT_SCOPE};

/// Number of FLOP-heaviest scopes tracked for coverage and default targets.
pub const TOP_N: usize = 10;

/// Energy per instruction at full precision, in picojoules.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiTable {
    epi: [[Option<f64>; 2]; 4],
    mem_pj_per_byte: f64,
}

impl Default for EpiTable {
    fn default() -> Self {
        // Sub shares the adder datapath. Mul values sit between add and div
        // and are placeholders; override them from a config file.
        let mut epi = [[None; 2]; 4];
        epi[OpClass::Add.index()] = [Some(350.0), Some(400.0)];
        epi[OpClass::Sub.index()] = [Some(350.0), Some(400.0)];
        epi[OpClass::Mul.index()] = [Some(390.0), Some(560.0)];
        epi[OpClass::Div.index()] = [Some(420.0), Some(680.0)];
        Self { epi, mem_pj_per_byte: 1500.0 }
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EpiFile {
    add_single: Option<f64>,
    add_double: Option<f64>,
    sub_single: Option<f64>,
    sub_double: Option<f64>,
    mul_single: Option<f64>,
    mul_double: Option<f64>,
    div_single: Option<f64>,
    div_double: Option<f64>,
    mem_pj_per_byte: Option<f64>,
}

impl EpiTable {
    /// Table with no per-instruction entries.
    pub fn empty(mem_pj_per_byte: f64) -> Result<Self> {
        check_positive("mem_pj_per_byte", mem_pj_per_byte)?;
        Ok(Self { epi: [[None; 2]; 4], mem_pj_per_byte })
    }

    pub fn with_epi(mut self, op: OpClass, width: Width, pj: f64) -> Result<Self> {
        check_positive(&format!("{op}_{width}"), pj)?;
        self.epi[op.index()][width.index()] = Some(pj);
        Ok(self)
    }

    pub fn epi(&self, op: OpClass, width: Width) -> Result<f64> {
        self.epi[op.index()][width.index()].ok_or(Error::MissingEpi { op, width })
    }

    pub fn mem_pj_per_byte(&self) -> f64 {
        self.mem_pj_per_byte
    }

    /// Parse a TOML table. Absent keys keep their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: EpiFile = toml::from_str(s)?;
        let mut table = Self::default();
        let entries = [
            (OpClass::Add, Width::Single, file.add_single),
            (OpClass::Add, Width::Double, file.add_double),
            (OpClass::Sub, Width::Single, file.sub_single),
            (OpClass::Sub, Width::Double, file.sub_double),
            (OpClass::Mul, Width::Single, file.mul_single),
            (OpClass::Mul, Width::Double, file.mul_double),
            (OpClass::Div, Width::Single, file.div_single),
            (OpClass::Div, Width::Double, file.div_double),
        ];
        for (op, width, value) in entries {
            if let Some(pj) = value {
                table = table.with_epi(op, width, pj)?;
            }
        }
        if let Some(pj) = file.mem_pj_per_byte {
            check_positive("mem_pj_per_byte", pj)?;
            table.mem_pj_per_byte = pj;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("EPI entry `{key}` must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemDirection {
    Load,
    Store,
}

/// Tallies for one scope.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ScopeCounters {
    flops: [[u64; 2]; 4],
    bit_sums: [[u64; 2]; 4],
    mem_bits_loaded: u64,
    mem_bits_stored: u64,
}

impl ScopeCounters {
    pub fn flop_count(&self, op: OpClass, width: Width) -> u64 {
        self.flops[op.index()][width.index()]
    }

    /// Sum of manipulated bits over both operands and the result.
    pub fn bit_sum(&self, op: OpClass, width: Width) -> u64 {
        self.bit_sums[op.index()][width.index()]
    }

    pub fn flops_of_width(&self, width: Width) -> u64 {
        OpClass::ALL.iter().map(|&op| self.flop_count(op, width)).sum()
    }

    pub fn total_flops(&self) -> u64 {
        Width::ALL.iter().map(|&w| self.flops_of_width(w)).sum()
    }

    pub fn mem_bits_loaded(&self) -> u64 {
        self.mem_bits_loaded
    }

    pub fn mem_bits_stored(&self) -> u64 {
        self.mem_bits_stored
    }

    pub fn mem_bits_moved(&self) -> u64 {
        self.mem_bits_loaded + self.mem_bits_stored
    }

    pub fn merge(&mut self, other: &ScopeCounters) {
        for op in 0..4 {
            for w in 0..2 {
                self.flops[op][w] += other.flops[op][w];
                self.bit_sums[op][w] += other.bit_sums[op][w];
            }
        }
        self.mem_bits_loaded += other.mem_bits_loaded;
        self.mem_bits_stored += other.mem_bits_stored;
    }

    #[inline]
    pub(crate) fn add_flop(&mut self, op: OpClass, width: Width, bits: u32) {
        self.flops[op.index()][width.index()] += 1;
        self.bit_sums[op.index()][width.index()] += u64::from(bits);
    }

    pub(crate) fn add_mem(&mut self, bits: u64, dir: MemDirection) {
        match dir {
            MemDirection::Load => self.mem_bits_loaded += bits,
            MemDirection::Store => self.mem_bits_stored += bits,
        }
    }
}

/// Bits moved for one value held with `k` significand bits.
pub fn stored_value_bits(width: Width, k: u32) -> u64 {
    u64::from(1 + width.exponent_bits() + (k - 1))
}

/// Per-scope FLOP, manipulated-bit and memory tallies for one run.
#[derive(Debug, Default, Clone)]
pub struct ExecutionCounters {
    scopes: Vec<(ScopeId, ScopeCounters)>,
    index: HashMap<ScopeId, usize>,
}

impl ExecutionCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn slot(&mut self, scope: &ScopeId) -> usize {
        if let Some(&i) = self.index.get(scope.as_str()) {
            return i;
        }
        let i = self.scopes.len();
        self.scopes.push((scope.clone(), ScopeCounters::default()));
        self.index.insert(scope.clone(), i);
        i
    }

    #[inline]
    pub(crate) fn at(&mut self, slot: usize) -> &mut ScopeCounters {
        &mut self.scopes[slot].1
    }

    /// Count one FLOP whose operands `a`, `b` and result `r` have already
    /// been chopped by the governing implementation.
    pub fn record_flop(
        &mut self,
        scope: &ScopeId,
        op: OpClass,
        width: Width,
        a: FpValue,
        b: FpValue,
        r: FpValue,
    ) -> Result<()> {
        for v in [a, b, r] {
            if v.width() != width {
                return Err(Error::WidthMismatch { expected: width, found: v.width() });
            }
        }
        let bits = manipulated_bits(a) + manipulated_bits(b) + manipulated_bits(r);
        let slot = self.slot(scope);
        self.at(slot).add_flop(op, width, bits);
        Ok(())
    }

    pub fn record_mem(
        &mut self,
        scope: &ScopeId,
        width: Width,
        k: u32,
        n_values: u64,
        dir: MemDirection,
    ) -> Result<()> {
        width.check_bits(k)?;
        let slot = self.slot(scope);
        self.at(slot).add_mem(n_values * stored_value_bits(width, k), dir);
        Ok(())
    }

    pub fn get(&self, scope: &str) -> Option<&ScopeCounters> {
        self.index.get(scope).map(|&i| &self.scopes[i].1)
    }

    /// Scopes in first-touched order.
    pub fn iter(&self) -> impl Iterator<Item = (&ScopeId, &ScopeCounters)> {
        self.scopes.iter().map(|(s, c)| (s, c))
    }

    pub fn is_empty(&self) -> bool {
        self.total().total_flops() == 0 && self.total().mem_bits_moved() == 0
    }

    pub fn total(&self) -> ScopeCounters {
        let mut t = ScopeCounters::default();
        for (_, c) in &self.scopes {
            t.merge(c);
        }
        t
    }

    pub fn merge(&mut self, other: &ExecutionCounters) {
        for (scope, c) in other.iter() {
            let slot = self.slot(scope);
            self.at(slot).merge(c);
        }
    }

    /// Order-independent view, for comparisons.
    pub fn to_map(&self) -> BTreeMap<ScopeId, ScopeCounters> {
        self.iter().map(|(s, c)| (s.clone(), *c)).collect()
    }

    /// Up to `n` scopes with the most FLOPs (of `width`, if given), heaviest
    /// first. The root frame and FLOP-free scopes are excluded; ties break
    /// by name.
    pub fn top_scopes(&self, n: usize, width: Option<Width>) -> Vec<ScopeId> {
        let count = |c: &ScopeCounters| width.map_or_else(|| c.total_flops(), |w| c.flops_of_width(w));
        let mut rows: Vec<_> = self
            .iter()
            .filter(|(s, c)| s.as_str() != ROOT_SCOPE && count(c) > 0)
            .map(|(s, c)| (count(c), s.clone()))
            .collect();
        rows.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        rows.into_iter().take(n).map(|(_, s)| s).collect()
    }
}

fn cell_energy(c: &ScopeCounters, table: &EpiTable) -> Result<f64> {
    let mut pj = 0.0;
    for op in OpClass::ALL {
        for width in Width::ALL {
            let bits = c.bit_sum(op, width);
            if c.flop_count(op, width) == 0 && bits == 0 {
                continue;
            }
            let epi = table.epi(op, width)?;
            pj += epi * bits as f64 / f64::from(3 * width.full_mantissa());
        }
    }
    Ok(pj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpuEnergy {
    pub total_pj: f64,
    pub per_scope_pj: BTreeMap<ScopeId, f64>,
}

pub fn fpu_energy(counters: &ExecutionCounters, table: &EpiTable) -> Result<FpuEnergy> {
    let mut per_scope_pj = BTreeMap::new();
    let mut total_pj = 0.0;
    for (scope, c) in counters.iter() {
        let pj = cell_energy(c, table)?;
        total_pj += pj;
        *per_scope_pj.entry(scope.clone()).or_insert(0.0) += pj;
    }
    Ok(FpuEnergy { total_pj, per_scope_pj })
}

pub fn mem_energy(counters: &ExecutionCounters, table: &EpiTable) -> f64 {
    counters.total().mem_bits_moved() as f64 * table.mem_pj_per_byte() / 8.0
}

/// Share of all FLOPs executed inside the `n` heaviest scopes. An empty run
/// reports full coverage.
pub fn coverage(counters: &ExecutionCounters, n: usize) -> f64 {
    let total = counters.total().total_flops();
    if total == 0 {
        return 1.0;
    }
    let top = counters.top_scopes(n, None);
    let covered: u64 = top.iter().filter_map(|s| counters.get(s.as_str())).map(ScopeCounters::total_flops).sum();
    covered as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub fpu_pj: f64,
    pub fpu_per_scope_pj: BTreeMap<ScopeId, f64>,
    pub mem_pj: f64,
    pub flops_single: u64,
    pub flops_double: u64,
    pub top10_coverage: f64,
    pub normalized_fpu: Option<f64>,
    pub normalized_mem: Option<f64>,
}

impl EnergyReport {
    pub fn new(counters: &ExecutionCounters, table: &EpiTable) -> Result<Self> {
        let fpu = fpu_energy(counters, table)?;
        let total = counters.total();
        Ok(Self {
            fpu_pj: fpu.total_pj,
            fpu_per_scope_pj: fpu.per_scope_pj,
            mem_pj: mem_energy(counters, table),
            flops_single: total.flops_of_width(Width::Single),
            flops_double: total.flops_of_width(Width::Double),
            top10_coverage: coverage(counters, TOP_N),
            normalized_fpu: None,
            normalized_mem: None,
        })
    }

    /// Fill in the normalized figures as percentages of `baseline`.
    pub fn normalized_against(mut self, baseline: &EnergyReport) -> Self {
        self.normalized_fpu = Some(percent_of(self.fpu_pj, baseline.fpu_pj));
        self.normalized_mem = Some(percent_of(self.mem_pj, baseline.mem_pj));
        self
    }
}

/// `100 * value / baseline`; a zero baseline with a zero value is 100%.
pub fn percent_of(value: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if value == 0.0 {
            100.0
        } else {
            f64::INFINITY
        }
    } else {
        // ratio first, so equal inputs give exactly 100
        value / baseline * 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub scope: ScopeId,
    pub counters: ScopeCounters,
}

impl ProfileRow {
    pub fn total(&self) -> u64 {
        self.counters.total_flops()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    /// Sorted by descending FLOP count, then name.
    pub rows: Vec<ProfileRow>,
    pub single_ratio: f64,
    pub double_ratio: f64,
    pub top10: Vec<ScopeId>,
    pub top10_coverage: f64,
}

pub fn profile_report(counters: &ExecutionCounters) -> ProfileReport {
    let mut rows: Vec<ProfileRow> =
        counters.iter().map(|(scope, c)| ProfileRow { scope: scope.clone(), counters: *c }).collect();
    rows.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.scope.cmp(&b.scope)));
    let total = counters.total();
    let all = total.total_flops();
    let (single_ratio, double_ratio) = if all == 0 {
        (0.0, 0.0)
    } else {
        (
            total.flops_of_width(Width::Single) as f64 / all as f64,
            total.flops_of_width(Width::Double) as f64 / all as f64,
        )
    };
    ProfileReport {
        rows,
        single_ratio,
        double_ratio,
        top10: counters.top_scopes(TOP_N, None),
        top10_coverage: coverage(counters, TOP_N),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcore::{truncate_mantissa, Real};
    use proptest::prelude::*;

    fn scope(s: &'static str) -> ScopeId {
        ScopeId::from_static(s)
    }

    /// Value whose explicit field is all ones: every significand bit in use.
    fn dense(width: Width) -> FpValue {
        let explicit = width.explicit_bits();
        let one = match width {
            Width::Single => FpValue::from_f32(1.0).bits(),
            Width::Double => FpValue::from_f64(1.0).bits(),
        };
        FpValue::from_bits(one | ((1u64 << explicit) - 1), width)
    }

    fn one_flop(op: OpClass, width: Width, v: FpValue) -> ExecutionCounters {
        let mut c = ExecutionCounters::new();
        c.record_flop(&scope("f"), op, width, v, v, v).unwrap();
        c
    }

    #[test]
    fn record_flop_bit_sums() {
        let c = one_flop(OpClass::Add, Width::Double, FpValue::from_f64(1.0));
        let s = c.get("f").unwrap();
        assert_eq!(s.flop_count(OpClass::Add, Width::Double), 1);
        assert_eq!(s.bit_sum(OpClass::Add, Width::Double), 3);

        let mut c = ExecutionCounters::new();
        let x = FpValue::from_f32(1.5);
        c.record_flop(&scope("f"), OpClass::Add, Width::Single, x, x, FpValue::from_f32(3.0)).unwrap();
        assert_eq!(c.get("f").unwrap().bit_sum(OpClass::Add, Width::Single), 6);

        let empty = ExecutionCounters::new();
        assert!(empty.is_empty());
        assert_eq!(empty.total(), ScopeCounters::default());
    }

    #[test]
    fn record_mem_bits() {
        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Single, 24, 1, MemDirection::Load).unwrap();
        assert_eq!(c.get("f").unwrap().mem_bits_moved(), 32);
        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Double, 53, 1, MemDirection::Store).unwrap();
        assert_eq!(c.get("f").unwrap().mem_bits_moved(), 64);
        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Single, 12, 1, MemDirection::Load).unwrap();
        assert_eq!(c.get("f").unwrap().mem_bits_moved(), 20);
        assert!(c.record_mem(&scope("f"), Width::Single, 25, 1, MemDirection::Load).is_err());
    }

    #[test]
    fn energy_anchors() {
        let t = EpiTable::default();
        let pj = |op, w| fpu_energy(&one_flop(op, w, dense(w)), &t).unwrap().total_pj;
        assert_eq!(pj(OpClass::Add, Width::Double), 400.0);
        assert_eq!(pj(OpClass::Add, Width::Single), 350.0);
        assert_eq!(pj(OpClass::Div, Width::Double), 680.0);
        assert_eq!(pj(OpClass::Div, Width::Single), 420.0);

        let small = fpu_energy(&one_flop(OpClass::Add, Width::Double, FpValue::from_f64(1.0)), &t).unwrap();
        assert!((small.total_pj - 400.0 * 3.0 / 159.0).abs() < 1e-12);
        assert!((small.total_pj - 7.547).abs() < 1e-3);

        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Double, 53, 1, MemDirection::Store).unwrap();
        assert_eq!(mem_energy(&c, &t), 12_000.0);
        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Single, 24, 1, MemDirection::Store).unwrap();
        assert_eq!(mem_energy(&c, &t), 6_000.0);
        let mut c = ExecutionCounters::new();
        c.record_mem(&scope("f"), Width::Single, 12, 1, MemDirection::Load).unwrap();
        assert_eq!(mem_energy(&c, &t), 3_750.0);
    }

    #[test]
    fn missing_epi_is_config_error() {
        let t = EpiTable::empty(1500.0).unwrap().with_epi(OpClass::Add, Width::Single, 350.0).unwrap();
        assert!(fpu_energy(&one_flop(OpClass::Add, Width::Single, dense(Width::Single)), &t).is_ok());
        let err = fpu_energy(&one_flop(OpClass::Mul, Width::Single, dense(Width::Single)), &t).unwrap_err();
        assert!(matches!(err, Error::MissingEpi { op: OpClass::Mul, width: Width::Single }));
        assert!(EpiTable::empty(0.0).is_err());
        assert!(EpiTable::default().with_epi(OpClass::Add, Width::Single, -1.0).is_err());
    }

    #[test]
    fn epi_table_from_toml() {
        let t = EpiTable::from_toml_str("mul_single = 395.5\nmem_pj_per_byte = 1000\n").unwrap();
        assert_eq!(t.epi(OpClass::Mul, Width::Single).unwrap(), 395.5);
        assert_eq!(t.epi(OpClass::Add, Width::Double).unwrap(), 400.0);
        assert_eq!(t.mem_pj_per_byte(), 1000.0);
        assert!(EpiTable::from_toml_str("bogus = 1").is_err());
        assert!(EpiTable::from_toml_str("add_single = 0").is_err());
        let defaults = EpiTable::default();
        assert_eq!(
            defaults.epi(OpClass::Sub, Width::Single).unwrap(),
            defaults.epi(OpClass::Add, Width::Single).unwrap()
        );
    }

    #[test]
    fn profile_of_hand_counted_kernel() {
        let mut c = ExecutionCounters::new();
        let f = scope("f");
        let mut acc = 0.0f32;
        for i in 0..100 {
            let x = i as f32 * 0.25;
            let r = acc + x;
            c.record_flop(&f, OpClass::Add, Width::Single, acc.value(), x.value(), r.value()).unwrap();
            acc = r;
        }
        let g = scope("g");
        c.record_flop(&g, OpClass::Mul, Width::Double, 2.0f64.value(), 3.0f64.value(), 6.0f64.value()).unwrap();
        let p = profile_report(&c);
        assert_eq!(p.rows[0].scope, f);
        assert_eq!(p.rows[0].counters.flop_count(OpClass::Add, Width::Single), 100);
        assert_eq!(p.rows[0].total(), 100);
        assert_eq!(p.rows[1].scope, g);
        assert!((p.single_ratio - 100.0 / 101.0).abs() < 1e-15);
        assert_eq!(p.top10_coverage, 1.0);

        let empty = profile_report(&ExecutionCounters::new());
        assert!(empty.rows.is_empty());
        assert_eq!(empty.top10_coverage, 1.0);
    }

    #[test]
    fn coverage_with_many_scopes() {
        let names = ["s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11"];
        let mut c = ExecutionCounters::new();
        let v = FpValue::from_f32(1.0);
        for (i, n) in names.iter().enumerate() {
            for _ in 0..(20 - i) {
                c.record_flop(&scope(n), OpClass::Add, Width::Single, v, v, v).unwrap();
            }
        }
        let total: u64 = (0..12).map(|i| 20 - i).sum();
        let top: u64 = (0..10).map(|i| 20 - i).sum();
        assert_eq!(coverage(&c, TOP_N), top as f64 / total as f64);
        assert_eq!(c.top_scopes(3, None), vec![scope("s0"), scope("s1"), scope("s2")]);
    }

    #[test]
    fn normalization() {
        let t = EpiTable::default();
        let c = one_flop(OpClass::Add, Width::Double, dense(Width::Double));
        let base = EnergyReport::new(&c, &t).unwrap();
        let same = EnergyReport::new(&c, &t).unwrap().normalized_against(&base);
        assert_eq!(same.normalized_fpu, Some(100.0));
        let small = one_flop(OpClass::Add, Width::Double, FpValue::from_f64(1.0));
        let r = EnergyReport::new(&small, &t).unwrap().normalized_against(&base);
        assert!(r.normalized_fpu.unwrap() > 0.0 && r.normalized_fpu.unwrap() < 100.0);
        assert_eq!(percent_of(0.0, 0.0), 100.0);
    }

    fn counters_strategy() -> impl Strategy<Value = ExecutionCounters> {
        proptest::collection::vec((0usize..3, 0usize..4, any::<bool>(), any::<u64>(), 1u32..=53), 0..40).prop_map(
            |ops| {
                let mut c = ExecutionCounters::new();
                for (s, op, dbl, bits, k) in ops {
                    let name = scope(["a", "b", "c"][s]);
                    let width = if dbl { Width::Double } else { Width::Single };
                    let k = k.min(width.full_mantissa());
                    let v = truncate_mantissa(FpValue::from_bits(bits, width), k, width).unwrap();
                    c.record_flop(&name, OpClass::ALL[op], width, v, v, v).unwrap();
                    c.record_mem(&name, width, k, 2, MemDirection::Load).unwrap();
                }
                c
            },
        )
    }

    proptest! {
        #[test]
        fn energy_is_linear(a in counters_strategy(), b in counters_strategy()) {
            let t = EpiTable::default();
            let mut ab = a.clone();
            ab.merge(&b);
            let sum = fpu_energy(&a, &t).unwrap().total_pj + fpu_energy(&b, &t).unwrap().total_pj;
            let merged = fpu_energy(&ab, &t).unwrap().total_pj;
            prop_assert!((merged - sum).abs() <= 1e-9 * sum.max(1.0));
            prop_assert_eq!(mem_energy(&ab, &t), mem_energy(&a, &t) + mem_energy(&b, &t));
        }

        #[test]
        fn merge_is_commutative_and_bounded(a in counters_strategy(), b in counters_strategy(), c in counters_strategy()) {
            let mut ab = a.clone();
            ab.merge(&b);
            let mut ba = b.clone();
            ba.merge(&a);
            prop_assert_eq!(ab.to_map(), ba.to_map());
            let mut ab_c = ab.clone();
            ab_c.merge(&c);
            let mut bc = b.clone();
            bc.merge(&c);
            let mut a_bc = a.clone();
            a_bc.merge(&bc);
            prop_assert_eq!(ab_c.to_map(), a_bc.to_map());
            for (_, s) in ab.iter() {
                for op in OpClass::ALL {
                    for w in Width::ALL {
                        prop_assert!(s.bit_sum(op, w) <= 3 * u64::from(w.full_mantissa()) * s.flop_count(op, w));
                    }
                }
            }
            let cov = coverage(&ab, TOP_N);
            prop_assert!((0.0..=1.0).contains(&cov));
        }
    }
}
