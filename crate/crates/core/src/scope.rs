//! Call-context tracking and FPI placement.
//!
//! A [`PlacementRule`] decides which [`Fpi`] governs a FLOP given the dynamic
//! call stack at the moment it executes:
//!
//! * WP: one implementation for the whole program.
//! * CIP: the implementation mapped to the function currently in progress
//!   (the top frame), or the default.
//! * FCS: the implementation mapped to the nearest frame on the stack that has
//!   a mapping, scanning from the top down, or the default.
//!
//! Per-layer CNN placement (PLC/PLI) lowers to FCS: layer instances run
//! nested inside their category scope, so mapping either the category or the
//! instance name is resolved by the same nearest-mapped-frame search.

use std::borrow::{Borrow, Cow};
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpcore::{Fpi, Width};

/// Name of the synthetic bottom frame present in every call stack.
pub const ROOT_SCOPE: &str = "root";

/// Target name used by whole-program configurations.
pub const WHOLE_PROGRAM: &str = "whole_program";

/// Function or layer name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScopeId(Cow<'static, str>);

impl ScopeId {
    pub const fn from_static(name: &'static str) -> Self {
        Self(Cow::Borrowed(name))
    }

    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Config("scope name must be non-empty".into()));
        }
        Ok(Self(Cow::Owned(name)))
    }

    pub fn root() -> Self {
        Self::from_static(ROOT_SCOPE)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for ScopeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ScopeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&'static str> for ScopeId {
    fn from(name: &'static str) -> Self {
        Self::from_static(name)
    }
}

/// Dynamic function-call context, bottom (root) to top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallStack {
    frames: Vec<ScopeId>,
}

impl Default for CallStack {
    fn default() -> Self {
        Self::new()
    }
}

impl CallStack {
    pub fn new() -> Self {
        Self { frames: vec![ScopeId::root()] }
    }

    pub fn enter(&mut self, scope: ScopeId) {
        self.frames.push(scope);
    }

    pub fn exit(&mut self) -> Result<ScopeId> {
        if self.frames.len() <= 1 {
            return Err(Error::ExitRoot);
        }
        Ok(self.frames.pop().expect("non-root frame"))
    }

    /// Functional form of [`CallStack::enter`].
    pub fn entered(&self, scope: impl Into<ScopeId>) -> Self {
        let mut next = self.clone();
        next.enter(scope.into());
        next
    }

    /// Functional form of [`CallStack::exit`].
    pub fn exited(&self) -> Result<Self> {
        let mut next = self.clone();
        next.exit()?;
        Ok(next)
    }

    pub fn top(&self) -> &ScopeId {
        self.frames.last().expect("call stack always holds the root frame")
    }

    pub fn frames(&self) -> &[ScopeId] {
        &self.frames
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn is_root(&self) -> bool {
        self.frames.len() == 1
    }
}

/// How a [`PlacementRule`] resolves the active implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    Wp,
    Cip,
    Fcs,
}

/// Tuning granularity of a [`Configuration`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Wp,
    Cip,
    Fcs,
    Plc,
    Pli,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [RuleKind::Wp, RuleKind::Cip, RuleKind::Fcs, RuleKind::Plc, RuleKind::Pli];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Wp => "wp",
            RuleKind::Cip => "cip",
            RuleKind::Fcs => "fcs",
            RuleKind::Plc => "plc",
            RuleKind::Pli => "pli",
        }
    }

    pub fn placement(self) -> PlacementKind {
        match self {
            RuleKind::Wp => PlacementKind::Wp,
            RuleKind::Cip => PlacementKind::Cip,
            RuleKind::Fcs | RuleKind::Plc | RuleKind::Pli => PlacementKind::Fcs,
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown rule kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementRule {
    kind: PlacementKind,
    width: Width,
    wp_fpi: Fpi,
    default_fpi: Fpi,
    mapping: HashMap<ScopeId, Fpi>,
}

impl PlacementRule {
    pub fn whole_program(fpi: Fpi) -> Self {
        Self {
            kind: PlacementKind::Wp,
            width: fpi.width(),
            wp_fpi: fpi,
            default_fpi: Fpi::identity(fpi.width()),
            mapping: HashMap::new(),
        }
    }

    /// CIP or FCS rule. Every mapped implementation must share the default's
    /// width.
    pub fn mapped(kind: PlacementKind, mapping: HashMap<ScopeId, Fpi>, default_fpi: Fpi) -> Result<Self> {
        if kind == PlacementKind::Wp {
            return Err(Error::Config("whole-program rules take a single FPI".into()));
        }
        let width = default_fpi.width();
        if let Some(bad) = mapping.values().find(|f| f.width() != width) {
            return Err(Error::WidthMismatch { expected: width, found: bad.width() });
        }
        Ok(Self { kind, width, wp_fpi: default_fpi, default_fpi, mapping })
    }

    /// Rule that leaves every operation at full precision.
    pub fn identity(width: Width) -> Self {
        Self::whole_program(Fpi::identity(width))
    }

    pub fn kind(&self) -> PlacementKind {
        self.kind
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn wp_fpi(&self) -> &Fpi {
        &self.wp_fpi
    }

    pub fn default_fpi(&self) -> &Fpi {
        &self.default_fpi
    }

    pub fn mapping(&self) -> &HashMap<ScopeId, Fpi> {
        &self.mapping
    }

    /// Reference resolution against a whole stack.
    pub fn resolve(&self, stack: &CallStack) -> &Fpi {
        resolve_fpi(stack, self)
    }

    /// Resolution for a frame pushed onto a stack whose resolution was
    /// `parent`. Equivalent to [`resolve_fpi`] on the extended stack; for the
    /// root frame pass the default implementation as `parent`.
    pub fn resolve_pushed<'a>(&'a self, parent: &'a Fpi, scope: &str) -> &'a Fpi {
        match self.kind {
            PlacementKind::Wp => &self.wp_fpi,
            PlacementKind::Cip => self.mapping.get(scope).unwrap_or(&self.default_fpi),
            PlacementKind::Fcs => self.mapping.get(scope).unwrap_or(parent),
        }
    }

    /// Resolution of a stack holding only the root frame.
    pub fn resolve_root(&self) -> &Fpi {
        self.resolve_pushed(&self.default_fpi, ROOT_SCOPE)
    }
}

/// Pick the implementation for a FLOP executing with `stack`.
pub fn resolve_fpi<'a>(stack: &CallStack, rule: &'a PlacementRule) -> &'a Fpi {
    match rule.kind {
        PlacementKind::Wp => &rule.wp_fpi,
        PlacementKind::Cip => rule.mapping.get(stack.top()).unwrap_or(&rule.default_fpi),
        PlacementKind::Fcs => {
            stack.frames().iter().rev().find_map(|f| rule.mapping.get(f)).unwrap_or(&rule.default_fpi)
        }
    }
}

/// Assignment of significand levels (the genome) to tunable scopes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub rule_kind: RuleKind,
    pub width: Width,
    pub targets: Vec<ScopeId>,
    pub genome: Vec<u32>,
}

impl Configuration {
    pub fn new(rule_kind: RuleKind, width: Width, targets: Vec<ScopeId>, genome: Vec<u32>) -> Result<Self> {
        let c = Self { rule_kind, width, targets, genome };
        c.validate()?;
        Ok(c)
    }

    pub fn whole_program(width: Width, bits: u32) -> Result<Self> {
        Self::new(RuleKind::Wp, width, vec![ScopeId::from_static(WHOLE_PROGRAM)], vec![bits])
    }

    /// Full precision on every target.
    pub fn identity(rule_kind: RuleKind, width: Width, targets: Vec<ScopeId>) -> Result<Self> {
        let genome = vec![width.full_mantissa(); targets.len()];
        Self::new(rule_kind, width, targets, genome)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("configuration has no targets".into()));
        }
        if self.genome.len() != self.targets.len() {
            return Err(Error::Config(format!(
                "genome has {} genes for {} targets",
                self.genome.len(),
                self.targets.len()
            )));
        }
        if self.rule_kind == RuleKind::Wp && self.targets.len() != 1 {
            return Err(Error::Config("whole-program configurations have exactly one target".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.targets {
            if t.as_str().is_empty() {
                return Err(Error::Config("empty target name".into()));
            }
            if !seen.insert(t) {
                return Err(Error::Config(format!("duplicate target `{t}`")));
            }
        }
        for &g in &self.genome {
            self.width.check_bits(g)?;
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.genome.iter().all(|&g| g == self.width.full_mantissa())
    }

    pub fn to_rule(&self) -> Result<PlacementRule> {
        configuration_to_rule(self, self.width)
    }

    /// Semicolon-joined genome, as written in CSV files.
    pub fn genome_string(&self) -> String {
        format_genome(&self.genome)
    }
}

pub fn format_genome(genome: &[u32]) -> String {
    genome.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

pub fn parse_genome(s: &str) -> Result<Vec<u32>> {
    s.split([';', ','])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().map_err(|_| Error::Config(format!("bad gene `{t}`"))))
        .collect()
}

/// Lower a configuration to a placement rule. Each gene becomes an [`Fpi`]
/// with the same budget for all four classes; unmapped scopes run at full
/// precision.
pub fn configuration_to_rule(c: &Configuration, width: Width) -> Result<PlacementRule> {
    if c.width != width {
        return Err(Error::WidthMismatch { expected: width, found: c.width });
    }
    c.validate()?;
    if c.rule_kind == RuleKind::Wp {
        return Ok(PlacementRule::whole_program(Fpi::uniform(1, width, c.genome[0])?));
    }
    let mut mapping = HashMap::with_capacity(c.targets.len());
    for (i, (target, &gene)) in c.targets.iter().zip(&c.genome).enumerate() {
        mapping.insert(target.clone(), Fpi::uniform(i as u16 + 1, width, gene)?);
    }
    PlacementRule::mapped(c.rule_kind.placement(), mapping, Fpi::identity(width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stack(names: &[&'static str]) -> CallStack {
        let mut s = CallStack::new();
        for n in names {
            s.enter(ScopeId::from_static(n));
        }
        s
    }

    fn fpi(id: u16, bits: u32) -> Fpi {
        Fpi::uniform(id, Width::Single, bits).unwrap()
    }

    #[test]
    fn enter_exit() {
        let root = CallStack::new();
        let s = root.entered("fft");
        assert_eq!(s.frames(), &[ScopeId::root(), ScopeId::from("fft")]);
        assert_eq!(s.exited().unwrap(), root);
        let s = root.entered("lpf").entered("fft");
        assert_eq!(s.frames().iter().map(ScopeId::as_str).collect::<Vec<_>>(), ["root", "lpf", "fft"]);
        assert!(matches!(root.exited(), Err(Error::ExitRoot)));
    }

    #[test]
    fn resolve_table() {
        let a = fpi(1, 8);
        let b = fpi(2, 12);
        let default = Fpi::identity(Width::Single);

        let wp = PlacementRule::whole_program(a);
        for s in [stack(&[]), stack(&["lpf", "fft"]), stack(&["pc"])] {
            assert_eq!(resolve_fpi(&s, &wp), &a);
        }

        let cip = PlacementRule::mapped(PlacementKind::Cip, HashMap::from([("fft".into(), a)]), default).unwrap();
        assert_eq!(resolve_fpi(&stack(&["lpf", "fft"]), &cip), &a);
        assert_eq!(resolve_fpi(&stack(&["lpf"]), &cip), &default);

        let fcs =
            PlacementRule::mapped(PlacementKind::Fcs, HashMap::from([("lpf".into(), a), ("pc".into(), b)]), default)
                .unwrap();
        assert_eq!(resolve_fpi(&stack(&["lpf", "fft"]), &fcs), &a);
        assert_eq!(resolve_fpi(&stack(&["pc", "fft"]), &fcs), &b);
        assert_eq!(resolve_fpi(&stack(&["detect"]), &fcs), &default);
        // recursion: topmost occurrence wins
        assert_eq!(resolve_fpi(&stack(&["lpf", "pc", "lpf", "fft"]), &fcs), &a);
        assert_eq!(resolve_fpi(&stack(&["lpf", "pc", "fft"]), &fcs), &b);
    }

    #[test]
    fn mapped_rule_rejects_mixed_widths() {
        let d = Fpi::uniform(1, Width::Double, 20).unwrap();
        let r =
            PlacementRule::mapped(PlacementKind::Cip, HashMap::from([("f".into(), d)]), Fpi::identity(Width::Single));
        assert!(matches!(r, Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn configuration_lowering() {
        let wp = Configuration::whole_program(Width::Single, 24).unwrap();
        let rule = wp.to_rule().unwrap();
        assert_eq!(rule.kind(), PlacementKind::Wp);
        assert!(rule.wp_fpi().is_identity());

        let cip = Configuration::new(RuleKind::Cip, Width::Single, vec!["f".into(), "g".into()], vec![8, 24]).unwrap();
        let rule = cip.to_rule().unwrap();
        assert_eq!(rule.mapping()["f"].bits(crate::fpcore::OpClass::Mul), 8);
        assert!(rule.mapping()["g"].is_identity());
        assert!(rule.default_fpi().is_identity());

        let layers = ["conv1", "avgpool1", "conv2", "avgpool2", "conv3", "fc", "tanh", "internal"];
        let genome = vec![10, 23, 14, 4, 19, 4, 20, 17];
        let pli = Configuration::new(
            RuleKind::Pli,
            Width::Single,
            layers.iter().map(|&s| ScopeId::from(s)).collect(),
            genome.clone(),
        )
        .unwrap();
        let rule = pli.to_rule().unwrap();
        assert_eq!(rule.kind(), PlacementKind::Fcs);
        for (l, g) in layers.iter().zip(genome) {
            assert_eq!(rule.mapping()[*l].bits(crate::fpcore::OpClass::Add), g);
        }
    }

    #[test]
    fn configuration_errors() {
        let t = || vec![ScopeId::from("f"), ScopeId::from("g")];
        assert!(Configuration::new(RuleKind::Cip, Width::Single, t(), vec![8]).is_err());
        assert!(Configuration::new(RuleKind::Cip, Width::Single, t(), vec![8, 25]).is_err());
        assert!(Configuration::new(RuleKind::Cip, Width::Single, t(), vec![0, 3]).is_err());
        assert!(Configuration::new(RuleKind::Wp, Width::Single, t(), vec![8, 8]).is_err());
        assert!(Configuration::new(RuleKind::Cip, Width::Single, vec![], vec![]).is_err());
        assert!(Configuration::new(RuleKind::Cip, Width::Double, t(), vec![53, 1]).is_ok());
        let c = Configuration::new(RuleKind::Cip, Width::Single, t(), vec![8, 8]).unwrap();
        assert!(configuration_to_rule(&c, Width::Double).is_err());
    }

    #[test]
    fn genome_strings() {
        assert_eq!(format_genome(&[8, 24]), "8;24");
        assert_eq!(parse_genome("8;24").unwrap(), vec![8, 24]);
        assert_eq!(parse_genome("8,24").unwrap(), vec![8, 24]);
        assert!(parse_genome("8;x").is_err());
    }

    const NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];

    fn stack_strategy() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0usize..NAMES.len(), 0..8)
    }

    fn mapping_strategy() -> impl Strategy<Value = Vec<Option<u32>>> {
        proptest::collection::vec(proptest::option::of(1u32..=24), NAMES.len())
    }

    fn build(kind: PlacementKind, genes: &[Option<u32>], default: Fpi) -> PlacementRule {
        let mapping = NAMES.iter().zip(genes).filter_map(|(n, g)| g.map(|g| (ScopeId::from(*n), fpi(1, g)))).collect();
        PlacementRule::mapped(kind, mapping, default).unwrap()
    }

    proptest! {
        #[test]
        fn incremental_matches_reference(frames in stack_strategy(), genes in mapping_strategy(), fcs in any::<bool>()) {
            let kind = if fcs { PlacementKind::Fcs } else { PlacementKind::Cip };
            let rule = build(kind, &genes, Fpi::identity(Width::Single));
            let mut s = CallStack::new();
            let mut resolved = *rule.resolve_root();
            prop_assert_eq!(&resolved, resolve_fpi(&s, &rule));
            for f in frames {
                s.enter(ScopeId::from(NAMES[f]));
                resolved = *rule.resolve_pushed(&resolved, NAMES[f]);
                prop_assert_eq!(&resolved, resolve_fpi(&s, &rule));
            }
        }

        #[test]
        fn uniform_mapping_agrees_with_wp(frames in stack_strategy(), bits in 1u32..=24) {
            let f = fpi(1, bits);
            let genes = vec![Some(bits); NAMES.len()];
            let wp = PlacementRule::whole_program(f);
            let mut s = CallStack::new();
            for i in frames {
                s.enter(ScopeId::from(NAMES[i]));
            }
            for kind in [PlacementKind::Cip, PlacementKind::Fcs] {
                let rule = build(kind, &genes, f);
                prop_assert_eq!(resolve_fpi(&s, &rule), resolve_fpi(&s, &wp));
            }
        }

        #[test]
        fn cip_and_fcs_agree_when_top_is_mapped(frames in stack_strategy(), genes in mapping_strategy()) {
            let cip = build(PlacementKind::Cip, &genes, Fpi::identity(Width::Single));
            let fcs = build(PlacementKind::Fcs, &genes, Fpi::identity(Width::Single));
            let mut s = CallStack::new();
            for i in frames {
                s.enter(ScopeId::from(NAMES[i]));
            }
            if cip.mapping().contains_key(s.top()) {
                prop_assert_eq!(resolve_fpi(&s, &cip), resolve_fpi(&s, &fcs));
            }
            prop_assert_eq!(resolve_fpi(&s, &fcs), resolve_fpi(&s, &fcs));
        }
    }
}
