//! Arithmetic contexts that kernels are written against.
//!
//! Kernels call [`FpContext::add`] and friends instead of the native
//! operators and bracket their functions with [`FpContext::scoped`]. Running a
//! kernel with [`Native`] is plain IEEE-754 arithmetic; running it with
//! [`Instrumented`] routes every FLOP of the optimization-target width through
//! the implementation the placement rule resolves for the current call stack,
//! and tallies counters (and, optionally, a hex trace) along the way.

use std::fmt;

use crate::energy::{stored_value_bits, ExecutionCounters, MemDirection};
use crate::error::{Error, Result};
use crate::fpcore::{hex_bits, Fpi, OpClass, Real, Width};
use crate::scope::{CallStack, PlacementRule, ScopeId};

pub trait FpContext {
    fn enter(&mut self, scope: &'static str);
    fn exit(&mut self);
    fn flop<F: Real>(&mut self, op: OpClass, a: F, b: F) -> F;
    /// Mark `n_values` floating-point values moved between memory and
    /// registers.
    fn mem<F: Real>(&mut self, n_values: usize, dir: MemDirection);

    #[inline]
    fn add<F: Real>(&mut self, a: F, b: F) -> F {
        self.flop(OpClass::Add, a, b)
    }

    #[inline]
    fn sub<F: Real>(&mut self, a: F, b: F) -> F {
        self.flop(OpClass::Sub, a, b)
    }

    #[inline]
    fn mul<F: Real>(&mut self, a: F, b: F) -> F {
        self.flop(OpClass::Mul, a, b)
    }

    #[inline]
    fn div<F: Real>(&mut self, a: F, b: F) -> F {
        self.flop(OpClass::Div, a, b)
    }

    fn load<F: Real>(&mut self, n_values: usize) {
        self.mem::<F>(n_values, MemDirection::Load);
    }

    fn store<F: Real>(&mut self, n_values: usize) {
        self.mem::<F>(n_values, MemDirection::Store);
    }

    fn scoped<R>(&mut self, scope: &'static str, body: impl FnOnce(&mut Self) -> R) -> R
    where
        Self: Sized,
    {
        self.enter(scope);
        let r = body(self);
        self.exit();
        r
    }
}

/// Uninstrumented execution.
#[derive(Debug, Default, Clone, Copy)]
pub struct Native;

impl FpContext for Native {
    fn enter(&mut self, _scope: &'static str) {}

    fn exit(&mut self) {}

    #[inline]
    fn flop<F: Real>(&mut self, op: OpClass, a: F, b: F) -> F {
        F::native(op, a, b)
    }

    fn mem<F: Real>(&mut self, _n_values: usize, _dir: MemDirection) {}
}

/// One traced FLOP: the operands and result actually used, as raw bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub scope: ScopeId,
    pub op: OpClass,
    pub width: Width,
    pub a: u64,
    pub b: u64,
    pub r: u64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.scope,
            self.op,
            self.width,
            hex_bits(self.a, self.width),
            hex_bits(self.b, self.width),
            hex_bits(self.r, self.width)
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    fpi: Fpi,
    slot: usize,
}

/// Instrumented execution under a placement rule.
#[derive(Debug)]
pub struct Instrumented<'r> {
    rule: &'r PlacementRule,
    target: Width,
    stack: CallStack,
    frames: Vec<Frame>,
    counters: ExecutionCounters,
    trace: Option<Vec<TraceRecord>>,
    fault: Option<Error>,
}

/// Everything an instrumented run produced besides the kernel output.
#[derive(Debug, Clone)]
pub struct Execution {
    pub counters: ExecutionCounters,
    pub trace: Option<Vec<TraceRecord>>,
}

impl<'r> Instrumented<'r> {
    /// FLOPs of the rule's width are tuned; other widths run natively but are
    /// still counted.
    pub fn new(rule: &'r PlacementRule) -> Self {
        let mut counters = ExecutionCounters::new();
        let slot = counters.slot(&ScopeId::root());
        Self {
            rule,
            target: rule.width(),
            stack: CallStack::new(),
            frames: vec![Frame { fpi: *rule.resolve_root(), slot }],
            counters,
            trace: None,
            fault: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn stack(&self) -> &CallStack {
        &self.stack
    }

    /// Implementation governing FLOPs issued right now.
    pub fn current_fpi(&self) -> &Fpi {
        &self.top().fpi
    }

    pub fn counters(&self) -> &ExecutionCounters {
        &self.counters
    }

    /// Close the run. Fails if scopes were left open or exited past the root.
    pub fn finish(self) -> Result<Execution> {
        if let Some(e) = self.fault {
            return Err(e);
        }
        if !self.stack.is_root() {
            return Err(Error::UnbalancedStack(self.stack.depth() - 1));
        }
        Ok(Execution { counters: self.counters, trace: self.trace })
    }

    #[inline]
    fn top(&self) -> &Frame {
        self.frames.last().expect("root frame")
    }
}

impl FpContext for Instrumented<'_> {
    fn enter(&mut self, scope: &'static str) {
        let id = ScopeId::from_static(scope);
        let parent = self.top().fpi;
        let fpi = *self.rule.resolve_pushed(&parent, scope);
        let slot = self.counters.slot(&id);
        self.stack.enter(id);
        self.frames.push(Frame { fpi, slot });
    }

    fn exit(&mut self) {
        match self.stack.exit() {
            Ok(_) => {
                self.frames.pop();
            }
            Err(e) => {
                self.fault.get_or_insert(e);
            }
        }
    }

    #[inline]
    fn flop<F: Real>(&mut self, op: OpClass, a: F, b: F) -> F {
        let frame = *self.top();
        let (a, b, r) = if F::WIDTH == self.target {
            let k = frame.fpi.bits(op);
            let a = a.truncated(k);
            let b = b.truncated(k);
            (a, b, F::native(op, a, b).truncated(k))
        } else {
            (a, b, F::native(op, a, b))
        };
        let bits = a.manipulated_bits() + b.manipulated_bits() + r.manipulated_bits();
        self.counters.at(frame.slot).add_flop(op, F::WIDTH, bits);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                scope: self.stack.top().clone(),
                op,
                width: F::WIDTH,
                a: a.to_raw(),
                b: b.to_raw(),
                r: r.to_raw(),
            });
        }
        r
    }

    fn mem<F: Real>(&mut self, n_values: usize, dir: MemDirection) {
        let frame = *self.top();
        let k = if F::WIDTH == self.target { frame.fpi.storage_bits() } else { F::WIDTH.full_mantissa() };
        let bits = n_values as u64 * stored_value_bits(F::WIDTH, k);
        self.counters.at(frame.slot).add_mem(bits, dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scope::{Configuration, RuleKind};

    #[test]
    fn identity_matches_native() {
        let rule = PlacementRule::identity(Width::Single);
        let mut ctx = Instrumented::new(&rule);
        let mut native = Native;
        let xs = [0.1f32, 1.7, -3.25, 1e-3];
        let run = |c: &mut dyn FnMut(f32, f32) -> f32| xs.iter().fold(0.0f32, |acc, &x| c(acc, x));
        let a = run(&mut |acc, x| {
            let p = ctx.mul(x, x);
            ctx.add(acc, p)
        });
        let b = run(&mut |acc, x| {
            let p = native.mul(x, x);
            native.add(acc, p)
        });
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn truncates_only_target_width() {
        let rule = Configuration::whole_program(Width::Single, 4).unwrap().to_rule().unwrap();
        let mut ctx = Instrumented::new(&rule);
        let r32 = ctx.mul(0.1f32, 0.1f32);
        assert_eq!(r32.to_bits(), 0x3c10_0000);
        let r64 = ctx.mul(0.1f64, 0.1f64);
        assert_eq!(r64, 0.1f64 * 0.1f64);
        let exec = ctx.finish().unwrap();
        let root = exec.counters.get("root").unwrap();
        assert_eq!(root.flop_count(OpClass::Mul, Width::Single), 1);
        assert_eq!(root.flop_count(OpClass::Mul, Width::Double), 1);
    }

    #[test]
    fn scope_attribution_and_trace() {
        let c = Configuration::new(RuleKind::Fcs, Width::Single, vec!["lpf".into(), "pc".into()], vec![2, 24]).unwrap();
        let rule = c.to_rule().unwrap();
        let mut ctx = Instrumented::new(&rule).with_trace();
        ctx.scoped("lpf", |ctx| ctx.scoped("fft", |ctx| ctx.add(1.75f32, 1.0)));
        ctx.scoped("pc", |ctx| ctx.scoped("fft", |ctx| ctx.add(1.75f32, 1.0)));
        let exec = ctx.finish().unwrap();
        let trace = exec.trace.unwrap();
        // 1.75 -> 1.5 at two bits; 1.5 + 1 = 2.5 -> 2.0
        assert_eq!(trace[0].to_string(), "fft,add,single,3fc00000,3f800000,40000000");
        assert_eq!(trace[1].to_string(), "fft,add,single,3fe00000,3f800000,40300000");
        assert_eq!(exec.counters.get("fft").unwrap().flop_count(OpClass::Add, Width::Single), 2);
    }

    #[test]
    fn memory_bits_follow_resolved_fpi() {
        let rule = Configuration::whole_program(Width::Single, 12).unwrap().to_rule().unwrap();
        let mut ctx = Instrumented::new(&rule);
        ctx.scoped("f", |ctx| {
            ctx.load::<f32>(2);
            ctx.store::<f64>(1);
        });
        let exec = ctx.finish().unwrap();
        let f = exec.counters.get("f").unwrap();
        assert_eq!(f.mem_bits_loaded(), 40);
        assert_eq!(f.mem_bits_stored(), 64);
    }

    #[test]
    fn unbalanced_runs_fail() {
        let rule = PlacementRule::identity(Width::Single);
        let mut ctx = Instrumented::new(&rule);
        ctx.enter("f");
        assert!(matches!(ctx.finish(), Err(Error::UnbalancedStack(1))));
        let mut ctx = Instrumented::new(&rule);
        ctx.exit();
        assert!(matches!(ctx.finish(), Err(Error::ExitRoot)));
    }
}
