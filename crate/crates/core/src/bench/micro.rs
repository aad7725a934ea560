//! Ten-FLOP fixture for trace tests: five single-precision operations in
//! `micro`, then five double-precision ones in the nested `micro_inner`.
//!
//! Operands are fixed constants; the seed and size are ignored.

use serde::{Deserialize, Serialize};

use super::{Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["micro", "micro_inner"];

static SPEC: KernelSpec = KernelSpec {
    name: "micro",
    scopes: SCOPES,
    width: Width::Single,
    metric: Metric::MeanRelative,
    default_size: 1,
    description: "10-operation trace fixture (5 single, 5 double)",
    categories: &[],
    fcs_targets: &[],
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub single: [f32; 8],
    pub double: [f64; 7],
}

impl Default for Input {
    // truncated constants on purpose: the golden trace depends on them
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            single: [1.0, 1.0, 0.1, 0.1, 3.14159, 1.41421, 1.0, 3.0],
            double: [0.1, 0.2, 2.718281828, 1.5, 10.0, 7.0, 0.3],
        }
    }
}

pub fn generate(_seed: u64, _size: usize) -> Input {
    Input::default()
}

pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f64> {
    ctx.scoped("micro", |ctx| {
        let s = &input.single;
        let r1 = ctx.add(s[0], s[1]);
        let r2 = ctx.mul(s[2], s[3]);
        let r3 = ctx.sub(s[4], s[5]);
        let r4 = ctx.div(s[6], s[7]);
        let r5 = ctx.add(r2, r4);
        let inner = ctx.scoped("micro_inner", |ctx| {
            let d = &input.double;
            let r6 = ctx.add(d[0], d[1]);
            let r7 = ctx.mul(d[2], d[3]);
            let r8 = ctx.div(d[4], d[5]);
            let r9 = ctx.sub(r6, d[6]);
            let r10 = ctx.mul(r8, r7);
            [r6, r7, r8, r9, r10]
        });
        [r1, r2, r3, r4, r5].into_iter().map(f64::from).chain(inner).collect()
    })
}

pub struct Micro;

impl Kernel for Micro {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Micro(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Micro, SPEC);
        Ok(run(&mut Native, input))
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Micro, SPEC);
        Ok(run(ctx, input))
    }
}
