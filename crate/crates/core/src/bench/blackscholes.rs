//! European option pricing with the closed-form Black-Scholes formula and
//! the Abramowitz-Stegun polynomial approximation of the normal CDF.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["main_loop", "price_core", "cndf", "norm"];

static SPEC: KernelSpec = KernelSpec {
    name: "blackscholes",
    scopes: SCOPES,
    width: Width::Single,
    metric: Metric::MeanRelative,
    default_size: 64,
    description: "closed-form European option pricing (single precision)",
    categories: &[],
    fcs_targets: &[],
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionData {
    pub spot: f32,
    pub strike: f32,
    pub rate: f32,
    pub volatility: f32,
    pub days: f32,
    pub call: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub options: Vec<OptionData>,
}

pub fn generate(seed: u64, size: usize) -> Input {
    let mut rng = seeded_rng(seed);
    let options = (0..size)
        .map(|_| {
            let spot: f32 = rng.gen_range(50.0..150.0);
            OptionData {
                spot,
                strike: spot * rng.gen_range(0.85f32..1.15),
                rate: rng.gen_range(0.01..0.08),
                volatility: rng.gen_range(0.15..0.5),
                days: rng.gen_range(90.0f32..730.0).round(),
                call: rng.gen_bool(0.5),
            }
        })
        .collect();
    Input { options }
}

const INV_SQRT_2PI: f32 = 0.398_942_3;
const CNDF_GAMMA: f32 = 0.231_641_9;
const CNDF_COEFFS: [f32; 5] = [0.319_381_53, -0.356_563_78, 1.781_477_9, -1.821_256, 1.330_274_4];

fn norm<C: FpContext>(ctx: &mut C, x: f32) -> f32 {
    ctx.scoped("norm", |ctx| {
        let sq = ctx.mul(x, x);
        let h = ctx.mul(sq, -0.5f32);
        ctx.mul(h.exp(), INV_SQRT_2PI)
    })
}

fn cndf<C: FpContext>(ctx: &mut C, x: f32) -> f32 {
    ctx.scoped("cndf", |ctx| {
        let negative = x < 0.0;
        let x = x.abs();
        let pdf = norm(ctx, x);
        let g = ctx.mul(CNDF_GAMMA, x);
        let denom = ctx.add(1.0f32, g);
        let k = ctx.div(1.0f32, denom);
        let mut poly = CNDF_COEFFS[4];
        for &c in CNDF_COEFFS[..4].iter().rev() {
            let t = ctx.mul(k, poly);
            poly = ctx.add(c, t);
        }
        let poly = ctx.mul(k, poly);
        let tail = ctx.mul(pdf, poly);
        let cdf = ctx.sub(1.0f32, tail);
        if negative {
            ctx.sub(1.0f32, cdf)
        } else {
            cdf
        }
    })
}

fn price_core<C: FpContext>(ctx: &mut C, o: &OptionData, years: f32) -> f32 {
    ctx.scoped("price_core", |ctx| {
        let sqrt_t = years.sqrt();
        let log_term = ctx.div(o.spot, o.strike).ln();
        let var = ctx.mul(o.volatility, o.volatility);
        let half_var = ctx.mul(var, 0.5f32);
        let drift = ctx.add(o.rate, half_var);
        let drift_t = ctx.mul(drift, years);
        let num = ctx.add(log_term, drift_t);
        let vol_t = ctx.mul(o.volatility, sqrt_t);
        let d1 = ctx.div(num, vol_t);
        let d2 = ctx.sub(d1, vol_t);
        let nd1 = cndf(ctx, d1);
        let nd2 = cndf(ctx, d2);
        let rt = ctx.mul(o.rate, years);
        let discounted = ctx.mul(o.strike, (-rt).exp());
        if o.call {
            let a = ctx.mul(o.spot, nd1);
            let b = ctx.mul(discounted, nd2);
            ctx.sub(a, b)
        } else {
            let q2 = ctx.sub(1.0f32, nd2);
            let q1 = ctx.sub(1.0f32, nd1);
            let a = ctx.mul(discounted, q2);
            let b = ctx.mul(o.spot, q1);
            ctx.sub(a, b)
        }
    })
}

pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f32> {
    ctx.scoped("main_loop", |ctx| {
        input
            .options
            .iter()
            .map(|o| {
                ctx.load::<f32>(5);
                let years = ctx.div(o.days, 365.0f32);
                let price = price_core(ctx, o, years);
                ctx.store::<f32>(1);
                price
            })
            .collect()
    })
}

pub struct BlackScholes;

impl Kernel for BlackScholes {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Blackscholes(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Blackscholes, SPEC);
        Ok(run(&mut Native, input).into_iter().map(f64::from).collect())
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Blackscholes, SPEC);
        Ok(run(ctx, input).into_iter().map(f64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line f32 implementation with the native operators.
    fn reference_price(o: &OptionData) -> f32 {
        fn cndf(x: f32) -> f32 {
            let negative = x < 0.0;
            let x = x.abs();
            let pdf = (x * x * -0.5f32).exp() * INV_SQRT_2PI;
            let k = 1.0f32 / (1.0f32 + CNDF_GAMMA * x);
            let mut poly = CNDF_COEFFS[4];
            for &c in CNDF_COEFFS[..4].iter().rev() {
                poly = c + k * poly;
            }
            let cdf = 1.0f32 - pdf * (k * poly);
            if negative {
                1.0 - cdf
            } else {
                cdf
            }
        }
        let years = o.days / 365.0f32;
        let sqrt_t = years.sqrt();
        let num = (o.spot / o.strike).ln() + (o.rate + o.volatility * o.volatility * 0.5f32) * years;
        let vol_t = o.volatility * sqrt_t;
        let d1 = num / vol_t;
        let d2 = d1 - vol_t;
        let discounted = o.strike * (-(o.rate * years)).exp();
        if o.call {
            o.spot * cndf(d1) - discounted * cndf(d2)
        } else {
            discounted * (1.0f32 - cndf(d2)) - o.spot * (1.0f32 - cndf(d1))
        }
    }

    #[test]
    fn native_matches_reference_bit_for_bit() {
        let input = generate(7, 200);
        let prices = run(&mut Native, &input);
        for (o, p) in input.options.iter().zip(prices) {
            assert_eq!(p.to_bits(), reference_price(o).to_bits(), "{o:?}");
        }
    }

    #[test]
    fn prices_are_sane() {
        // at-the-money call, one year, 20% vol, 5% rate: about 10.45
        let o = OptionData { spot: 100.0, strike: 100.0, rate: 0.05, volatility: 0.2, days: 365.0, call: true };
        let p = run(&mut Native, &Input { options: vec![o] })[0];
        assert!((p - 10.45).abs() < 0.05, "{p}");
        for p in run(&mut Native, &generate(3, 100)) {
            assert!(p.is_finite() && p > 0.0);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(generate(11, 16), generate(11, 16));
        assert_ne!(generate(11, 16), generate(12, 16));
    }
}
