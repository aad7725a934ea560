//! Sequential importance resampling for a 1-D constant-velocity target.
//!
//! All random draws (process noise and the systematic-resampling offsets) are
//! made by the generator and stored in the input, so reduced precision alters
//! the arithmetic but never the random stream. The effective-sample-size
//! diagnostic runs in single precision; everything else is double.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["predict", "likelihood", "normalize", "estimate", "resample", "diagnostics"];

static SPEC: KernelSpec = KernelSpec {
    name: "particlefilter_mini",
    scopes: SCOPES,
    width: Width::Double,
    metric: Metric::RelativeRmse,
    default_size: 48,
    description: "1-D particle filter with systematic resampling (double precision)",
    categories: &[],
    fcs_targets: &[],
};

pub const STEPS: usize = 16;
const VELOCITY: f64 = 1.25;
const PROCESS_SIGMA: f64 = 0.6;
const OBS_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub initial: Vec<f64>,
    pub observations: Vec<f64>,
    /// `STEPS * particles` standard-normal draws.
    pub process_noise: Vec<f64>,
    /// One uniform offset in `[0, 1)` per step.
    pub resample_u: Vec<f64>,
}

impl Input {
    pub fn particles(&self) -> usize {
        self.initial.len()
    }
}

pub fn generate(seed: u64, size: usize) -> Input {
    let mut rng = seeded_rng(seed);
    let obs_noise = Normal::new(0.0, OBS_SIGMA).expect("valid sigma");
    let start: f64 = rng.gen_range(-20.0..20.0);
    let mut truth = start;
    let mut observations = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        truth += VELOCITY + PROCESS_SIGMA * rng.sample::<f64, _>(StandardNormal);
        observations.push(truth + obs_noise.sample(&mut rng));
    }
    let initial = (0..size).map(|_| start + rng.gen_range(-3.0..3.0)).collect();
    let process_noise = (0..STEPS * size).map(|_| rng.sample(StandardNormal)).collect();
    let resample_u = (0..STEPS).map(|_| rng.gen_range(0.0..1.0)).collect();
    Input { initial, observations, process_noise, resample_u }
}

fn effective_sample_size<C: FpContext>(ctx: &mut C, weights: &[f64]) -> f32 {
    ctx.scoped("diagnostics", |ctx| {
        ctx.load::<f32>(weights.len());
        let mut sq = 0.0f32;
        for &w in weights {
            let w = w as f32;
            let w2 = ctx.mul(w, w);
            sq = ctx.add(sq, w2);
        }
        ctx.div(1.0f32, sq)
    })
}

/// Estimated position per step. The sample-size diagnostic is computed but
/// not part of the output.
pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f64> {
    let n = input.particles();
    if n == 0 {
        return vec![0.0; STEPS];
    }
    let mut particles = input.initial.clone();
    let mut weights = vec![0.0f64; n];
    let mut cumulative = vec![0.0f64; n];
    let mut estimates = Vec::with_capacity(STEPS);
    let inv_two_var = 1.0 / (2.0 * OBS_SIGMA * OBS_SIGMA);
    for (t, &y) in input.observations.iter().enumerate() {
        let noise = &input.process_noise[t * n..(t + 1) * n];
        ctx.scoped("predict", |ctx| {
            ctx.load::<f64>(2 * n);
            for (x, &e) in particles.iter_mut().zip(noise) {
                let jitter = ctx.mul(e, PROCESS_SIGMA);
                let moved = ctx.add(*x, VELOCITY);
                *x = ctx.add(moved, jitter);
            }
            ctx.store::<f64>(n);
        });
        ctx.scoped("likelihood", |ctx| {
            ctx.load::<f64>(n);
            for (w, &x) in weights.iter_mut().zip(&particles) {
                let d = ctx.sub(y, x);
                let d2 = ctx.mul(d, d);
                *w = (-ctx.mul(d2, inv_two_var)).exp();
            }
            ctx.store::<f64>(n);
        });
        ctx.scoped("normalize", |ctx| {
            ctx.load::<f64>(n);
            let mut sum = weights.iter().fold(0.0f64, |acc, &w| ctx.add(acc, w));
            if !(sum > 0.0 && sum.is_finite()) {
                // every particle lost: fall back to uniform weights
                weights.iter_mut().for_each(|w| *w = 1.0);
                sum = n as f64;
            }
            for w in weights.iter_mut() {
                *w = ctx.div(*w, sum);
            }
            ctx.store::<f64>(n);
        });
        let est = ctx.scoped("estimate", |ctx| {
            ctx.load::<f64>(2 * n);
            particles.iter().zip(&weights).fold(0.0f64, |acc, (&x, &w)| {
                let p = ctx.mul(w, x);
                ctx.add(acc, p)
            })
        });
        estimates.push(est);
        effective_sample_size(ctx, &weights);
        ctx.scoped("resample", |ctx| {
            ctx.load::<f64>(2 * n);
            let mut acc = 0.0f64;
            for (c, &w) in cumulative.iter_mut().zip(&weights) {
                acc = ctx.add(acc, w);
                *c = acc;
            }
            let previous = particles.clone();
            let mut i = 0;
            for (j, x) in particles.iter_mut().enumerate() {
                let offset = ctx.add(input.resample_u[t], j as f64);
                let u = ctx.div(offset, n as f64);
                while i + 1 < n && cumulative[i] < u {
                    i += 1;
                }
                *x = previous[i];
            }
            ctx.store::<f64>(n);
        });
    }
    estimates
}

pub struct ParticleFilter;

impl Kernel for ParticleFilter {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Particlefilter(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Particlefilter, SPEC);
        Ok(run(&mut Native, input))
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Particlefilter, SPEC);
        Ok(run(ctx, input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_the_observations() {
        let input = generate(9, 200);
        let est = run(&mut Native, &input);
        assert_eq!(est.len(), STEPS);
        let rmse =
            (est.iter().zip(&input.observations).map(|(e, y)| (e - y).powi(2)).sum::<f64>() / STEPS as f64).sqrt();
        // the filter should sit well inside the observation noise band
        assert!(rmse < 2.0 * OBS_SIGMA, "{rmse}");
    }

    #[test]
    fn effective_sample_size_bounds() {
        let uniform = vec![0.25; 4];
        assert_eq!(effective_sample_size(&mut Native, &uniform), 4.0);
        assert_eq!(effective_sample_size(&mut Native, &[1.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn draws_live_in_the_input() {
        let a = generate(4, 10);
        assert_eq!(a.process_noise.len(), STEPS * 10);
        assert_eq!(a.resample_u.len(), STEPS);
        assert_eq!(run(&mut Native, &a), run(&mut Native, &a.clone()));
    }
}
