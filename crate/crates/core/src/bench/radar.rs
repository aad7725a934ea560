//! Radar front end: low-pass filter and pulse compression, both built on a
//! shared radix-2 FFT, followed by magnitude detection.
//!
//! `lpf` and `pc` are stage scopes with no arithmetic of their own. Their
//! spectral products run in `lpf_taps` and `pc_match`; both stages call the
//! same `fft` scope, so call-stack placement can give the two FFT uses
//! different implementations.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["lpf", "pc", "fft", "lpf_taps", "pc_match", "detect"];

static SPEC: KernelSpec = KernelSpec {
    name: "radar",
    scopes: SCOPES,
    width: Width::Single,
    metric: Metric::MeanRelative,
    default_size: 4,
    description: "low-pass filter + pulse compression over a shared FFT (single precision)",
    categories: &[],
    fcs_targets: &["lpf", "pc", "lpf_taps", "pc_match", "detect"],
};

pub const SAMPLES: usize = 64;
const LOG2_SAMPLES: u32 = 6;
const CHIRP_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f32,
    pub im: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    /// Each pulse holds `SAMPLES` complex baseband samples.
    pub pulses: Vec<Vec<Complex>>,
}

struct Tables {
    twiddles: Vec<Complex>,
    lowpass: Vec<f32>,
    matched: Vec<Complex>,
}

fn chirp(n: usize) -> (f64, f64) {
    let t = n as f64 / CHIRP_LEN as f64;
    let phase = PI * 0.5 * CHIRP_LEN as f64 * t * t;
    (phase.cos(), phase.sin())
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let twiddles = (0..SAMPLES / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / SAMPLES as f64;
                Complex { re: a.cos() as f32, im: a.sin() as f32 }
            })
            .collect();
        // raised-cosine low-pass keeping the lower half of the band
        let lowpass = (0..SAMPLES)
            .map(|k| {
                let f = k.min(SAMPLES - k) as f64 / (SAMPLES / 2) as f64;
                if f <= 0.4 {
                    1.0
                } else if f >= 0.7 {
                    0.02
                } else {
                    let x = (f - 0.4) / 0.3;
                    (0.51 + 0.49 * (PI * x).cos()) as f32
                }
            })
            .collect();
        // conjugate spectrum of the transmitted chirp
        let matched = (0..SAMPLES)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..CHIRP_LEN {
                    let (cr, ci) = chirp(n);
                    let a = -2.0 * PI * (k * n) as f64 / SAMPLES as f64;
                    re += cr * a.cos() - ci * a.sin();
                    im += cr * a.sin() + ci * a.cos();
                }
                Complex { re: (re / CHIRP_LEN as f64) as f32, im: (-im / CHIRP_LEN as f64) as f32 }
            })
            .collect();
        Tables { twiddles, lowpass, matched }
    })
}

pub fn generate(seed: u64, size: usize) -> Input {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0f64, 0.05).expect("valid sigma");
    let pulses = (0..size)
        .map(|_| {
            let mut buf = vec![(0.0f64, 0.0f64); SAMPLES];
            for _ in 0..2 {
                let delay = rng.gen_range(0..SAMPLES - CHIRP_LEN);
                let amp = rng.gen_range(0.5..1.5);
                for n in 0..CHIRP_LEN {
                    let (cr, ci) = chirp(n);
                    buf[delay + n].0 += amp * cr;
                    buf[delay + n].1 += amp * ci;
                }
            }
            // out-of-band interferer near Nyquist
            let tone = rng.gen_range(26.0..31.0) / SAMPLES as f64;
            let tone_amp = rng.gen_range(0.2..0.6);
            buf.iter()
                .enumerate()
                .map(|(n, &(re, im))| {
                    let a = 2.0 * PI * tone * n as f64;
                    Complex {
                        re: (re + tone_amp * a.cos() + noise.sample(&mut rng) + 0.3) as f32,
                        im: (im + tone_amp * a.sin() + noise.sample(&mut rng)) as f32,
                    }
                })
                .collect()
        })
        .collect();
    Input { pulses }
}

fn cmul<C: FpContext>(ctx: &mut C, a: Complex, b: Complex) -> Complex {
    let rr = ctx.mul(a.re, b.re);
    let ii = ctx.mul(a.im, b.im);
    let ri = ctx.mul(a.re, b.im);
    let ir = ctx.mul(a.im, b.re);
    Complex { re: ctx.sub(rr, ii), im: ctx.add(ri, ir) }
}

fn fft<C: FpContext>(ctx: &mut C, data: &mut [Complex], inverse: bool) {
    ctx.scoped("fft", |ctx| {
        let n = data.len();
        ctx.load::<f32>(2 * n);
        for i in 0..n {
            let j = (i as u32).reverse_bits() >> (32 - LOG2_SAMPLES);
            let j = j as usize;
            if j > i {
                data.swap(i, j);
            }
        }
        let tw = &tables().twiddles;
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = tw[k * stride];
                    if inverse {
                        w.im = -w.im;
                    }
                    let u = data[start + k];
                    let t = cmul(ctx, w, data[start + k + len / 2]);
                    data[start + k] = Complex { re: ctx.add(u.re, t.re), im: ctx.add(u.im, t.im) };
                    data[start + k + len / 2] = Complex { re: ctx.sub(u.re, t.re), im: ctx.sub(u.im, t.im) };
                }
            }
            len *= 2;
        }
        if inverse {
            let scale = 1.0f32 / n as f32;
            for v in data.iter_mut() {
                v.re = ctx.mul(v.re, scale);
                v.im = ctx.mul(v.im, scale);
            }
        }
        ctx.store::<f32>(2 * n);
    });
}

fn lpf<C: FpContext>(ctx: &mut C, signal: &mut [Complex]) {
    ctx.scoped("lpf", |ctx| {
        fft(ctx, signal, false);
        ctx.scoped("lpf_taps", |ctx| {
            for (v, &h) in signal.iter_mut().zip(&tables().lowpass) {
                v.re = ctx.mul(v.re, h);
                v.im = ctx.mul(v.im, h);
            }
        });
        fft(ctx, signal, true);
    });
}

fn pulse_compress<C: FpContext>(ctx: &mut C, signal: &mut [Complex]) {
    ctx.scoped("pc", |ctx| {
        fft(ctx, signal, false);
        ctx.scoped("pc_match", |ctx| {
            for (v, &m) in signal.iter_mut().zip(&tables().matched) {
                *v = cmul(ctx, *v, m);
            }
        });
        fft(ctx, signal, true);
    });
}

fn detect<C: FpContext>(ctx: &mut C, signal: &[Complex]) -> Vec<f32> {
    ctx.scoped("detect", |ctx| {
        let out = signal
            .iter()
            .map(|v| {
                let rr = ctx.mul(v.re, v.re);
                let ii = ctx.mul(v.im, v.im);
                ctx.add(rr, ii).sqrt()
            })
            .collect();
        ctx.store::<f32>(signal.len());
        out
    })
}

pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f32> {
    let mut out = Vec::with_capacity(input.pulses.len() * SAMPLES);
    for pulse in &input.pulses {
        let mut signal = pulse.clone();
        lpf(ctx, &mut signal);
        pulse_compress(ctx, &mut signal);
        out.extend(detect(ctx, &signal));
    }
    out
}

pub struct Radar;

impl Kernel for Radar {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Radar(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Radar, SPEC);
        Ok(run(&mut Native, input).into_iter().map(f64::from).collect())
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Radar, SPEC);
        Ok(run(ctx, input).into_iter().map(f64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft(x: &[Complex]) -> Vec<(f64, f64)> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, v)| {
                    let a = -2.0 * PI * (k * j) as f64 / n as f64;
                    let (c, s) = (a.cos(), a.sin());
                    (re + v.re as f64 * c - v.im as f64 * s, im + v.re as f64 * s + v.im as f64 * c)
                })
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_dft() {
        let x = &generate(1, 1).pulses[0];
        let mut y = x.clone();
        fft(&mut Native, &mut y, false);
        for (a, b) in y.iter().zip(dft(x)) {
            assert!((a.re as f64 - b.0).abs() < 1e-4 && (a.im as f64 - b.1).abs() < 1e-4);
        }
        fft(&mut Native, &mut y, true);
        for (a, b) in y.iter().zip(x) {
            assert!((a.re - b.re).abs() < 1e-5 && (a.im - b.im).abs() < 1e-5);
        }
    }

    #[test]
    fn output_is_finite_and_shaped() {
        let out = run(&mut Native, &generate(2, 3));
        assert_eq!(out.len(), 3 * SAMPLES);
        assert!(out.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
