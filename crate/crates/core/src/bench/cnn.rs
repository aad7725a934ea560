//! A tiny LeNet-shaped convnet classifying 8x8 digit images.
//!
//! The convolution filters are fixed seeded random weights; the dense conv3
//! layer and the readout are trained once, at full precision, on a fixed-seed
//! training set.
//! Tuning touches inference only.
//!
//! Every layer instance runs inside its category scope, e.g.
//! `conv_layers > conv2` or `activations > tanh`, so a per-category mapping
//! and the per-instance mapping that repeats each category's level produce
//! identical arithmetic.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["conv1", "avgpool1", "conv2", "avgpool2", "conv3", "fc", "tanh", "internal"];
pub const CATEGORIES: &[&str] = &["conv_layers", "pool_layers", "fc_layers", "activations", "internals"];

static SPEC: KernelSpec = KernelSpec {
    name: "cnn_digits",
    scopes: SCOPES,
    width: Width::Single,
    metric: Metric::LabelMismatch,
    default_size: 40,
    description: "8x8 digit classifier: conv, avgpool, conv, avgpool, dense, fc with tanh (single precision)",
    categories: CATEGORIES,
    fcs_targets: &[],
};

pub const SIDE: usize = 8;
pub const CLASSES: usize = 10;

const C1: usize = 4; // conv1: 1 -> 4 channels, 3x3 same padding, 8x8
const C2: usize = 8; // conv2: 4 -> 8 channels, 2x2 valid, 4x4 -> 3x3
const C3: usize = 16; // conv3: 2x2x8 -> 16, dense
const POOLED: usize = 2 * 2 * C2;

const WEIGHT_SEED: u64 = 0x5eed_c04e;
const TRAIN_SEED: u64 = 0x7a1_4e57;
const TRAIN_SIZE: usize = 400;
const TRAIN_EPOCHS: usize = 1500;
const TRAIN_RATE: f64 = 1.0;

const GLYPHS: [[u8; SIDE]; CLASSES] = [
    [0x3C, 0x66, 0x66, 0x66, 0x66, 0x66, 0x3C, 0x00],
    [0x18, 0x38, 0x18, 0x18, 0x18, 0x18, 0x7E, 0x00],
    [0x3C, 0x66, 0x06, 0x0C, 0x30, 0x60, 0x7E, 0x00],
    [0x3C, 0x66, 0x06, 0x1C, 0x06, 0x66, 0x3C, 0x00],
    [0x0C, 0x1C, 0x3C, 0x6C, 0x7E, 0x0C, 0x0C, 0x00],
    [0x7E, 0x60, 0x7C, 0x06, 0x06, 0x66, 0x3C, 0x00],
    [0x3C, 0x60, 0x7C, 0x66, 0x66, 0x66, 0x3C, 0x00],
    [0x7E, 0x06, 0x0C, 0x18, 0x30, 0x30, 0x30, 0x00],
    [0x3C, 0x66, 0x66, 0x3C, 0x66, 0x66, 0x3C, 0x00],
    [0x3C, 0x66, 0x66, 0x3E, 0x06, 0x0C, 0x38, 0x00],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    /// `SIDE * SIDE` pixels per image, row-major.
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Input {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn generate(seed: u64, size: usize) -> Input {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0f32, 0.15).expect("valid sigma");
    let mut images = Vec::with_capacity(size * SIDE * SIDE);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let label = rng.gen_range(0..CLASSES);
        let (dx, dy) = (rng.gen_range(-1i32..=1), rng.gen_range(-1i32..=1));
        let ink: f32 = rng.gen_range(0.7..1.0);
        for y in 0..SIDE as i32 {
            for x in 0..SIDE as i32 {
                let (sx, sy) = (x - dx, y - dy);
                let on = (0..SIDE as i32).contains(&sx)
                    && (0..SIDE as i32).contains(&sy)
                    && GLYPHS[label][sy as usize] & (0x80 >> sx) != 0;
                let mut v = if on { ink } else { 0.0 };
                if rng.gen_bool(0.03) {
                    v = ink - v;
                }
                images.push(v + noise.sample(&mut rng));
            }
        }
        labels.push(label as u8);
    }
    Input { images, labels }
}

struct Weights {
    w1: Vec<f32>, // [C1][3][3]
    b1: Vec<f32>,
    w2: Vec<f32>, // [C2][C1][2][2]
    b2: Vec<f32>,
    w3: Vec<f32>, // [C3][POOLED]
    b3: Vec<f32>,
    fc: Vec<f32>, // [CLASSES][C3]
    fc_bias: Vec<f32>,
}

fn uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let a = (3.0 / fan_in as f32).sqrt();
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

fn weights() -> &'static Weights {
    static WEIGHTS: OnceLock<Weights> = OnceLock::new();
    WEIGHTS.get_or_init(|| {
        let mut rng = seeded_rng(WEIGHT_SEED);
        let mut w = Weights {
            w1: uniform(&mut rng, C1 * 9, 9),
            b1: uniform(&mut rng, C1, 9).iter().map(|b| b * 0.1).collect(),
            w2: uniform(&mut rng, C2 * C1 * 4, C1 * 4),
            b2: vec![0.0; C2],
            w3: uniform(&mut rng, C3 * POOLED, POOLED),
            b3: vec![0.0; C3],
            fc: vec![0.0; CLASSES * C3],
            fc_bias: vec![0.0; CLASSES],
        };
        train_dense(&mut w);
        w
    })
}

/// Fit conv3 and the readout on the frozen convolutional features: one
/// hidden tanh layer plus softmax, full-batch gradient descent in double
/// precision.
fn train_dense(w: &mut Weights) {
    let data = generate(TRAIN_SEED, TRAIN_SIZE);
    let feats: Vec<Vec<f64>> = data
        .images
        .chunks_exact(SIDE * SIDE)
        .map(|img| pooled(&mut Native, w, img).into_iter().map(f64::from).collect())
        .collect();
    let mut w3: Vec<f64> = w.w3.iter().map(|&v| f64::from(v)).collect();
    let mut b3 = vec![0.0f64; C3];
    let mut fc = vec![0.0f64; CLASSES * C3];
    let mut bias = vec![0.0f64; CLASSES];
    let n = feats.len() as f64;
    let mut hidden = [0.0f64; C3];
    let mut probs = [0.0f64; CLASSES];
    for _ in 0..TRAIN_EPOCHS {
        let mut g_w3 = vec![0.0f64; C3 * POOLED];
        let mut g_b3 = [0.0f64; C3];
        let mut g_fc = vec![0.0f64; CLASSES * C3];
        let mut g_b = [0.0f64; CLASSES];
        for (f, &label) in feats.iter().zip(&data.labels) {
            for h in 0..C3 {
                hidden[h] = (b3[h] + (0..POOLED).map(|j| w3[h * POOLED + j] * f[j]).sum::<f64>()).tanh();
            }
            for c in 0..CLASSES {
                probs[c] = bias[c] + (0..C3).map(|h| fc[c * C3 + h] * hidden[h]).sum::<f64>();
            }
            let m = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            probs.iter_mut().for_each(|z| *z = (*z - m).exp());
            let total: f64 = probs.iter().sum();
            let mut d_hidden = [0.0f64; C3];
            for c in 0..CLASSES {
                let err = probs[c] / total - if c == label as usize { 1.0 } else { 0.0 };
                g_b[c] += err;
                for h in 0..C3 {
                    g_fc[c * C3 + h] += err * hidden[h];
                    d_hidden[h] += err * fc[c * C3 + h];
                }
            }
            for h in 0..C3 {
                let d = d_hidden[h] * (1.0 - hidden[h] * hidden[h]);
                g_b3[h] += d;
                for j in 0..POOLED {
                    g_w3[h * POOLED + j] += d * f[j];
                }
            }
        }
        for (p, g) in w3.iter_mut().zip(&g_w3).chain(b3.iter_mut().zip(&g_b3)) {
            *p -= TRAIN_RATE * g / n;
        }
        for (p, g) in fc.iter_mut().zip(&g_fc).chain(bias.iter_mut().zip(&g_b)) {
            *p -= TRAIN_RATE * g / n;
        }
    }
    let narrow = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect();
    w.w3 = narrow(w3);
    w.b3 = narrow(b3);
    w.fc = narrow(fc);
    w.fc_bias = narrow(bias);
}

/// `tanh(x) = 1 - 2 / (exp(2x) + 1)`, with a native exponential.
fn tanh<C: FpContext>(ctx: &mut C, values: &mut [f32]) {
    ctx.scoped("activations", |ctx| {
        ctx.scoped("tanh", |ctx| {
            ctx.load::<f32>(values.len());
            for v in values.iter_mut() {
                let two_x = ctx.mul(2.0f32, *v);
                let denom = ctx.add(two_x.exp(), 1.0f32);
                let q = ctx.div(2.0f32, denom);
                *v = ctx.sub(1.0f32, q);
            }
            ctx.store::<f32>(values.len());
        })
    })
}

fn dot<C: FpContext>(ctx: &mut C, bias: f32, pairs: impl Iterator<Item = (f32, f32)>) -> f32 {
    pairs.fold(bias, |acc, (w, x)| {
        let p = ctx.mul(w, x);
        ctx.add(acc, p)
    })
}

fn conv1<C: FpContext>(ctx: &mut C, w: &Weights, img: &[f32]) -> Vec<f32> {
    ctx.scoped("conv_layers", |ctx| {
        ctx.scoped("conv1", |ctx| {
            ctx.load::<f32>(img.len() + w.w1.len() + C1);
            let mut out = Vec::with_capacity(C1 * SIDE * SIDE);
            for c in 0..C1 {
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        // zero padding contributes no FLOPs
                        let taps = (0..9).filter_map(|t| {
                            let (sy, sx) = ((y + t / 3).checked_sub(1)?, (x + t % 3).checked_sub(1)?);
                            (sy < SIDE && sx < SIDE).then(|| (w.w1[c * 9 + t], img[sy * SIDE + sx]))
                        });
                        out.push(dot(ctx, w.b1[c], taps));
                    }
                }
            }
            ctx.store::<f32>(out.len());
            out
        })
    })
}

/// 2x2 average pooling over `channels` maps of `side`^2.
fn avgpool<C: FpContext>(
    ctx: &mut C,
    name: &'static str,
    input: &[f32],
    channels: usize,
    side: usize,
    stride: usize,
) -> Vec<f32> {
    let out_side = (side - 2) / stride + 1;
    ctx.scoped("pool_layers", |ctx| {
        ctx.scoped(name, |ctx| {
            ctx.load::<f32>(channels * out_side * out_side * 4);
            let mut out = Vec::with_capacity(channels * out_side * out_side);
            for c in 0..channels {
                let map = &input[c * side * side..(c + 1) * side * side];
                for y in 0..out_side {
                    for x in 0..out_side {
                        let (r, s) = (stride * y * side + stride * x, (stride * y + 1) * side + stride * x);
                        let top = ctx.add(map[r], map[r + 1]);
                        let bottom = ctx.add(map[s], map[s + 1]);
                        let sum = ctx.add(top, bottom);
                        out.push(ctx.mul(sum, 0.25f32));
                    }
                }
            }
            ctx.store::<f32>(out.len());
            out
        })
    })
}

fn conv2<C: FpContext>(ctx: &mut C, w: &Weights, input: &[f32]) -> Vec<f32> {
    const IN: usize = SIDE / 2;
    const OUT: usize = IN - 1;
    ctx.scoped("conv_layers", |ctx| {
        ctx.scoped("conv2", |ctx| {
            ctx.load::<f32>(input.len() + w.w2.len() + C2);
            let mut out = Vec::with_capacity(C2 * OUT * OUT);
            for o in 0..C2 {
                for y in 0..OUT {
                    for x in 0..OUT {
                        let taps = (0..C1 * 4).map(|t| {
                            let (i, k) = (t / 4, t % 4);
                            (w.w2[o * C1 * 4 + t], input[i * IN * IN + (y + k / 2) * IN + x + k % 2])
                        });
                        out.push(dot(ctx, w.b2[o], taps));
                    }
                }
            }
            ctx.store::<f32>(out.len());
            out
        })
    })
}

fn dense<C: FpContext>(
    ctx: &mut C,
    category: &'static str,
    name: &'static str,
    weights: &[f32],
    bias: &[f32],
    input: &[f32],
) -> Vec<f32> {
    let n_in = input.len();
    ctx.scoped(category, |ctx| {
        ctx.scoped(name, |ctx| {
            ctx.load::<f32>(n_in + weights.len() + bias.len());
            let out: Vec<f32> = bias
                .iter()
                .enumerate()
                .map(|(o, &b)| {
                    dot(ctx, b, weights[o * n_in..(o + 1) * n_in].iter().copied().zip(input.iter().copied()))
                })
                .collect();
            ctx.store::<f32>(out.len());
            out
        })
    })
}

/// Output of the second pooling layer, flattened.
fn pooled<C: FpContext>(ctx: &mut C, w: &Weights, img: &[f32]) -> Vec<f32> {
    let mut a = conv1(ctx, w, img);
    tanh(ctx, &mut a);
    let p = avgpool(ctx, "avgpool1", &a, C1, SIDE, 2);
    let mut b = conv2(ctx, w, &p);
    tanh(ctx, &mut b);
    avgpool(ctx, "avgpool2", &b, C2, SIDE / 2 - 1, 1)
}

/// Softmax, returning the winning class.
fn classify<C: FpContext>(ctx: &mut C, logits: &[f32]) -> usize {
    ctx.scoped("internals", |ctx| {
        ctx.scoped("internal", |ctx| {
            ctx.load::<f32>(logits.len());
            let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let exps: Vec<f32> = logits.iter().map(|&z| ctx.sub(z, m).exp()).collect();
            let total = exps.iter().fold(0.0f32, |acc, &e| ctx.add(acc, e));
            let probs: Vec<f32> = exps.iter().map(|&e| ctx.div(e, total)).collect();
            ctx.store::<f32>(probs.len());
            argmax(&probs)
        })
    })
}

fn argmax(v: &[f32]) -> usize {
    // first maximum wins; NaN never does
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] || v[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Predicted class per image.
pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f32> {
    let w = weights();
    input
        .images
        .chunks_exact(SIDE * SIDE)
        .map(|img| {
            let q = pooled(ctx, w, img);
            let mut f = dense(ctx, "conv_layers", "conv3", &w.w3, &w.b3, &q);
            tanh(ctx, &mut f);
            let logits = dense(ctx, "fc_layers", "fc", &w.fc, &w.fc_bias, &f);
            classify(ctx, &logits) as f32
        })
        .collect()
}

pub struct CnnDigits;

impl Kernel for CnnDigits {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Cnn(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Cnn, SPEC);
        Ok(run(&mut Native, input).into_iter().map(f64::from).collect())
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Cnn, SPEC);
        Ok(run(ctx, input).into_iter().map(f64::from).collect())
    }
}
