//! Lloyd's k-means on seeded Gaussian blobs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Kernel, KernelInput, KernelSpec, Metric};
use crate::error::Result;
use crate::fpcore::Width;
use crate::instrument::{FpContext, Instrumented, Native};

pub const SCOPES: &[&str] = &["assign", "distance", "accumulate", "recenter"];

static SPEC: KernelSpec = KernelSpec {
    name: "kmeans",
    scopes: SCOPES,
    width: Width::Single,
    metric: Metric::MeanRelative,
    default_size: 96,
    description: "Lloyd k-means iterations on Gaussian point clouds (single precision)",
    categories: &[],
    fcs_targets: &[],
};

pub const DIM: usize = 4;
pub const CLUSTERS: usize = 4;
pub const ITERATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    /// Row-major, `DIM` coordinates per point.
    pub points: Vec<f32>,
    pub initial: Vec<f32>,
}

pub fn generate(seed: u64, size: usize) -> Input {
    let mut rng = seeded_rng(seed);
    let centers: Vec<f32> = (0..CLUSTERS * DIM).map(|_| rng.gen_range(2.0..10.0)).collect();
    let noise = Normal::new(0.0f32, 0.9).expect("valid sigma");
    let mut points = Vec::with_capacity(size * DIM);
    for i in 0..size {
        let c = i % CLUSTERS;
        for d in 0..DIM {
            points.push(centers[c * DIM + d] + noise.sample(&mut rng));
        }
    }
    // start from points spread through the set, perturbed off the blob centers
    let mut initial = Vec::with_capacity(CLUSTERS * DIM);
    for c in 0..CLUSTERS {
        for d in 0..DIM {
            let base = if size == 0 { centers[c * DIM + d] } else { points[(c * size / CLUSTERS) * DIM + d] };
            initial.push(base + rng.gen_range(-1.0f32..1.0));
        }
    }
    Input { points, initial }
}

fn distance<C: FpContext>(ctx: &mut C, p: &[f32], c: &[f32]) -> f32 {
    ctx.scoped("distance", |ctx| {
        let mut acc = 0.0f32;
        for (&x, &y) in p.iter().zip(c) {
            let d = ctx.sub(x, y);
            let sq = ctx.mul(d, d);
            acc = ctx.add(acc, sq);
        }
        acc
    })
}

pub fn run<C: FpContext>(ctx: &mut C, input: &Input) -> Vec<f32> {
    let n = input.points.len() / DIM;
    let mut centroids = input.initial.clone();
    let mut labels = vec![0usize; n];
    for _ in 0..ITERATIONS {
        ctx.scoped("assign", |ctx| {
            for (i, p) in input.points.chunks_exact(DIM).enumerate() {
                ctx.load::<f32>(DIM);
                let mut best = (f32::INFINITY, 0);
                for (c, centroid) in centroids.chunks_exact(DIM).enumerate() {
                    let d = distance(ctx, p, centroid);
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                labels[i] = best.1;
            }
        });
        let mut sums = [0.0f32; CLUSTERS * DIM];
        let mut counts = [0u32; CLUSTERS];
        ctx.scoped("accumulate", |ctx| {
            for (p, &l) in input.points.chunks_exact(DIM).zip(&labels) {
                ctx.load::<f32>(DIM);
                counts[l] += 1;
                for d in 0..DIM {
                    sums[l * DIM + d] = ctx.add(sums[l * DIM + d], p[d]);
                }
            }
        });
        ctx.scoped("recenter", |ctx| {
            for c in 0..CLUSTERS {
                // an empty cluster keeps its centroid
                if counts[c] > 0 {
                    let count = counts[c] as f32;
                    for d in 0..DIM {
                        centroids[c * DIM + d] = ctx.div(sums[c * DIM + d], count);
                    }
                }
                ctx.store::<f32>(DIM);
            }
        });
    }
    centroids
}

pub struct KMeans;

impl Kernel for KMeans {
    fn spec(&self) -> &KernelSpec {
        &SPEC
    }

    fn generate(&self, seed: u64, size: usize) -> KernelInput {
        KernelInput::Kmeans(generate(seed, size))
    }

    fn run_native(&self, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Kmeans, SPEC);
        Ok(run(&mut Native, input).into_iter().map(f64::from).collect())
    }

    fn run_instrumented(&self, ctx: &mut Instrumented<'_>, input: &KernelInput) -> Result<Vec<f64>> {
        let input = super::expect_input!(input, Kmeans, SPEC);
        Ok(run(ctx, input).into_iter().map(f64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_blob_structure() {
        let input = generate(5, 200);
        let centroids = run(&mut Native, &input);
        assert_eq!(centroids.len(), CLUSTERS * DIM);
        assert!(centroids.iter().all(|c| c.is_finite()));
        // every point is within a few sigma of its nearest centroid
        let mut worst = 0.0f32;
        for p in input.points.chunks_exact(DIM) {
            let nearest = centroids
                .chunks_exact(DIM)
                .map(|c| p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f32>())
                .fold(f32::INFINITY, f32::min);
            worst = worst.max(nearest.sqrt());
        }
        assert!(worst < 8.0, "{worst}");
    }

    #[test]
    fn empty_input_keeps_initial_centroids() {
        let input = generate(5, 0);
        assert_eq!(run(&mut Native, &input), input.initial);
    }
}
