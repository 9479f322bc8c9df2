//! Seeded k-means for the coarse quantizer.
//!
//! Deterministic by construction: the first center is drawn from a seeded
//! RNG, the remaining centers are picked farthest-point style (maximal
//! minimum distance to the centers chosen so far, ties to the lowest sample
//! index), assignment ties go to the lowest centroid index, and empty
//! clusters are re-seeded from the farthest member of the largest cluster.
//! Assignment is the data-parallel step; accumulation stays sequential so
//! centroid sums are added in one fixed order regardless of thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::parallel;

pub const DEFAULT_MAX_ITER: usize = 25;
pub const DEFAULT_TOL: f32 = 1e-4;

pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f32,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Runs Lloyd iterations over `samples` and returns `k` centroids.
///
/// Callers guarantee `samples.len() >= k >= 1` and uniform dimension.
pub fn run(samples: &[Vec<f32>], cfg: &KMeansConfig) -> Vec<Vec<f32>> {
    assert!(cfg.k >= 1 && samples.len() >= cfg.k);
    let dim = samples[0].len();
    let mut centroids = seed_centroids(samples, cfg);

    for _ in 0..cfg.max_iter {
        let assignment = assign(samples, &centroids);
        let mut sums = vec![vec![0.0f64; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let sum = &mut sums[c];
            for (j, &v) in samples[i].iter().enumerate() {
                sum[j] += v as f64;
            }
        }

        let mut next: Vec<Vec<f32>> = (0..cfg.k)
            .map(|c| {
                if counts[c] == 0 {
                    centroids[c].clone()
                } else {
                    sums[c]
                        .iter()
                        .map(|&s| (s / counts[c] as f64) as f32)
                        .collect()
                }
            })
            .collect();

        reseed_empty_clusters(samples, &assignment, &counts, &mut next);

        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_l2(a, b).sqrt())
            .fold(0.0f32, f32::max);
        centroids = next;
        if movement < cfg.tol {
            break;
        }
    }
    centroids
}

/// Index of the nearest centroid for each sample (L2, ties to the lowest
/// centroid index).
pub fn assign(samples: &[Vec<f32>], centroids: &[Vec<f32>]) -> Vec<usize> {
    parallel::map_slice(samples, |s| nearest(s, centroids))
}

/// Sequential twin of [`assign`], kept for benches and oracles.
pub fn assign_seq(samples: &[Vec<f32>], centroids: &[Vec<f32>]) -> Vec<usize> {
    parallel::map_slice_seq(samples, |s| nearest(s, centroids))
}

pub fn nearest(sample: &[f32], centroids: &[Vec<f32>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f32::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_l2(sample, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn seed_centroids(samples: &[Vec<f32>], cfg: &KMeansConfig) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let first = rng.gen_range(0..samples.len());
    let mut chosen = vec![first];
    let mut min_d: Vec<f32> = samples
        .iter()
        .map(|s| squared_l2(s, &samples[first]))
        .collect();

    while chosen.len() < cfg.k {
        let mut far = 0usize;
        let mut far_d = -1.0f32;
        for (i, &d) in min_d.iter().enumerate() {
            if d > far_d {
                far_d = d;
                far = i;
            }
        }
        chosen.push(far);
        for (i, s) in samples.iter().enumerate() {
            let d = squared_l2(s, &samples[far]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen.into_iter().map(|i| samples[i].clone()).collect()
}

/// Replaces each empty cluster's centroid with the member of the currently
/// largest cluster that lies farthest from that cluster's centroid. Donated
/// points are not reused within the same pass.
fn reseed_empty_clusters(
    samples: &[Vec<f32>],
    assignment: &[usize],
    counts: &[usize],
    centroids: &mut [Vec<f32>],
) {
    let k = centroids.len();
    let mut counts = counts.to_vec();
    let mut donated = vec![false; samples.len()];

    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let Some(donor) = (0..k)
            .filter(|&d| counts[d] > 1)
            .max_by_key(|&d| (counts[d], usize::MAX - d))
        else {
            continue;
        };
        let mut far: Option<usize> = None;
        let mut far_d = -1.0f32;
        for (i, &a) in assignment.iter().enumerate() {
            if a != donor || donated[i] {
                continue;
            }
            let d = squared_l2(&samples[i], &centroids[donor]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            centroids[c] = samples[i].clone();
            donated[i] = true;
            counts[donor] -= 1;
            counts[c] += 1;
        }
    }
}
