use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{l2_squared, Embedding};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Embedding>,
    /// Cluster index of each input point.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after every assignment step.
    pub wcss_history: Vec<f64>,
}

/// Lloyd's k-means with seeded k-means++ initialization.
///
/// Runs `iters` assign/update rounds, then a final assignment so every point
/// sits with its nearest centroid (ties to the lower index). A centroid left
/// without points is re-seeded at the point farthest from its own centroid.
pub fn kmeans(points: &[Embedding], k: usize, iters: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || iters == 0 {
        return Err(Error::InvalidParameter(format!("k-means needs k >= 1 and iters >= 1 (got k={k}, iters={iters})")));
    }
    if k > points.len() {
        return Err(Error::TooFewPoints { k, points: points.len() });
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: p.dim() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut wcss_history = Vec::with_capacity(iters + 1);

    let (mut assignment, mut dists) = assign(points, &centroids);
    wcss_history.push(wcss(&dists));
    for _ in 0..iters {
        update(points, &assignment, &mut dists, &mut centroids);
        (assignment, dists) = assign(points, &centroids);
        wcss_history.push(wcss(&dists));
    }

    // Repair clusters still empty after the last round. Duplicated points can
    // make this impossible, so the number of attempts is bounded.
    for _ in 0..k {
        let empty = empty_clusters(&assignment, k);
        if empty.is_empty() || !reseed(points, &empty, &mut dists, &mut centroids) {
            break;
        }
        (assignment, dists) = assign(points, &centroids);
        wcss_history.push(wcss(&dists));
    }

    Ok(KMeansResult { centroids, assignment, wcss_history })
}

fn plus_plus_init(points: &[Embedding], k: usize, rng: &mut ChaCha8Rng) -> Vec<Embedding> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| l2_squared(p.as_slice(), points[first].as_slice()) as f64).collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 || chosen[i] {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight implies a candidate")
        } else {
            // All remaining points coincide with a chosen centroid.
            chosen.iter().position(|c| !c).expect("k <= n")
        };
        chosen[pick] = true;
        let c = points[pick].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(l2_squared(p.as_slice(), c.as_slice()) as f64);
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid per point (lowest index on ties) and its distance.
fn assign(points: &[Embedding], centroids: &[Embedding]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f32::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d = l2_squared(p.as_slice(), c.as_slice());
                if d < best_d {
                    best = ci;
                    best_d = d;
                }
            }
            (best, best_d as f64)
        })
        .unzip()
}

fn wcss(dists: &[f64]) -> f64 {
    dists.iter().sum()
}

fn update(points: &[Embedding], assignment: &[usize], dists: &mut [f64], centroids: &mut [Embedding]) {
    let k = centroids.len();
    let dim = centroids[0].dim();
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p.as_slice()) {
            *s += *v as f64;
        }
    }
    for (c, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
        if count > 0 {
            centroids[c] = mean_of(sum, count);
        }
    }
    let empty = empty_clusters(assignment, k);
    if !empty.is_empty() {
        reseed(points, &empty, dists, centroids);
    }
}

pub(crate) fn mean_of(sum: &[f64], count: usize) -> Embedding {
    Embedding::from_finite(sum.iter().map(|s| (s / count as f64) as f32).collect())
}

fn empty_clusters(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &c in assignment {
        counts[c] += 1;
    }
    (0..k).filter(|&c| counts[c] == 0).collect()
}

/// Moves each empty centroid onto the point currently farthest from its own
/// centroid. Returns false when no point with positive distance remains.
fn reseed(points: &[Embedding], empty: &[usize], dists: &mut [f64], centroids: &mut [Embedding]) -> bool {
    let mut moved = false;
    for &c in empty {
        let mut far = None;
        for (i, &d) in dists.iter().enumerate() {
            if d > 0.0 && far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        centroids[c] = points[i].clone();
        dists[i] = 0.0;
        moved = true;
    }
    moved
}
