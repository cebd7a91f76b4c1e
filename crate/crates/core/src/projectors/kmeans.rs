//! Lloyd's k-means with k-means++ seeding, used to place centroids in the
//! latent spaces that have no codebooks of their own (PCA, kernel PCA).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CentroidSet;
use crate::error::{Error, Result};
use crate::linalg::sq_dist;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: CentroidSet,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // every point coincides with a chosen centre
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    if k < 2 {
        return Err(Error::config(format!("k-means needs K >= 2, got {k}")));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::format("k-means input", "points have different dimensions"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut dists = vec![0.0; points.len()];
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        history.push(dists.iter().sum());
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed at the point worst served by its current centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                centroids[c] = points[far].clone();
                dists[far] = 0.0;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    Ok(KMeansFit {
        centroids: CentroidSet::new(centroids)?,
        assignments,
        objective_history: history,
    })
}
