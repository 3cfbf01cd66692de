//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MmclError, Result};
use crate::linalg::Mat;

pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Mat,
    pub inertia: f64,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid (lowest index on ties).
pub fn nearest(point: &[f64], centroids: &Mat) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = points.rows();
    let mut centroids = Mat::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(points: &Mat, mut centroids: Mat) -> (Vec<usize>, Mat, f64) {
    let (n, dim) = points.shape();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids);
            dist[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Mat::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, bd)) if bd >= dist[i] => best,
                        _ => Some((i, dist[i])),
                    });
                if let Some((i, _)) = far {
                    taken[i] = true;
                    centroids.row_mut(c).copy_from_slice(points.row(i));
                }
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(labels[i])))
        .sum();
    (labels, centroids, inertia)
}

/// Clusters the rows of `points`; restart `t` draws its seeding from the
/// ChaCha stream `t` of `seed`. The lowest-inertia restart wins, ties going
/// to the earliest restart.
pub fn kmeans(points: &Mat, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.rows() {
        return Err(MmclError::InvalidK {
            k,
            reason: format!("cannot form {k} clusters from {} points", points.rows()),
        });
    }
    let restarts = restarts.max(1);
    let mut best: Option<KMeansResult> = None;
    for t in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let init = plus_plus_init(points, k, &mut rng);
        let (labels, centroids, inertia) = lloyd(points, init);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansResult {
                labels,
                centroids,
                inertia,
                restart: t,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
