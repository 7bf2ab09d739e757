use rand::Rng;

use super::{AnalysisError, Result};
use crate::embedding::Matrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// Inertia after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // Every point coincides with a centroid; take any unused index.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.gen_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

/// k-means over the rows of `points` with k-means++ seeding. Empty clusters
/// take the point farthest from its centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(AnalysisError::KOutOfRange { k, t: n });
    }
    let dim = points.cols();
    let mut rng = seed::rng(seed::derive(seed, "kmeans"));
    let mut centroids = Matrix::zeros(k, dim);
    for (c, &i) in seed_centroids(points, k, &mut rng).iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }

    let mut assignments = vec![usize::MAX; n];
    let mut inertia_history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut next: Vec<usize> = (0..n)
            .map(|i| {
                (0..k)
                    .map(|c| (c, sq_dist(points.row(i), centroids.row(c))))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .expect("k >= 1")
                    .0
            })
            .collect();

        let mut sizes = vec![0usize; k];
        for &c in &next {
            sizes[c] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(points.row(a), centroids.row(next[a]));
                    let db = sq_dist(points.row(b), centroids.row(next[b]));
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("k <= n leaves a cluster with two points");
            sizes[next[far]] -= 1;
            sizes[empty] = 1;
            next[far] = empty;
        }

        let mut sums = Matrix::zeros(k, dim);
        for (i, &c) in next.iter().enumerate() {
            for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for (c, &size) in sizes.iter().enumerate() {
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / size as f64;
            }
        }
        let inertia = (0..n).map(|i| sq_dist(points.row(i), centroids.row(next[i]))).sum();
        inertia_history.push(inertia);

        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history,
    })
}

/// `type,cluster` rows.
pub fn kmeans_csv(labels: &[String], assignments: &[usize]) -> String {
    let mut out = String::from("type,cluster\n");
    for (l, c) in labels.iter().zip(assignments) {
        out.push_str(&format!("{l},{c}\n"));
    }
    out
}
