use rayon::prelude::*;

use super::knn::distance;
use super::{Metric, Projection2D, ProjectionError};
use crate::catalog::EmbeddingSet;
use crate::scalar::Real;

fn order_by_distance<T: Real>(dists: &[T], skip: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).filter(|&j| j != skip).collect();
    idx.sort_by(|&x, &y| {
        dists[x]
            .partial_cmp(&dists[y])
            .expect("finite distances")
            .then(x.cmp(&y))
    });
    idx
}

/// Trustworthiness of `proj` with respect to `embeddings` over the embedding ids.
pub fn trustworthiness<T: Real>(
    embeddings: &EmbeddingSet<T>,
    proj: &Projection2D<T>,
    k: usize,
    metric: Metric,
) -> Result<f64, ProjectionError> {
    let low = embeddings
        .ids()
        .iter()
        .map(|&id| {
            proj.coord(id)
                .map(|c| c.to_vec())
                .ok_or(ProjectionError::MissingCoordinate(id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let high: Vec<&[T]> = embeddings.rows().map(|(_, r)| r).collect();
    let low: Vec<&[T]> = low.iter().map(Vec::as_slice).collect();
    trustworthiness_rows(&high, &low, k, metric)
}

/// `1 − 2/(n·k·(2n − 3k − 1)) · Σ_i Σ_{j ∈ U_k(i)} (r(i, j) − k)` where `U_k(i)` are
/// the low-dimensional neighbors of `i` that are not among its `k` high-dimensional
/// neighbors and `r(i, j)` is the high-dimensional rank (nearest = 1). Ties are
/// broken by index. The low-dimensional side is always Euclidean.
pub fn trustworthiness_rows<T: Real>(
    high: &[&[T]],
    low: &[&[T]],
    k: usize,
    metric: Metric,
) -> Result<f64, ProjectionError> {
    let n = high.len();
    assert_eq!(n, low.len(), "high and low point counts differ");
    if k == 0 || 2 * n < 3 * k + 2 {
        return Err(ProjectionError::KOutOfRange { k, n });
    }
    let penalties: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hd: Vec<T> = (0..n).map(|j| distance(metric, high[i], high[j])).collect();
            let mut rank = vec![0usize; n];
            for (r, j) in order_by_distance(&hd, i).into_iter().enumerate() {
                rank[j] = r + 1;
            }
            let ld: Vec<T> = (0..n)
                .map(|j| distance(Metric::Euclidean, low[i], low[j]))
                .collect();
            order_by_distance(&ld, i)
                .into_iter()
                .take(k)
                .map(|j| rank[j].saturating_sub(k))
                .sum()
        })
        .collect();
    let total: usize = penalties.iter().sum();
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total as f64)
}

/// Mean silhouette coefficient of `labels` over Euclidean `points`.
/// Points in singleton clusters score 0.
pub fn silhouette_score<T: Real>(points: &[&[T]], labels: &[usize]) -> f64 {
    assert_eq!(points.len(), labels.len());
    let n = points.len();
    let n_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0f64; n_labels];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += distance(Metric::Euclidean, points[i], points[j]).as_f64();
                }
            }
            let own = labels[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..n_labels)
                .filter(|&l| l != own && sizes[l] > 0)
                .map(|l| sums[l] / sizes[l] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    scores.iter().sum::<f64>() / n as f64
}
