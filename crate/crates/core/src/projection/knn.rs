use rayon::prelude::*;

use super::fuzzy::calibrate_row;
use super::{Metric, ProjectionConfig, ProjectionError};
use crate::catalog::EmbeddingSet;
use crate::scalar::{dot, norm, sq_dist, Real};

/// Exact k nearest neighbors with per-row smooth-kNN calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph<T> {
    pub ids: Vec<u64>,
    pub k: usize,
    /// Row-major `n × k` neighbor positions (indices into `ids`).
    pub neighbors: Vec<usize>,
    /// Row-major `n × k` distances, ascending per row.
    pub distances: Vec<T>,
    pub rhos: Vec<T>,
    pub sigmas: Vec<T>,
    /// Rows whose bandwidth target was unreachable and got clamped.
    pub degenerate: Vec<bool>,
}

impl<T: Real> NeighborGraph<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.neighbors[r.clone()], &self.distances[r])
    }
}

/// Distance under `metric`. Cosine distance is `1 − cos`; a zero vector sits at
/// distance 1 from any nonzero vector and 0 from another zero vector.
pub fn distance<T: Real>(metric: Metric, a: &[T], b: &[T]) -> T {
    match metric {
        Metric::Euclidean => sq_dist(a, b).sqrt(),
        Metric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == T::zero() && nb == T::zero() {
                T::zero()
            } else if na == T::zero() || nb == T::zero() {
                T::one()
            } else {
                (T::one() - dot(a, b) / (na * nb)).max(T::zero())
            }
        }
    }
}

/// Brute-force k-NN. Ties are broken by ascending id, which is row order.
pub fn knn_graph<T: Real>(
    embeddings: &EmbeddingSet<T>,
    config: &ProjectionConfig,
) -> Result<NeighborGraph<T>, ProjectionError> {
    config.validate()?;
    let n = embeddings.len();
    let k = config.n_neighbors;
    if n <= k {
        return Err(ProjectionError::TooFewItems { n, k });
    }
    let rows: Vec<(Vec<usize>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = embeddings.row_at(i);
            let mut cand: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (distance(config.metric, xi, embeddings.row_at(j)), j))
                .collect();
            let cmp = |a: &(T, usize), b: &(T, usize)| {
                a.0.partial_cmp(&b.0)
                    .expect("finite distances")
                    .then(a.1.cmp(&b.1))
            };
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_by(cmp);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();

    let mut graph = NeighborGraph {
        ids: embeddings.ids().to_vec(),
        k,
        neighbors: Vec::with_capacity(n * k),
        distances: Vec::with_capacity(n * k),
        rhos: Vec::with_capacity(n),
        sigmas: Vec::with_capacity(n),
        degenerate: Vec::with_capacity(n),
    };
    for (nb, ds) in rows {
        let cal = calibrate_row(&ds);
        graph.rhos.push(cal.rho);
        graph.sigmas.push(cal.sigma);
        graph.degenerate.push(cal.degenerate);
        graph.neighbors.extend(nb);
        graph.distances.extend(ds);
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_set(xs: &[f64]) -> EmbeddingSet<f64> {
        EmbeddingSet::from_rows(
            1,
            xs.iter().enumerate().map(|(i, &x)| (i as u64, vec![x])),
        )
        .unwrap()
    }

    fn cfg(k: usize) -> ProjectionConfig {
        ProjectionConfig {
            n_neighbors: k,
            ..Default::default()
        }
    }

    #[test]
    fn colinear_points() {
        let g = knn_graph(&line_set(&[0.0, 1.0, 2.0, 4.0]), &cfg(2)).unwrap();
        let (nb, d) = g.row(0);
        assert_eq!(nb, &[1, 2]);
        assert_eq!(d, &[1.0, 2.0]);
        assert_eq!(g.rhos[0], 1.0);
    }

    #[test]
    fn duplicates_list_each_other_first() {
        let g = knn_graph(&line_set(&[5.0, 0.0, 5.0, 9.0]), &cfg(2)).unwrap();
        assert_eq!(g.row(0).0[0], 2);
        assert_eq!(g.row(0).1[0], 0.0);
        assert_eq!(g.row(2).0[0], 0);
    }

    #[test]
    fn ties_by_ascending_id() {
        // neighbors of 0 at distance 1: ids 1 and 2 on both sides
        let g = knn_graph(&line_set(&[0.0, -1.0, 1.0, 10.0]), &cfg(2)).unwrap();
        assert_eq!(g.row(0).0, &[1, 2]);
    }

    #[test]
    fn too_few_items() {
        let err = knn_graph(&line_set(&[0.0, 1.0]), &cfg(2)).unwrap_err();
        assert!(matches!(err, ProjectionError::TooFewItems { n: 2, k: 2 }));
    }

    #[test]
    fn cosine_distance_cases() {
        assert_eq!(distance(Metric::Cosine, &[1.0, 0.0], &[2.0, 0.0]), 0.0);
        assert!((distance(Metric::Cosine, &[1.0, 0.0], &[0.0, 3.0]) - 1.0f64).abs() < 1e-15);
        assert_eq!(distance(Metric::Cosine, &[0.0, 0.0], &[0.0, 3.0]), 1.0);
        assert_eq!(distance(Metric::Cosine, &[0.0f64, 0.0], &[0.0, 0.0]), 0.0);
    }
}
