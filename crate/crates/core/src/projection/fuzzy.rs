use std::collections::BTreeMap;

use super::knn::NeighborGraph;
use crate::scalar::Real;

/// Bandwidth search stops once the membership sum is this close to `log2(k)`.
const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowCalibration<T> {
    pub rho: T,
    pub sigma: T,
    /// `|Σ_j exp(−max(0, d_j − ρ)/σ) − log2(k)|` at the returned σ.
    pub residual: T,
    /// The target was outside what the clamp bounds can reach.
    pub degenerate: bool,
}

fn membership_sum<T: Real>(distances: &[T], rho: T, sigma: T) -> T {
    distances
        .iter()
        .map(|&d| (-(d - rho).max(T::zero()) / sigma).exp())
        .sum()
}

/// Finds σ with `Σ_j exp(−max(0, d_j − ρ)/σ) = log2(k)` by bisection,
/// clamped to `[1e−3·mean(d), 1e3·mean(d)]`.
///
/// `distances` must be non-empty and ascending. A row of all-zero distances
/// uses unit scale for the clamp bounds.
pub fn calibrate_row<T: Real>(distances: &[T]) -> RowCalibration<T> {
    assert!(!distances.is_empty(), "calibrate_row needs at least one distance");
    let k = distances.len();
    let rho = distances[0];
    let target = T::of_usize(k).log2();
    let mean = distances.iter().copied().sum::<T>() / T::of_usize(k);
    let scale = if mean > T::zero() { mean } else { T::one() };
    let lo_bound = T::lit(1e-3) * scale;
    let hi_bound = T::lit(1e3) * scale;
    let tol = T::lit(SIGMA_TOLERANCE);

    let at = |sigma: T| membership_sum(distances, rho, sigma) - target;
    let finish = |sigma: T, degenerate: bool| RowCalibration {
        rho,
        sigma,
        residual: at(sigma).abs(),
        degenerate,
    };

    // the sum is non-decreasing in σ
    let f_lo = at(lo_bound);
    if f_lo >= -tol {
        return finish(lo_bound, f_lo > tol);
    }
    let f_hi = at(hi_bound);
    if f_hi <= tol {
        return finish(hi_bound, f_hi < -tol);
    }

    // bisect in log space; the bracket spans six decades
    let (mut lo, mut hi) = (lo_bound.ln(), hi_bound.ln());
    let mut best = hi_bound;
    let mut best_res = f_hi.abs();
    let two = T::lit(2.0);
    for _ in 0..SIGMA_MAX_ITER {
        let mid = (lo + hi) / two;
        let sigma = mid.exp();
        let f = at(sigma);
        if f.abs() < best_res {
            best = sigma;
            best_res = f.abs();
        }
        if f.abs() <= tol {
            break;
        }
        if f < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() {
            break;
        }
    }
    finish(best, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub weight: T,
}

/// Symmetric weighted graph stored once per unordered pair (`i < j`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T> {
    pub ids: Vec<u64>,
    edges: Vec<Edge<T>>,
}

impl<T: Real> WeightedGraph<T> {
    /// Builds a graph from undirected edges; later duplicates of a pair overwrite earlier ones.
    pub fn from_edges(ids: Vec<u64>, edges: impl IntoIterator<Item = Edge<T>>) -> Self {
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for e in edges {
            assert!(e.i != e.j, "self edge at {}", e.i);
            assert!(e.i < ids.len() && e.j < ids.len(), "edge endpoint out of range");
            map.insert((e.i.min(e.j), e.i.max(e.j)), e.weight);
        }
        Self {
            ids,
            edges: map
                .into_iter()
                .map(|((i, j), weight)| Edge { i, j, weight })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Edges with `i < j`, ordered by `(i, j)`.
    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<T> {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .ok()
            .map(|p| self.edges[p].weight)
    }

    pub fn degrees(&self) -> Vec<T> {
        let mut deg = vec![T::zero(); self.n()];
        for e in &self.edges {
            deg[e.i] += e.weight;
            deg[e.j] += e.weight;
        }
        deg
    }

    /// Connected-component label per vertex (labels are smallest member index).
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.n()).map(|x| find(&mut parent, x)).collect()
    }
}

fn t_conorm<T: Real>(p: T, q: T) -> T {
    // exact 1 when either side is certain
    if p == T::one() || q == T::one() {
        T::one()
    } else {
        p + q - p * q
    }
}

/// Directed memberships `p_{j|i} = exp(−max(0, d_ij − ρ_i)/σ_i)` combined by the
/// probabilistic t-conorm `w = p + q − p·q`. Pairs whose weight underflows to 0 are dropped.
pub fn fuzzy_simplicial_set<T: Real>(graph: &NeighborGraph<T>) -> WeightedGraph<T> {
    let mut directed: BTreeMap<(usize, usize), (T, T)> = BTreeMap::new();
    for i in 0..graph.len() {
        let (nb, ds) = graph.row(i);
        let (rho, sigma) = (graph.rhos[i], graph.sigmas[i]);
        for (&j, &d) in nb.iter().zip(ds) {
            if i == j {
                continue;
            }
            let p = (-(d - rho).max(T::zero()) / sigma).exp();
            let slot = directed
                .entry((i.min(j), i.max(j)))
                .or_insert((T::zero(), T::zero()));
            if i < j {
                slot.0 = p;
            } else {
                slot.1 = p;
            }
        }
    }
    let edges = directed
        .into_iter()
        .map(|((i, j), (p, q))| Edge {
            i,
            j,
            weight: t_conorm(p, q),
        })
        .filter(|e| e.weight > T::zero());
    WeightedGraph::from_edges(graph.ids.clone(), edges)
}
