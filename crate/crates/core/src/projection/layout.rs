use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::curve::fit_curve;
use super::fuzzy::WeightedGraph;
use super::{Projection2D, ProjectionConfig, ProjectionError, ViewMode};
use crate::scalar::Real;

const INIT_EXTENT: f64 = 10.0;
const GRAD_CLIP: f64 = 4.0;
const SPECTRAL_MAX_ITER: usize = 1000;
const SPECTRAL_TOL: f64 = 1e-10;

/// Stochastic layout optimization of the fuzzy graph in the plane.
///
/// Edge `(i, j)` with weight `w` keeps a deterministic counter that advances by
/// `1/w`, so it is visited in about `w · n_epochs` epochs in total; a visit applies the attractive update in both directions,
/// each followed by `negative_sample_rate` repulsive updates against uniformly
/// drawn vertices. The learning rate decays linearly to zero. The same seed and
/// graph give bit-identical coordinates.
pub fn optimize_layout<T: Real>(
    graph: &WeightedGraph<T>,
    config: &ProjectionConfig,
    view_mode: ViewMode,
) -> Result<Projection2D<T>, ProjectionError> {
    config.validate()?;
    let fit = fit_curve(config.min_dist, config.spread)?;
    let (a, b) = (T::lit(fit.a), T::lit(fit.b));
    let n = graph.n();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pos = initial_layout(graph, &mut rng);

    let periods: Vec<f64> = graph.edges().iter().map(|e| 1.0 / e.weight.as_f64()).collect();
    let mut next_visit = periods.clone();

    let clip = |v: T| v.max(T::lit(-GRAD_CLIP)).min(T::lit(GRAD_CLIP));
    let two = T::lit(2.0);
    let eps = T::lit(1e-3);

    for epoch in 0..config.n_epochs {
        let alpha = T::lit(
            config.initial_learning_rate * (1.0 - epoch as f64 / config.n_epochs as f64),
        );
        for (ei, edge) in graph.edges().iter().enumerate() {
            if next_visit[ei] > (epoch + 1) as f64 {
                continue;
            }
            next_visit[ei] += periods[ei];
            for (head, tail) in [(edge.i, edge.j), (edge.j, edge.i)] {
                let diff = [pos[head][0] - pos[tail][0], pos[head][1] - pos[tail][1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                if d2 > T::zero() {
                    let coeff = -two * a * b * d2.powf(b - T::one()) / (a * d2.powf(b) + T::one());
                    for d in 0..2 {
                        let g = clip(coeff * diff[d]) * alpha;
                        pos[head][d] += g;
                        pos[tail][d] -= g;
                    }
                }
                for _ in 0..config.negative_sample_rate {
                    let other = rng.random_range(0..n);
                    if other == head {
                        continue;
                    }
                    let diff = [pos[head][0] - pos[other][0], pos[head][1] - pos[other][1]];
                    let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                    let coeff = if d2 > T::zero() {
                        two * b / ((eps + d2) * (a * d2.powf(b) + T::one()))
                    } else {
                        T::zero()
                    };
                    for d in 0..2 {
                        let g = if coeff > T::zero() {
                            clip(coeff * diff[d])
                        } else {
                            T::lit(GRAD_CLIP)
                        };
                        pos[head][d] += g * alpha;
                    }
                }
            }
        }
    }

    debug_assert!(pos.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
    Ok(Projection2D::new(
        view_mode,
        graph.ids.iter().copied().zip(pos),
        Some(config.clone()),
        fit.a,
        fit.b,
    ))
}

/// Spectral embedding of the normalized graph Laplacian when exactly one
/// component has more than one vertex; seeded uniform in `[−10, 10]²` otherwise.
/// Isolated vertices always keep their uniform position.
fn initial_layout<T: Real>(graph: &WeightedGraph<T>, rng: &mut ChaCha8Rng) -> Vec<[T; 2]> {
    let n = graph.n();
    let mut pos: Vec<[T; 2]> = (0..n)
        .map(|_| {
            [
                T::lit(rng.random_range(-INIT_EXTENT..=INIT_EXTENT)),
                T::lit(rng.random_range(-INIT_EXTENT..=INIT_EXTENT)),
            ]
        })
        .collect();

    let comps = graph.components();
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &c in &comps {
        *sizes.entry(c).or_default() += 1;
    }
    let mut nontrivial = sizes.iter().filter(|(_, &s)| s > 1);
    let (Some((&root, _)), None) = (nontrivial.next(), nontrivial.next()) else {
        return pos;
    };
    let members: Vec<usize> = (0..n).filter(|&v| comps[v] == root).collect();
    if let Some(coords) = spectral_coords(graph, &members, rng) {
        for (&v, c) in members.iter().zip(coords) {
            pos[v] = [T::lit(c[0]), T::lit(c[1])];
        }
    }
    pos
}

fn spectral_coords<T: Real>(
    graph: &WeightedGraph<T>,
    members: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<[f64; 2]>> {
    let m = members.len();
    if m < 4 {
        return None;
    }
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(l, &v)| (v, l)).collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for e in graph.edges() {
        if let (Some(&li), Some(&lj)) = (local.get(&e.i), local.get(&e.j)) {
            let w = e.weight.as_f64();
            adj[li].push((lj, w));
            adj[lj].push((li, w));
        }
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().map(|x| x.1).sum()).collect();
    let dinv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let v0_norm = deg.iter().sum::<f64>().sqrt();
    let v0: Vec<f64> = deg.iter().map(|d| d.sqrt() / v0_norm).collect();

    // (I + D^-1/2 W D^-1/2) / 2, spectrum in [0, 1]
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let s: f64 = adj[i].iter().map(|&(j, w)| w * dinv[j] * x[j]).sum();
                0.5 * (x[i] + dinv[i] * s)
            })
            .collect()
    };
    let dotf = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let orthonormalize = |mut x: Vec<Vec<f64>>| -> Option<Vec<Vec<f64>>> {
        for c in 0..x.len() {
            let mut basis: Vec<&[f64]> = vec![&v0];
            let (done, rest) = x.split_at_mut(c);
            basis.extend(done.iter().map(|v| v.as_slice()));
            let col = &mut rest[0];
            // two passes of Gram–Schmidt for stability
            for _ in 0..2 {
                for q in &basis {
                    let p = dotf(col, q);
                    col.iter_mut().zip(q.iter()).for_each(|(a, b)| *a -= p * b);
                }
            }
            let nrm = dotf(col, col).sqrt();
            if !(nrm > 1e-12) {
                return None;
            }
            col.iter_mut().for_each(|a| *a /= nrm);
        }
        Some(x)
    };

    let start: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut x = orthonormalize(start)?;
    for _ in 0..SPECTRAL_MAX_ITER {
        let y = orthonormalize(x.iter().map(|c| apply(c)).collect())?;
        let change = x
            .iter()
            .zip(&y)
            .map(|(a, b)| 1.0 - dotf(a, b).abs())
            .fold(0.0f64, f64::max);
        x = y;
        if change < SPECTRAL_TOL {
            break;
        }
    }

    // Rayleigh–Ritz on the 2-dimensional subspace
    let ax: Vec<Vec<f64>> = x.iter().map(|c| apply(c)).collect();
    let (h11, h12, h22) = (dotf(&x[0], &ax[0]), dotf(&x[0], &ax[1]), dotf(&x[1], &ax[1]));
    let theta = 0.5 * (2.0 * h12).atan2(h11 - h22);
    let (c, s) = (theta.cos(), theta.sin());
    let mut coords: Vec<[f64; 2]> = (0..m)
        .map(|i| [c * x[0][i] + s * x[1][i], -s * x[0][i] + c * x[1][i]])
        .collect();

    let max_abs = coords
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return None;
    }
    let scale = INIT_EXTENT / max_abs;
    for p in &mut coords {
        for v in p.iter_mut() {
            *v = *v * scale + rng.random_range(-1e-4..1e-4);
        }
    }
    Some(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::fuzzy::Edge;

    fn ring(n: usize) -> WeightedGraph<f64> {
        WeightedGraph::from_edges(
            (0..n as u64).collect(),
            (0..n).map(|i| Edge {
                i,
                j: (i + 1) % n,
                weight: 1.0,
            }),
        )
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = ProjectionConfig {
            n_epochs: 50,
            seed: 11,
            ..Default::default()
        };
        let a = optimize_layout(&ring(30), &cfg, ViewMode::SemanticText).unwrap();
        let b = optimize_layout(&ring(30), &cfg, ViewMode::SemanticText).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
    }

    #[test]
    fn spectral_init_of_ring_is_a_circle() {
        let g = ring(40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = spectral_coords(&g, &(0..40).collect::<Vec<_>>(), &mut rng).unwrap();
        let radii: Vec<f64> = c.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
        let (lo, hi) = radii
            .iter()
            .fold((f64::MAX, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi - lo < 0.05 * hi, "radii spread {lo}..{hi}");
    }

    #[test]
    fn isolated_vertices_stay_finite() {
        let g = WeightedGraph::from_edges(
            (0..5).collect(),
            [Edge {
                i: 0,
                j: 1,
                weight: 1.0f32,
            }],
        );
        let p = optimize_layout(&g, &ProjectionConfig::default(), ViewMode::SemanticImage).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.all_finite());
    }
}
