//! Static 2-d KD-tree over projected points, viewport queries, hash-ordered
//! granularity sampling and greedy screen-space clustering.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::mix64;
use crate::projection::Projection2D;
use crate::scalar::Real;

pub const DEFAULT_RADIUS_PX: f64 = 24.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("invalid rectangle: need x_min < x_max and y_min < y_max")]
    InvalidRect,
    #[error("pixel dimensions must be positive")]
    InvalidPixels,
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("granularity must lie in [0, 1], got {0}")]
    InvalidGranularity(f64),
}

/// Closed axis-aligned rectangle in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Real> Rect<T> {
    /// Allows degenerate (zero-width) rectangles; they select points on a line.
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T) -> Result<Self, SpatialError> {
        if !(x_min <= x_max && y_min <= y_max) || [x_min, x_max, y_min, y_max].iter().any(|v| !v.is_finite()) {
            return Err(SpatialError::InvalidRect);
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point<T> {
    x: T,
    y: T,
    id: u64,
}

impl<T: Real> Point<T> {
    fn coord(&self, axis: usize) -> T {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }
}

fn cmp_on<T: Real>(a: &Point<T>, b: &Point<T>, axis: usize) -> Ordering {
    a.coord(axis)
        .partial_cmp(&b.coord(axis))
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

/// Balanced KD-tree stored implicitly: every subslice has its splitting point
/// at index `len / 2`, smaller keys to the left. Depth 0 splits on x.
#[derive(Debug, Clone)]
pub struct KdTree2D<T> {
    points: Vec<Point<T>>,
}

fn build<T: Real>(pts: &mut [Point<T>], axis: usize) {
    if pts.len() <= 1 {
        return;
    }
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| cmp_on(a, b, axis));
    let (left, right) = pts.split_at_mut(mid);
    build(left, 1 - axis);
    build(&mut right[1..], 1 - axis);
}

impl<T: Real> KdTree2D<T> {
    pub fn build(points: impl IntoIterator<Item = (u64, [T; 2])>) -> Self {
        let mut pts: Vec<Point<T>> = points
            .into_iter()
            .map(|(id, [x, y])| Point { x, y, id })
            .collect();
        build(&mut pts, 0);
        Self { points: pts }
    }

    pub fn from_projection(projection: &Projection2D<T>) -> Self {
        Self::build(projection.points())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of levels: 0 for an empty tree, `⌈log2(n + 1)⌉` otherwise.
    pub fn depth(&self) -> usize {
        fn depth(n: usize) -> usize {
            if n == 0 {
                0
            } else {
                let mid = n / 2;
                1 + depth(mid).max(depth(n - mid - 1))
            }
        }
        depth(self.points.len())
    }

    pub fn position(&self, id: u64) -> Option<[T; 2]> {
        self.points.iter().find(|p| p.id == id).map(|p| [p.x, p.y])
    }

    /// All `(id, [x, y])` in tree order.
    pub fn points(&self) -> impl Iterator<Item = (u64, [T; 2])> + '_ {
        self.points.iter().map(|p| (p.id, [p.x, p.y]))
    }

    /// Ids of the points inside the closed rectangle, ascending.
    pub fn range_query(&self, rect: &Rect<T>) -> Vec<u64> {
        let mut out = Vec::new();
        self.range_into(&self.points, 0, rect, &mut out);
        out.sort_unstable();
        out
    }

    fn range_into(&self, pts: &[Point<T>], axis: usize, rect: &Rect<T>, out: &mut Vec<u64>) {
        if pts.is_empty() {
            return;
        }
        let mid = pts.len() / 2;
        let p = &pts[mid];
        if rect.contains(p.x, p.y) {
            out.push(p.id);
        }
        let (lo, hi) = if axis == 0 {
            (rect.x_min, rect.x_max)
        } else {
            (rect.y_min, rect.y_max)
        };
        let key = p.coord(axis);
        // ties may sit on either side of the split, so both comparisons are inclusive
        if lo <= key {
            self.range_into(&pts[..mid], 1 - axis, rect, out);
        }
        if hi >= key {
            self.range_into(&pts[mid + 1..], 1 - axis, rect, out);
        }
    }

    /// The `k` points nearest to `(x, y)` as `(id, distance)`, ordered by
    /// distance then id.
    pub fn nearest(&self, x: T, y: T, k: usize) -> Vec<(u64, T)> {
        let mut best: Vec<(T, u64)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.nearest_into(&self.points, 0, x, y, k, &mut best);
        }
        best.into_iter().map(|(d, id)| (id, d.sqrt())).collect()
    }

    fn nearest_into(&self, pts: &[Point<T>], axis: usize, x: T, y: T, k: usize, best: &mut Vec<(T, u64)>) {
        if pts.is_empty() {
            return;
        }
        let mid = pts.len() / 2;
        let p = &pts[mid];
        let d2 = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
        let cand = (d2, p.id);
        let pos = best.partition_point(|b| b.0 < cand.0 || (b.0 == cand.0 && b.1 < cand.1));
        if pos < k {
            best.insert(pos, cand);
            best.truncate(k);
        }
        let diff = if axis == 0 { x - p.x } else { y - p.y };
        let (near, far) = if diff < T::zero() {
            (&pts[..mid], &pts[mid + 1..])
        } else {
            (&pts[mid + 1..], &pts[..mid])
        };
        self.nearest_into(near, 1 - axis, x, y, k, best);
        if best.len() < k || diff * diff <= best[best.len() - 1].0 {
            self.nearest_into(far, 1 - axis, x, y, k, best);
        }
    }
}

/// The first `⌈g·n⌉` ids in the fixed hash order, returned ascending.
/// Nested: a smaller `g` always selects a subset of a larger one.
pub fn granularity_sample(ids: &[u64], g: f64) -> Result<Vec<u64>, SpatialError> {
    if !(0.0..=1.0).contains(&g) {
        return Err(SpatialError::InvalidGranularity(g));
    }
    let take = ((g * ids.len() as f64).ceil() as usize).min(ids.len());
    let mut keyed: Vec<(u64, u64)> = ids.iter().map(|&id| (mix64(id), id)).collect();
    keyed.sort_unstable();
    let mut out: Vec<u64> = keyed[..take].iter().map(|&(_, id)| id).collect();
    out.sort_unstable();
    Ok(out)
}

/// A world rectangle mapped onto a `width × height` pixel canvas with y
/// pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub world: Rect<f64>,
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn new(world: Rect<f64>, width: u32, height: u32) -> Result<Self, SpatialError> {
        if !(world.x_min < world.x_max && world.y_min < world.y_max) {
            return Err(SpatialError::InvalidRect);
        }
        if width == 0 || height == 0 {
            return Err(SpatialError::InvalidPixels);
        }
        Ok(Self { world, width, height })
    }

    pub fn to_pixels(&self, x: f64, y: f64) -> (f64, f64) {
        let w = &self.world;
        (
            (x - w.x_min) / (w.x_max - w.x_min) * self.width as f64,
            (w.y_max - y) / (w.y_max - w.y_min) * self.height as f64,
        )
    }

    fn rect<T: Real>(&self) -> Rect<T> {
        Rect {
            x_min: T::lit(self.world.x_min),
            x_max: T::lit(self.world.x_max),
            y_min: T::lit(self.world.y_min),
            y_max: T::lit(self.world.y_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub px: f64,
    pub py: f64,
    pub count: usize,
    pub members: Vec<u64>,
    pub representative: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Single {
    pub px: f64,
    pub py: f64,
    pub id: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterBatch {
    pub clusters: Vec<Cluster>,
    pub singles: Vec<Single>,
}

impl ClusterBatch {
    /// Number of points represented.
    pub fn point_count(&self) -> usize {
        self.clusters.iter().map(|c| c.count).sum::<usize>() + self.singles.len()
    }
}

pub fn viewport_clusters<T: Real>(
    tree: &KdTree2D<T>,
    viewport: &Viewport,
    radius_px: f64,
    g: f64,
) -> Result<ClusterBatch, SpatialError> {
    viewport_clusters_where(tree, viewport, radius_px, g, |_| true)
}

/// Visible points passing `keep` are granularity-sampled, mapped to pixels
/// and clustered greedily: seeds are visited in ascending id and each
/// unclaimed seed claims every unclaimed point within `radius_px` of it.
pub fn viewport_clusters_where<T: Real>(
    tree: &KdTree2D<T>,
    viewport: &Viewport,
    radius_px: f64,
    g: f64,
    keep: impl Fn(u64) -> bool,
) -> Result<ClusterBatch, SpatialError> {
    if !(radius_px > 0.0 && radius_px.is_finite()) {
        return Err(SpatialError::InvalidRadius(radius_px));
    }
    let visible: Vec<u64> = tree
        .range_query(&viewport.rect())
        .into_iter()
        .filter(|&id| keep(id))
        .collect();
    let sampled = granularity_sample(&visible, g)?;
    let coords: HashMap<u64, [T; 2]> = tree.points().collect();
    let px: Vec<(u64, f64, f64)> = sampled
        .iter()
        .map(|&id| {
            let [x, y] = coords[&id];
            let (u, v) = viewport.to_pixels(x.as_f64(), y.as_f64());
            (id, u, v)
        })
        .collect();
    Ok(greedy_cluster(&px, radius_px))
}

/// `points` must be in ascending id order.
fn greedy_cluster(points: &[(u64, f64, f64)], radius: f64) -> ClusterBatch {
    let cell = |u: f64, v: f64| ((u / radius).floor() as i64, (v / radius).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &(_, u, v)) in points.iter().enumerate() {
        grid.entry(cell(u, v)).or_default().push(i);
    }
    let mut claimed = vec![false; points.len()];
    let mut batch = ClusterBatch::default();
    for (s, &(seed_id, su, sv)) in points.iter().enumerate() {
        if claimed[s] {
            continue;
        }
        let (cx, cy) = cell(su, sv);
        let mut members = Vec::new();
        for gx in cx - 1..=cx + 1 {
            for gy in cy - 1..=cy + 1 {
                for &j in grid.get(&(gx, gy)).into_iter().flatten() {
                    let (_, u, v) = points[j];
                    if !claimed[j] && (u - su).hypot(v - sv) <= radius {
                        members.push(j);
                    }
                }
            }
        }
        members.sort_unstable();
        for &j in &members {
            claimed[j] = true;
        }
        if members.len() == 1 {
            batch.singles.push(Single {
                px: su,
                py: sv,
                id: seed_id,
            });
            continue;
        }
        let n = members.len() as f64;
        batch.clusters.push(Cluster {
            px: members.iter().map(|&j| points[j].1).sum::<f64>() / n,
            py: members.iter().map(|&j| points[j].2).sum::<f64>() / n,
            count: members.len(),
            members: members.iter().map(|&j| points[j].0).collect(),
            representative: seed_id,
        });
    }
    batch
}
