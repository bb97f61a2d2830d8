use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Projection2D, ProjectionError, ViewMode};
use crate::catalog::Catalog;
use crate::hash::{mix64, unit_interval};
use crate::scalar::Real;

/// Relative jitter radius for items without any mapped material.
const JITTER_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialVertex {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// Triangle vertices for three material macro-classes plus the raw-label assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    pub vertices: Vec<MaterialVertex>,
    /// Raw material label → macro-class name.
    pub assignments: BTreeMap<String, String>,
}

impl MaterialConfig {
    fn check(&self) -> Result<[[f64; 2]; 3], ProjectionError> {
        let bad = |m: String| Err(ProjectionError::MaterialConfig(m));
        if self.vertices.len() != 3 {
            return bad(format!("expected 3 vertices, got {}", self.vertices.len()));
        }
        let names: BTreeSet<&str> = self.vertices.iter().map(|v| v.name.as_str()).collect();
        if names.len() != 3 {
            return bad("vertex names must be distinct".into());
        }
        if let Some((label, class)) = self
            .assignments
            .iter()
            .find(|(_, c)| !names.contains(c.as_str()))
        {
            return bad(format!("label {label:?} assigned to unknown class {class:?}"));
        }
        let v: [[f64; 2]; 3] = std::array::from_fn(|i| [self.vertices[i].x, self.vertices[i].y]);
        if v.iter().flatten().any(|c| !c.is_finite()) {
            return bad("vertex coordinates must be finite".into());
        }
        let area2 = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        if area2.abs() < 1e-12 {
            return bad("vertices are colinear".into());
        }
        Ok(v)
    }
}

fn circumradius(v: &[[f64; 2]; 3]) -> f64 {
    let side = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let (a, b, c) = (side(v[1], v[2]), side(v[0], v[2]), side(v[0], v[1]));
    let area2 = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    a * b * c / (2.0 * area2)
}

/// Barycentric placement by macro-class membership counts. Items with no mapped
/// material sit on a small circle around the centroid at an angle fixed by their id.
pub fn material_layout<T: Real>(
    catalog: &Catalog,
    config: &MaterialConfig,
) -> Result<Projection2D<T>, ProjectionError> {
    let v = config.check()?;
    let class_index: BTreeMap<&str, usize> = config
        .vertices
        .iter()
        .enumerate()
        .map(|(i, vx)| (vx.name.as_str(), i))
        .collect();
    let centroid = [
        (v[0][0] + v[1][0] + v[2][0]) / 3.0,
        (v[0][1] + v[1][1] + v[2][1]) / 3.0,
    ];
    let radius = JITTER_FRACTION * circumradius(&v);

    let points = catalog.items().iter().map(|item| {
        let mut counts = [0usize; 3];
        for m in &item.materials {
            if let Some(class) = config.assignments.get(m) {
                counts[class_index[class.as_str()]] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let p = if total == 0 {
            let angle = std::f64::consts::TAU * unit_interval(mix64(item.id));
            [
                centroid[0] + radius * angle.cos(),
                centroid[1] + radius * angle.sin(),
            ]
        } else {
            let w = counts.map(|c| c as f64 / total as f64);
            [
                w[0] * v[0][0] + w[1] * v[1][0] + w[2] * v[2][0],
                w[0] * v[0][1] + w[1] * v[1][1] + w[2] * v[2][1],
            ]
        };
        (item.id, [T::lit(p[0]), T::lit(p[1])])
    });
    Ok(Projection2D::new(ViewMode::Material, points, None, 1.0, 1.0))
}
