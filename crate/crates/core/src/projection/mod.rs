//! Two-dimensional layouts of catalog items.
//!
//! The manifold route runs exact k-NN, smooth-kNN bandwidth calibration,
//! fuzzy union of the directed memberships, and stochastic layout
//! optimization with negative sampling. The material route places items in
//! a triangle by their raw-material composition.

mod curve;
mod fuzzy;
mod knn;
mod layout;
mod material;
mod quality;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::EmbeddingSet;
use crate::scalar::Real;

pub use curve::{curve_value, fit_curve, CurveFit, CURVE_SAMPLES};
pub use fuzzy::{calibrate_row, fuzzy_simplicial_set, Edge, RowCalibration, WeightedGraph};
pub use knn::{distance, knn_graph, NeighborGraph};
pub use layout::optimize_layout;
pub use material::{material_layout, MaterialConfig, MaterialVertex};
pub use quality::{silhouette_score, trustworthiness, trustworthiness_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    SemanticImage,
    SemanticText,
    Material,
}

impl ViewMode {
    pub const ALL: [ViewMode; 3] = [
        ViewMode::SemanticImage,
        ViewMode::SemanticText,
        ViewMode::Material,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewMode::SemanticImage => "semantic_image",
            ViewMode::SemanticText => "semantic_text",
            ViewMode::Material => "material",
        }
    }
}

impl std::str::FromStr for ViewMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewMode::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown view mode {s:?}"))
    }
}

impl std::fmt::Display for ViewMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 200,
            negative_sample_rate: 5,
            initial_learning_rate: 1.0,
            seed: 0,
            metric: Metric::Euclidean,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        let bad = |m: &str| Err(ProjectionError::InvalidConfig(m.to_string()));
        if self.n_neighbors < 2 {
            return bad("n_neighbors must be at least 2");
        }
        if !(self.min_dist >= 0.0) {
            return bad("min_dist must be non-negative");
        }
        if !(self.spread > 0.0) {
            return bad("spread must be positive");
        }
        if self.min_dist >= self.spread {
            return bad("min_dist must be smaller than spread");
        }
        if !(self.initial_learning_rate > 0.0) {
            return bad("initial_learning_rate must be positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("need more than {k} items for {k} neighbors, got {n}")]
    TooFewItems { n: usize, k: usize },
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("k = {k} out of range for {n} items")]
    KOutOfRange { k: usize, n: usize },
    #[error("projection has no coordinates for item {0}")]
    MissingCoordinate(u64),
    #[error("invalid material config: {0}")]
    MaterialConfig(String),
    #[error("projection cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Per-item planar coordinates for one view mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D<T> {
    pub view_mode: ViewMode,
    ids: Vec<u64>,
    coords: Vec<[T; 2]>,
    index: HashMap<u64, usize>,
    pub config: Option<ProjectionConfig>,
    pub a: f64,
    pub b: f64,
}

impl<T: Real> Projection2D<T> {
    /// Points are stored in ascending id order.
    pub fn new(
        view_mode: ViewMode,
        points: impl IntoIterator<Item = (u64, [T; 2])>,
        config: Option<ProjectionConfig>,
        a: f64,
        b: f64,
    ) -> Self {
        let mut points: Vec<(u64, [T; 2])> = points.into_iter().collect();
        points.sort_by_key(|p| p.0);
        let (ids, coords): (Vec<u64>, Vec<[T; 2]>) = points.into_iter().unzip();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Self {
            view_mode,
            ids,
            coords,
            index,
            config,
            a,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn coords(&self) -> &[[T; 2]] {
        &self.coords
    }

    pub fn coord(&self, id: u64) -> Option<[T; 2]> {
        self.index.get(&id).map(|&i| self.coords[i])
    }

    pub fn points(&self) -> impl Iterator<Item = (u64, [T; 2])> + '_ {
        self.ids.iter().copied().zip(self.coords.iter().copied())
    }

    pub fn all_finite(&self) -> bool {
        self.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite())
    }

    pub fn to_cache(&self, input_hash: Option<String>) -> ProjectionCache {
        ProjectionCache {
            view_mode: self.view_mode,
            config_hash: self.config.as_ref().map(ProjectionConfig::hash),
            config: self.config.clone(),
            input_hash,
            a: self.a,
            b: self.b,
            coords: self
                .points()
                .map(|(id, [x, y])| (id, x.as_f64(), y.as_f64()))
                .collect(),
        }
    }
}

/// On-disk form of a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCache {
    pub view_mode: ViewMode,
    pub config: Option<ProjectionConfig>,
    pub config_hash: Option<String>,
    #[serde(default)]
    pub input_hash: Option<String>,
    pub a: f64,
    pub b: f64,
    pub coords: Vec<(u64, f64, f64)>,
}

impl ProjectionCache {
    pub fn into_projection<T: Real>(self) -> Projection2D<T> {
        Projection2D::new(
            self.view_mode,
            self.coords
                .into_iter()
                .map(|(id, x, y)| (id, [T::lit(x), T::lit(y)])),
            self.config,
            self.a,
            self.b,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cache serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ProjectionError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| ProjectionError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ProjectionError> {
        let path = path.as_ref();
        let err = |message: String| ProjectionError::Cache {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// True when the cache was produced by `config` over input `input_hash`.
    pub fn is_fresh(&self, config: &ProjectionConfig, input_hash: Option<&str>) -> bool {
        self.config_hash.as_deref() == Some(config.hash().as_str())
            && self.input_hash.as_deref() == input_hash
    }
}

/// Full manifold pipeline over an embedding set.
pub fn project<T: Real>(
    embeddings: &EmbeddingSet<T>,
    config: &ProjectionConfig,
    view_mode: ViewMode,
) -> Result<Projection2D<T>, ProjectionError> {
    let graph = knn_graph(embeddings, config)?;
    let weighted = fuzzy_simplicial_set(&graph);
    optimize_layout(&weighted, config, view_mode)
}

/// Reuses the cache at `path` when its config and input hashes match, else recomputes and rewrites it.
pub fn load_or_project<T: Real>(
    path: impl AsRef<Path>,
    embeddings: &EmbeddingSet<T>,
    config: &ProjectionConfig,
    view_mode: ViewMode,
    input_hash: &str,
) -> Result<Projection2D<T>, ProjectionError> {
    let path = path.as_ref();
    if let Ok(cache) = ProjectionCache::read(path) {
        if cache.view_mode == view_mode && cache.is_fresh(config, Some(input_hash)) {
            return Ok(cache.into_projection());
        }
    }
    let projection = project(embeddings, config, view_mode)?;
    projection
        .to_cache(Some(input_hash.to_string()))
        .write(path)?;
    Ok(projection)
}
