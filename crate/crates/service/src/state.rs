use std::collections::BTreeMap;

use semspace_core::catalog::{
    filter_schema, load_catalog, load_embeddings, Catalog, CatalogError, Coords, EmbeddingError, FilterSchema,
};
use semspace_core::contrastive::ContrastiveError;
use semspace_core::lenses::{load_state_centroids, map_markers, GeoMarkerSet, LensError};
use semspace_core::projection::{ProjectionCache, ProjectionError, ViewMode};
use semspace_core::{EmbeddingSetF64, HeadModelF64, KdTreeF64, Projection2DF64};
use thiserror::Error;

use crate::config::{ServiceConfig, ViewConfig};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embeddings(#[from] EmbeddingError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Model(#[from] ContrastiveError),
    #[error(transparent)]
    Lens(#[from] LensError),
    #[error("view {view}: {message}")]
    View { view: ViewMode, message: String },
}

/// Loaded artifacts for one view mode.
#[derive(Debug)]
pub struct ViewData {
    pub tree: KdTreeF64,
    /// Projected ids, ascending.
    pub ids: Vec<u64>,
    pub embeddings: Option<EmbeddingSetF64>,
    pub head: Option<HeadModelF64>,
}

/// Immutable state shared by every handler.
#[derive(Debug)]
pub struct AppState {
    pub config: ServiceConfig,
    pub catalog: Catalog,
    pub catalog_hash: String,
    pub schema: FilterSchema,
    pub centroids: BTreeMap<String, Coords>,
    pub markers: GeoMarkerSet,
    pub views: BTreeMap<ViewMode, ViewData>,
}

fn load_view(view: ViewMode, cfg: &ViewConfig, catalog: &Catalog) -> Result<ViewData, LoadError> {
    let bad = |message: String| LoadError::View { view, message };
    let cache = ProjectionCache::read(&cfg.projection)?;
    if cache.view_mode != view {
        return Err(bad(format!(
            "projection file {} holds view {}",
            cfg.projection.display(),
            cache.view_mode
        )));
    }
    let projection = cache.into_projection::<f64>();
    if let Some(id) = projection.ids().iter().find(|&&id| !catalog.contains(id)) {
        return Err(bad(format!("projected id {id} is not in the catalog")));
    }
    if !projection.all_finite() {
        return Err(bad("projection has non-finite coordinates".into()));
    }
    let embeddings = cfg
        .embeddings
        .as_ref()
        .map(|p| load_embeddings::<f64>(p, catalog))
        .transpose()?;
    let head = cfg.head_model.as_deref().map(HeadModelF64::load_any).transpose()?;
    if let (Some(e), Some(h)) = (&embeddings, &head) {
        if e.dim() != h.input_dim() {
            return Err(bad(format!(
                "head expects {} inputs, embeddings have {}",
                h.input_dim(),
                e.dim()
            )));
        }
    }
    Ok(ViewData::new(&projection, embeddings, head))
}

impl ViewData {
    pub fn new(projection: &Projection2DF64, embeddings: Option<EmbeddingSetF64>, head: Option<HeadModelF64>) -> Self {
        let mut ids = projection.ids().to_vec();
        ids.sort_unstable();
        Self {
            tree: KdTreeF64::from_projection(projection),
            ids,
            embeddings,
            head,
        }
    }
}

impl AppState {
    /// Loads every file the config names; any missing or inconsistent
    /// artifact fails startup.
    pub fn load(config: ServiceConfig) -> Result<Self, LoadError> {
        let catalog = load_catalog(&config.catalog)?;
        let centroids = load_state_centroids(&config.state_centroids)?;
        let views = config
            .views
            .iter()
            .map(|(&mode, cfg)| Ok((mode, load_view(mode, cfg, &catalog)?)))
            .collect::<Result<_, LoadError>>()?;
        Self::from_parts(config, catalog, centroids, views)
    }

    pub fn from_parts(
        config: ServiceConfig,
        catalog: Catalog,
        centroids: BTreeMap<String, Coords>,
        views: BTreeMap<ViewMode, ViewData>,
    ) -> Result<Self, LoadError> {
        let markers = map_markers(&catalog, &centroids)?;
        Ok(Self {
            catalog_hash: catalog.content_hash(),
            schema: filter_schema(&catalog),
            config,
            catalog,
            centroids,
            markers,
            views,
        })
    }
}
