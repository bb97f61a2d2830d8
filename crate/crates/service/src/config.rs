use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use semspace_core::projection::ViewMode;
use semspace_core::spatial::DEFAULT_RADIUS_PX;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Artifacts behind one view mode. `embeddings` and `head_model` are only
/// needed for attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    pub projection: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub head_model: Option<PathBuf>,
}

/// TOML service configuration. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub catalog: PathBuf,
    pub state_centroids: PathBuf,
    /// External record link; `{id}` is replaced by the item id.
    #[serde(default)]
    pub item_url_template: Option<String>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default = "default_radius")]
    pub radius_px: f64,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default)]
    pub views: BTreeMap<ViewMode, ViewConfig>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_page_size() -> usize {
    24
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_PX
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(config.resolve(base))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.page_size == 0 {
            return Err(ConfigError::Invalid("page_size must be at least 1".into()));
        }
        if !(self.radius_px > 0.0 && self.radius_px.is_finite()) {
            return Err(ConfigError::Invalid("radius_px must be positive".into()));
        }
        if let Some(t) = &self.item_url_template {
            if !t.contains("{id}") {
                return Err(ConfigError::Invalid("item_url_template must contain {id}".into()));
            }
        }
        Ok(())
    }

    /// Rebases every relative path onto `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.catalog);
        fix(&mut self.state_centroids);
        for view in self.views.values_mut() {
            fix(&mut view.projection);
            view.embeddings.as_mut().map(fix);
            view.head_model.as_mut().map(fix);
        }
        self
    }

    pub fn item_url(&self, id: u64) -> Option<String> {
        self.item_url_template
            .as_ref()
            .map(|t| t.replace("{id}", &id.to_string()))
    }
}
