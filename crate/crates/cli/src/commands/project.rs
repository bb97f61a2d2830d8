use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use semspace_core::catalog::load_catalog;
use semspace_core::projection::{
    material_layout, project, trustworthiness, MaterialConfig, Metric, ProjectionConfig, ViewMode,
};
use semspace_core::Projection2DF64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{embeddings, read_json};
use crate::manifest::Recorder;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectArgs {
    /// semantic_image, semantic_text or material.
    #[arg(long)]
    pub view: Option<ViewMode>,
    /// Catalog file; required for the material view, optional id check otherwise.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Embedding file for the semantic views.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// JSON triangle vertices and label assignments for the material view.
    #[arg(long)]
    pub material_config: Option<PathBuf>,
    /// Projection cache to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    pub min_dist: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub n_epochs: Option<usize>,
    #[arg(long)]
    pub negative_sample_rate: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// euclidean or cosine.
    #[arg(long)]
    pub metric: Option<String>,
    /// Report trustworthiness with this many neighbours on stderr.
    #[arg(long)]
    pub trustworthiness_k: Option<usize>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl ProjectArgs {
    pub fn projection_config(&self) -> anyhow::Result<ProjectionConfig> {
        let d = ProjectionConfig::default();
        let metric = match &self.metric {
            None => d.metric,
            Some(m) => serde_json::from_value::<Metric>(serde_json::Value::String(m.clone()))
                .map_err(|_| anyhow::anyhow!("unknown metric {m:?}; expected euclidean or cosine"))?,
        };
        let config = ProjectionConfig {
            n_neighbors: self.n_neighbors.unwrap_or(d.n_neighbors),
            min_dist: self.min_dist.unwrap_or(d.min_dist),
            spread: self.spread.unwrap_or(d.spread),
            n_epochs: self.n_epochs.unwrap_or(d.n_epochs),
            negative_sample_rate: self.negative_sample_rate.unwrap_or(d.negative_sample_rate),
            initial_learning_rate: self.learning_rate.unwrap_or(d.initial_learning_rate),
            seed: self.seed.unwrap_or(d.seed),
            metric,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn run(args: ProjectArgs) -> anyhow::Result<Status> {
    let view = required(args.view, "view")?;
    let out = required(args.out.clone(), "out")?;
    let config = args.projection_config()?;
    let mut rec = Recorder::new("project", &args, Some(config.seed))?;
    let catalog = match &args.catalog {
        Some(p) => {
            rec.input("catalog", p)?;
            Some(load_catalog(p)?)
        }
        None => None,
    };

    let (projection, input_hash): (Projection2DF64, String) = match view {
        ViewMode::Material => {
            let Some(catalog) = &catalog else { bail!("--catalog is required for the material view") };
            let cfg_path = required(args.material_config.clone(), "material-config")?;
            rec.input("material_config", &cfg_path)?;
            let material: MaterialConfig = read_json(&cfg_path)?;
            let mut h = Sha256::new();
            h.update(rec_hash(&rec, "catalog"));
            h.update(rec_hash(&rec, "material_config"));
            (material_layout(catalog, &material)?, hex::encode(h.finalize()))
        }
        _ => {
            let emb_path = required(args.embeddings.clone(), "embeddings")?;
            rec.input("embeddings", &emb_path)?;
            let set = embeddings(&emb_path, catalog.as_ref())?;
            eprintln!("projecting {} rows of dim {} ({view})", set.len(), set.dim());
            let projection = project(&set, &config, view)?;
            if let Some(k) = args.trustworthiness_k {
                let t = trustworthiness(&set, &projection, k, config.metric)?;
                eprintln!("trustworthiness(k={k}) = {t:.4}");
            }
            (projection, rec_hash(&rec, "embeddings"))
        }
    };
    projection
        .to_cache(Some(input_hash))
        .write(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} points to {}", projection.len(), out.display());
    rec.output("projection", &out)?;
    rec.write(args.manifest.as_deref(), &out)?;
    Ok(Status::Success)
}

fn rec_hash(rec: &Recorder, name: &str) -> String {
    rec.input_hash(name).unwrap_or_default().to_string()
}
