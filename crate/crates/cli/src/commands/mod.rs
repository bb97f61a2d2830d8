pub mod attribute;
pub mod eval;
pub mod prepare;
pub mod project;
pub mod replay;
pub mod serve;
pub mod train;
pub mod validate;

use std::path::Path;

use anyhow::Context;
use semspace_core::catalog::{load_embeddings, read_embeddings, Catalog};
use semspace_core::EmbeddingSetF64;
use serde::Serialize;

pub use attribute::AttributeArgs;
pub use eval::EvalArgs;
pub use prepare::{BuildStsArgs, TripletsArgs};
pub use project::ProjectArgs;
pub use replay::ReplayArgs;
pub use serve::ServeArgs;
pub use train::TrainArgs;
pub use validate::ValidateArgs;

/// Embedding rows widened to `f64`, checked against the catalog when one is given.
fn embeddings(path: &Path, catalog: Option<&Catalog>) -> anyhow::Result<EmbeddingSetF64> {
    let set = match catalog {
        Some(c) => load_embeddings(path, c),
        None => read_embeddings(path),
    };
    set.with_context(|| format!("loading embeddings {}", path.display()))
}

/// Catalog rows plus an optional second set whose ids lie outside the catalog
/// (paraphrase rows for triplet positives).
fn embeddings_with_extra(path: &Path, extra: Option<&Path>, catalog: &Catalog) -> anyhow::Result<EmbeddingSetF64> {
    let base = embeddings(path, Some(catalog))?;
    match extra {
        None => Ok(base),
        Some(p) => Ok(base.merge(&embeddings(p, None)?)?),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
