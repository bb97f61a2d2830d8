use std::path::PathBuf;

use clap::Args;
use semspace_core::catalog::{load_catalog_with_report, read_embeddings, EmbeddingError, Issue};
use serde::{Deserialize, Serialize};

use super::write_json;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateArgs {
    /// Catalog JSON-lines file.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Image-modality embedding file.
    #[arg(long)]
    pub image_embeddings: Option<PathBuf>,
    /// Text-modality embedding file.
    #[arg(long)]
    pub text_embeddings: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn issue(item_id: Option<u64>, message: String) -> Issue {
    Issue {
        item_id,
        line: None,
        message,
    }
}

/// Unreadable files are runtime errors; bad content lands in the report.
pub fn run(args: ValidateArgs) -> anyhow::Result<Status> {
    let catalog_path = required(args.catalog, "catalog")?;
    let (catalog, mut report) = load_catalog_with_report(&catalog_path)?;
    for (modality, path) in [("image", &args.image_embeddings), ("text", &args.text_embeddings)] {
        let Some(path) = path else { continue };
        let count = match read_embeddings::<f32>(path) {
            Ok(set) => {
                let unknown: Vec<u64> = set.ids().iter().copied().filter(|&id| !catalog.contains(id)).collect();
                for id in &unknown {
                    report
                        .errors
                        .push(issue(Some(*id), format!("{modality} embedding row for unknown item id {id}")));
                }
                set.len() - unknown.len()
            }
            Err(e @ EmbeddingError::Io { .. }) => return Err(e.into()),
            Err(e) => {
                let id = match e {
                    EmbeddingError::NonFinite { id, .. }
                    | EmbeddingError::DimMismatch { id, .. }
                    | EmbeddingError::DuplicateId(id) => Some(id),
                    _ => None,
                };
                report.errors.push(issue(id, format!("{modality} embeddings: {e}")));
                0
            }
        };
        match modality {
            "image" => report.with_image_embedding = count,
            _ => report.with_text_embedding = count,
        }
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    if report.accepted() {
        Ok(Status::Success)
    } else {
        eprintln!("validation failed with {} error(s)", report.errors.len());
        Ok(Status::ValidationFailed)
    }
}
