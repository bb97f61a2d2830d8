//! Input preparation: triplet sampling and In-Context STS pairs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use semspace_core::catalog::load_catalog;
use semspace_core::contrastive::sample_triplets;
use semspace_core::evaluation::{build_in_context_sts, InContextAnchor};
use serde::{Deserialize, Serialize};

use crate::manifest::Recorder;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletsArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// CSV with header `anchor,positive`.
    #[arg(long)]
    pub positives: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Triplet JSON-lines file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildStsArgs {
    /// CSV with header `anchor,positive,negative`; empty cells mean missing.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Pair CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn read_csv<R: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{} row {}", path.display(), i + 1)))
        .collect()
}

#[derive(Deserialize)]
struct PositiveRow {
    anchor: u64,
    positive: u64,
}

pub fn triplets(args: TripletsArgs) -> anyhow::Result<Status> {
    let catalog_path = required(args.catalog.clone(), "catalog")?;
    let positives_path = required(args.positives.clone(), "positives")?;
    let out = required(args.out.clone(), "out")?;
    let seed = args.seed.unwrap_or(0);
    let mut rec = Recorder::new("triplets", &args, Some(seed))?;
    rec.input("catalog", &catalog_path)?;
    rec.input("positives", &positives_path)?;
    let catalog = load_catalog(&catalog_path)?;
    let positives: BTreeMap<u64, u64> = read_csv::<PositiveRow>(&positives_path)?
        .into_iter()
        .map(|r| (r.anchor, r.positive))
        .collect();
    let set = sample_triplets(&catalog, &positives, seed)?;
    set.save(&out)?;
    eprintln!("wrote {} triplets to {}", set.len(), out.display());
    rec.output("triplets", &out)?;
    rec.write(args.manifest.as_deref(), &out)?;
    Ok(Status::Success)
}

pub fn build_sts(args: BuildStsArgs) -> anyhow::Result<Status> {
    let anchors_path = required(args.anchors.clone(), "anchors")?;
    let out = required(args.out.clone(), "out")?;
    let mut rec = Recorder::new("build_sts", &args, None)?;
    rec.input("anchors", &anchors_path)?;
    let anchors: Vec<InContextAnchor> = read_csv(&anchors_path)?;
    let pairs = build_in_context_sts(&anchors)?;
    pairs.save(&out)?;
    eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
    rec.output("pairs", &out)?;
    rec.write(args.manifest.as_deref(), &out)?;
    Ok(Status::Success)
}
