use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use semspace_core::catalog::{load_catalog, Catalog};
use semspace_core::contrastive::LabelAttribute;
use semspace_core::evaluation::{classification_metrics, sts_score, EvaluationReport, MetricsReport, ScoredPairSet};
use semspace_core::{EmbeddingSetF64, HeadModelF64};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{embeddings, embeddings_with_extra, read_json, write_json};
use crate::manifest::Recorder;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Extra rows referenced by pair ids outside the catalog.
    #[arg(long)]
    pub paraphrase_embeddings: Option<PathBuf>,
    /// Needed for classification; otherwise checks embedding ids.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Head model; without it the raw embeddings are scored.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// STS pair CSV (`left_id,right_id,gold`).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Classification head to score against catalog labels.
    #[arg(long)]
    pub classify: Option<String>,
    /// JSON array of item ids to classify; defaults to every labelled item with an embedding.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Write the full evaluation report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn classify(
    model: &HeadModelF64,
    head: &str,
    catalog: &Catalog,
    set: &EmbeddingSetF64,
    ids: Option<Vec<u64>>,
) -> anyhow::Result<MetricsReport> {
    let attribute: LabelAttribute = head.parse()?;
    let classifier = model
        .heads
        .get(head)
        .with_context(|| format!("model has no classification head {head:?}"))?;
    let ids = ids.unwrap_or_else(|| set.ids().to_vec());
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for id in ids {
        let item = catalog.get(id).with_context(|| format!("item {id} is not in the catalog"))?;
        let Some(label) = attribute.of(item) else { continue };
        let x = set.row(id).with_context(|| format!("item {id} has no embedding"))?;
        predicted.push(model.predict(head, x)?.to_string());
        gold.push(label.to_string());
    }
    let selected: BTreeSet<String> = classifier.labels.iter().cloned().collect();
    Ok(classification_metrics(&predicted, &gold, &selected)?)
}

pub fn run(args: EvalArgs) -> anyhow::Result<Status> {
    let emb_path = required(args.embeddings.clone(), "embeddings")?;
    if args.pairs.is_none() && args.classify.is_none() {
        bail!("nothing to evaluate: give --pairs and/or --classify");
    }
    let mut rec = Recorder::new("eval", &args, None)?;
    rec.input("embeddings", &emb_path)?;
    let catalog = match &args.catalog {
        Some(p) => {
            rec.input("catalog", p)?;
            Some(load_catalog(p)?)
        }
        None => None,
    };
    let set = match &catalog {
        Some(c) => embeddings_with_extra(&emb_path, args.paraphrase_embeddings.as_deref(), c)?,
        None => {
            let base = embeddings(&emb_path, None)?;
            match &args.paraphrase_embeddings {
                Some(p) => base.merge(&embeddings(p, None)?)?,
                None => base,
            }
        }
    };
    if let Some(p) = &args.paraphrase_embeddings {
        rec.input("paraphrase_embeddings", p)?;
    }
    let model = match &args.model {
        Some(p) => {
            rec.input("model", p)?;
            Some(HeadModelF64::load_any(p).with_context(|| format!("loading model {}", p.display()))?)
        }
        None => None,
    };

    let mut report = EvaluationReport::default();
    let mut summary = serde_json::Map::new();
    if let Some(p) = &args.pairs {
        rec.input("pairs", p)?;
        let pairs = ScoredPairSet::load(p)?;
        let sts = sts_score(model.as_ref(), &pairs, &set)?;
        eprintln!("STS pearson r = {:.6} over {} pairs", sts.pearson, sts.n_pairs);
        summary.insert("sts".into(), json!({"pearson": sts.pearson, "n_pairs": sts.n_pairs}));
        report.sts = Some(sts);
    }
    if let Some(head) = &args.classify {
        let (Some(model), Some(catalog)) = (&model, &catalog) else {
            bail!("--classify needs --model and --catalog");
        };
        let ids = match &args.ids {
            Some(p) => {
                rec.input("ids", p)?;
                Some(read_json::<Vec<u64>>(p)?)
            }
            None => None,
        };
        let m = classify(model, head, catalog, &set, ids)?;
        eprintln!(
            "{head}: accuracy {:.4}, macro precision {:.4}, macro recall {:.4} over {} items",
            m.accuracy, m.precision_selected, m.recall_selected, m.n_samples
        );
        summary.insert(
            "classification".into(),
            json!({
                "head": head,
                "accuracy": m.accuracy,
                "precision_selected": m.precision_selected,
                "recall_selected": m.recall_selected,
                "n_samples": m.n_samples,
            }),
        );
        report.classification = Some(m);
    }
    println!("{}", serde_json::to_string(&summary)?);
    if let Some(path) = &args.report {
        write_json(path, &report)?;
        rec.output("report", path)?;
        rec.write(args.manifest.as_deref(), path)?;
    } else if let Some(m) = &args.manifest {
        rec.write(Some(m), m)?;
    }
    Ok(Status::Success)
}
