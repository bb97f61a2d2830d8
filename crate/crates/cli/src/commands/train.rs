use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use semspace_core::catalog::{load_catalog, Catalog};
use semspace_core::contrastive::{
    history_csv, rebalance, train_head, HeadKind, HeadSpec, LabelAttribute, RebalanceConfig, RebalanceMode, Regime,
    TrainOutcome, TrainingConfig, TrainingData, TripletSet, DEFAULT_MIN_SAMPLES,
};
use semspace_core::scalar::Real;
use semspace_core::EmbeddingSetF64;
use serde::{Deserialize, Serialize};

use super::{embeddings_with_extra, write_json};
use crate::manifest::Recorder;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    /// nt_xent, info_nce or classification.
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Frozen item embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Extra rows (paraphrase positives) whose ids are not catalog items.
    #[arg(long)]
    pub paraphrase_embeddings: Option<PathBuf>,
    /// Triplet JSON-lines file for info_nce.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Classification head attribute (categoria or povo); repeat for several heads.
    #[arg(long = "head")]
    pub heads: Vec<String>,
    /// Loss weight for one head as `name=weight`; weights must sum to 1.
    #[arg(long = "head-weight")]
    pub head_weights: Vec<String>,
    /// Labels with fewer original items than this are dropped or topped up.
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// filter_only or augment.
    #[arg(long)]
    pub rebalance: Option<String>,
    /// With augment: labels with fewer originals than this are still dropped.
    #[arg(long)]
    pub min_original: Option<usize>,
    /// Jitter standard deviation for synthetic rows.
    #[arg(long)]
    pub jitter_sigma: Option<f64>,
    /// Softmax temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long)]
    pub patience: Option<usize>,
    /// linear or two_layer.
    #[arg(long)]
    pub head_kind: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Projected dimension; defaults to the input dimension.
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Parameter dtype, f32 or f64.
    #[arg(long)]
    pub dtype: Option<String>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// History CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Also write the train/validation/test id split as JSON.
    #[arg(long)]
    pub split_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl TrainArgs {
    pub fn training_config(&self) -> anyhow::Result<TrainingConfig> {
        let d = TrainingConfig::default();
        let kind = match self.head_kind.as_deref() {
            None | Some("linear") => HeadKind::Linear,
            Some("two_layer") => HeadKind::TwoLayer,
            Some(other) => bail!("unknown head kind {other:?}; expected linear or two_layer"),
        };
        let head_weights = self
            .head_weights
            .iter()
            .map(|s| {
                let (name, w) = s
                    .split_once('=')
                    .with_context(|| format!("head weight {s:?} is not name=weight"))?;
                Ok((name.to_string(), w.parse::<f64>().with_context(|| format!("head weight {s:?}"))?))
            })
            .collect::<anyhow::Result<BTreeMap<_, _>>>()?;
        let config = TrainingConfig {
            temperature: self.tau.unwrap_or(d.temperature),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            head_weights,
            dropout_rate: self.dropout.unwrap_or(d.dropout_rate),
            seed: self.seed.unwrap_or(d.seed),
            early_stop_patience: self.patience.unwrap_or(d.early_stop_patience),
            head: HeadSpec {
                kind,
                hidden_dim: self.hidden_dim.unwrap_or(if kind == HeadKind::TwoLayer { 128 } else { 0 }),
                output_dim: self.output_dim,
            },
        };
        config.validate()?;
        Ok(config)
    }

    fn rebalance_config(&self, attribute: LabelAttribute, seed: u64) -> anyhow::Result<RebalanceConfig> {
        let mode = match self.rebalance.as_deref() {
            None | Some("augment") => RebalanceMode::Augment {
                min_original: self.min_original.unwrap_or(1),
            },
            Some("filter_only") => RebalanceMode::FilterOnly,
            Some(other) => bail!("unknown rebalance mode {other:?}; expected filter_only or augment"),
        };
        Ok(RebalanceConfig {
            attribute,
            min_samples: self.min_samples.unwrap_or(DEFAULT_MIN_SAMPLES),
            mode,
            jitter_sigma: self.jitter_sigma,
            seed,
        })
    }
}

enum Plan {
    NtXent(Vec<u64>),
    InfoNce(TripletSet),
    Classification(Vec<RebalanceConfig>),
}

fn fit<T: Real>(
    config: &TrainingConfig,
    plan: &Plan,
    catalog: &Catalog,
    set: &EmbeddingSetF64,
) -> anyhow::Result<TrainOutcome<T>> {
    let set = set.cast::<T>();
    let data = match plan {
        Plan::NtXent(ids) => TrainingData::NtXent { ids: ids.clone() },
        Plan::InfoNce(t) => TrainingData::InfoNce(t.clone()),
        Plan::Classification(cfgs) => TrainingData::Classification(
            cfgs.iter()
                .map(|c| Ok((c.attribute.as_str().to_string(), rebalance(catalog, &set, c)?)))
                .collect::<anyhow::Result<_>>()?,
        ),
    };
    Ok(train_head(config, &data, &set)?)
}

pub fn run(args: TrainArgs) -> anyhow::Result<Status> {
    let regime: Regime = required(args.regime.as_deref(), "regime")?.parse()?;
    let out = required(args.out.clone(), "out")?;
    let config = args.training_config()?;
    let mut rec = Recorder::new("train", &args, Some(config.seed))?;

    let catalog_path = required(args.catalog.clone(), "catalog")?;
    let emb_path = required(args.embeddings.clone(), "embeddings")?;
    rec.input("catalog", &catalog_path)?;
    rec.input("embeddings", &emb_path)?;
    if let Some(p) = &args.paraphrase_embeddings {
        rec.input("paraphrase_embeddings", p)?;
    }
    let catalog = load_catalog(&catalog_path)?;
    let set = embeddings_with_extra(&emb_path, args.paraphrase_embeddings.as_deref(), &catalog)?;

    let plan = match regime {
        Regime::NtXent => Plan::NtXent(set.ids().iter().copied().filter(|&id| catalog.contains(id)).collect()),
        Regime::InfoNce => {
            let path = required(args.triplets.clone(), "triplets")?;
            rec.input("triplets", &path)?;
            let triplets = TripletSet::load(&path)?;
            triplets.validate(&catalog)?;
            Plan::InfoNce(triplets)
        }
        Regime::Classification => {
            if args.heads.is_empty() {
                bail!("--head is required for classification");
            }
            Plan::Classification(
                args.heads
                    .iter()
                    .map(|h| args.rebalance_config(h.parse()?, config.seed))
                    .collect::<anyhow::Result<_>>()?,
            )
        }
    };

    let dtype = args.dtype.as_deref().unwrap_or("f64");
    eprintln!("training {} head ({dtype}) on {} embedding rows", regime.as_str(), set.len());
    let (history, split, best_epoch, stopped_early) = match dtype {
        "f32" => {
            let o = fit::<f32>(&config, &plan, &catalog, &set)?;
            o.model.save(&out)?;
            (o.history, o.split, o.best_epoch, o.stopped_early)
        }
        "f64" => {
            let o = fit::<f64>(&config, &plan, &catalog, &set)?;
            o.model.save(&out)?;
            (o.history, o.split, o.best_epoch, o.stopped_early)
        }
        other => bail!("unknown dtype {other:?}; expected f32 or f64"),
    };
    let best = &history[best_epoch];
    eprintln!(
        "best epoch {best_epoch} of {} (val loss {:.6}){}",
        history.len() - 1,
        best.val_loss,
        if stopped_early { ", stopped early" } else { "" }
    );
    rec.output("model", &out)?;

    let history_path = args.history.clone().unwrap_or_else(|| with_suffix(&out, ".history.csv"));
    std::fs::write(&history_path, history_csv(&history))
        .with_context(|| format!("writing {}", history_path.display()))?;
    rec.output("history", &history_path)?;
    if let Some(p) = &args.split_out {
        write_json(p, &split)?;
        rec.output("split", p)?;
    }
    rec.write(args.manifest.as_deref(), &out)?;
    Ok(Status::Success)
}

fn with_suffix(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
