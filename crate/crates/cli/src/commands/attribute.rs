use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use semspace_core::attribution::{
    group_attributions, integrated_gradients, AttributionConfig, AttributionReport, Baseline, QuadratureRule, Target,
    DEFAULT_STEPS,
};
use semspace_core::HeadModelF64;
use serde::{Deserialize, Serialize};

use super::{embeddings, read_json, write_json};
use crate::manifest::Recorder;
use crate::settings::required;
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Item to explain.
    #[arg(long)]
    pub id: Option<u64>,
    /// cosine (default) or output.
    #[arg(long)]
    pub target: Option<String>,
    /// Reference item for the cosine target; its head projection is the reference point.
    #[arg(long)]
    pub reference_id: Option<u64>,
    /// Output coordinate for the output target.
    #[arg(long)]
    pub output_index: Option<usize>,
    /// JSON array baseline; zero vector when absent.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// midpoint (default) or right_endpoint.
    #[arg(long)]
    pub rule: Option<String>,
    /// JSON object mapping group name to feature indices.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Report file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: AttributeArgs) -> anyhow::Result<Status> {
    let emb_path = required(args.embeddings.clone(), "embeddings")?;
    let model_path = required(args.model.clone(), "model")?;
    let id = required(args.id, "id")?;
    let out = required(args.out.clone(), "out")?;
    let mut rec = Recorder::new("attribute", &args, None)?;
    rec.input("embeddings", &emb_path)?;
    rec.input("model", &model_path)?;
    let set = embeddings(&emb_path, None)?;
    let head = HeadModelF64::load_any(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let row = |i: u64| set.row(i).with_context(|| format!("no embedding for item {i}"));

    let target = match args.target.as_deref().unwrap_or("cosine") {
        "cosine" => {
            let r = required(args.reference_id, "reference-id")?;
            Target::Cosine {
                reference: head.project(row(r)?)?,
            }
        }
        "output" => Target::Output {
            index: required(args.output_index, "output-index")?,
        },
        other => bail!("unknown target {other:?}; expected cosine or output"),
    };
    let baseline = match &args.baseline {
        Some(p) => {
            rec.input("baseline", p)?;
            Baseline::Explicit { values: read_json(p)? }
        }
        None => Baseline::Zero,
    };
    let rule = match args.rule.as_deref() {
        None | Some("midpoint") => QuadratureRule::Midpoint,
        Some("right_endpoint") => QuadratureRule::RightEndpoint,
        Some(other) => bail!("unknown rule {other:?}; expected midpoint or right_endpoint"),
    };
    let config = AttributionConfig {
        steps: args.steps.unwrap_or(DEFAULT_STEPS),
        baseline,
        target,
        rule,
    };
    let result = integrated_gradients(&head, row(id)?, &config)?;
    let groups = match &args.groups {
        Some(p) => {
            rec.input("groups", p)?;
            let named: BTreeMap<String, Vec<usize>> = read_json(p)?;
            let by_feature: BTreeMap<usize, String> = named
                .into_iter()
                .flat_map(|(g, idx)| idx.into_iter().map(move |i| (i, g.clone())))
                .collect();
            group_attributions(&result, &by_feature)?
        }
        None => BTreeMap::new(),
    };
    let report = AttributionReport::new(Some(id), &config, result, groups);
    eprintln!(
        "F(x) = {:.6}, F(baseline) = {:.6}, completeness residual {:.3e}",
        report.f_x, report.f_baseline, report.residual
    );
    write_json(&out, &report)?;
    rec.output("report", &out)?;
    rec.write(args.manifest.as_deref(), &out)?;
    Ok(Status::Success)
}
