use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{attribute, eval, prepare, project, train};
use crate::manifest::{read_manifest, sha256_file, Manifest};
use crate::Status;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}

fn options<A: DeserializeOwned>(m: &Manifest) -> anyhow::Result<A> {
    Ok(serde_json::from_value(m.options.clone())?)
}

/// Checks the recorded inputs are unchanged, reruns the command with the
/// recorded options, and compares every output hash with the recorded one.
pub fn run(args: ReplayArgs) -> anyhow::Result<Status> {
    let m = read_manifest(&args.manifest)?;
    for (name, rec) in &m.inputs {
        if sha256_file(&rec.path)? != rec.sha256 {
            eprintln!("input {name} ({}) changed since the recorded run", rec.path.display());
            return Ok(Status::ValidationFailed);
        }
    }
    let status = match m.command.as_str() {
        "project" => project::run(options(&m)?)?,
        "train" => train::run(options(&m)?)?,
        "eval" => eval::run(options(&m)?)?,
        "attribute" => attribute::run(options(&m)?)?,
        "triplets" => prepare::triplets(options(&m)?)?,
        "build_sts" => prepare::build_sts(options(&m)?)?,
        other => bail!("cannot replay command {other:?}"),
    };
    if status != Status::Success {
        return Ok(status);
    }
    let mut identical = true;
    for (name, rec) in &m.outputs {
        let now = sha256_file(&rec.path)?;
        let same = now == rec.sha256;
        identical &= same;
        println!(
            "{} {name} {} {}",
            if same { "identical" } else { "DIFFERS" },
            rec.path.display(),
            now
        );
    }
    Ok(if identical { Status::Success } else { Status::ValidationFailed })
}
