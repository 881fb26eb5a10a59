use std::path::Path;

use anyhow::{bail, Context};
use saeprobe::intervention::{load_subspace, SUBSPACE_BASIS_FILE};
use saeprobe::sae::{load_checkpoint, DICTIONARY_FILE};
use saeprobe::store::load_shard;

use super::load_task;
use crate::args::ValidateArgs;

fn check(path: &Path) -> anyhow::Result<String> {
    if path.is_dir() {
        if path.join(DICTIONARY_FILE).exists() {
            let (params, manifest) = load_checkpoint(path).context("sae::load_checkpoint")?;
            return Ok(format!(
                "checkpoint: width {}, dim {}, k {}, step {}",
                params.width(),
                params.input_dim(),
                params.k(),
                manifest.step
            ));
        }
        if path.join(SUBSPACE_BASIS_FILE).exists() {
            let s = load_subspace(path).context("intervention::load_subspace")?;
            return Ok(format!("subspace: rank {} in dimension {}", s.rank(), s.dim()));
        }
        bail!("directory is neither a checkpoint nor a subspace");
    }
    if path.extension().is_some_and(|e| e == "json") {
        let task = load_task(path)?;
        return Ok(format!(
            "task `{}`: {} queries, {} candidates",
            task.task_label,
            task.queries.len(),
            task.candidates.len()
        ));
    }
    let shard = load_shard(path).context("store::load_shard")?;
    Ok(format!("shard: {} tokens, {} samples, dim {}", shard.count(), shard.samples().len(), shard.dim()))
}

pub fn run(args: &ValidateArgs) -> anyhow::Result<()> {
    let mut failed = 0;
    for path in &args.paths {
        match check(path) {
            Ok(summary) => println!("ok {}: {summary}", path.display()),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e:#}", path.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} inputs failed validation", args.paths.len());
    }
    Ok(())
}
