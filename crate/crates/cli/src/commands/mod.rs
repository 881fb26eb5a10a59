mod analyze;
mod eval;
mod intervene;
mod report;
mod synth;
mod train;
mod validate;

use std::path::PathBuf;

use anyhow::Context;
use saeprobe::retrieval::TaskSpec;
use saeprobe::store::load_shard;
use saeprobe::{ActivationShard, PoolingStrategy, TokenRole};

use crate::args::{Cli, Command, PoolArgs};
use crate::rundir::read_json;
use crate::settings::Flags;

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => synth::run(cli.seed, a).context("synth"),
        Command::Train(a) => train::run(cli.seed, a).context("train"),
        Command::Analyze(a) => analyze::run(cli.seed, a).context("analyze"),
        Command::Intervene(a) => intervene::run(cli.seed, a).context("intervene"),
        Command::Eval(a) => eval::run(cli.seed, a).context("eval"),
        Command::Report(a) => report::run(a).context("report"),
        Command::Validate(a) => validate::run(a).context("validate"),
    }
}

fn load_shards(paths: &[PathBuf]) -> anyhow::Result<Vec<ActivationShard>> {
    let shards: Vec<ActivationShard> = paths
        .iter()
        .map(|p| load_shard(p).with_context(|| format!("store::load_shard({})", p.display())))
        .collect::<anyhow::Result<_>>()?;
    if let Some(first) = shards.first() {
        if let Some((p, s)) = paths.iter().zip(&shards).find(|(_, s)| s.dim() != first.dim()) {
            anyhow::bail!(
                "{} has dimension {}, expected {} like {}",
                p.display(),
                s.dim(),
                first.dim(),
                paths[0].display()
            );
        }
    }
    Ok(shards)
}

fn load_task(path: &std::path::Path) -> anyhow::Result<TaskSpec> {
    let spec: TaskSpec = read_json(path)?;
    spec.validate().with_context(|| format!("retrieval::TaskSpec::validate({})", path.display()))?;
    Ok(spec)
}

fn pool_flags(flags: &mut Flags, pool: &PoolArgs) {
    flags.set("pooling", pool.pooling.map(PoolingStrategy::from)).set(
        "masked_roles",
        pool.mask.as_ref().map(|roles| roles.iter().map(|&r| TokenRole::from(r)).collect::<Vec<_>>()),
    );
}
