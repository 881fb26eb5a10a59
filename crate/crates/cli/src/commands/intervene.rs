use anyhow::{bail, Context};
use saeprobe::intervention::{build_removal_subspace, save_subspace, RankPolicy};
use saeprobe::metrics::ConceptStats;
use saeprobe::sae::load_checkpoint;
use serde_json::json;

use crate::args::InterveneArgs;
use crate::rundir::{read_json, RunDir};
use crate::settings::{resolve, Flags, InterveneSettings};

pub const SUBSPACE_DIR: &str = "subspace";

pub fn run(seed: u64, args: &InterveneArgs) -> anyhow::Result<()> {
    let mut flags = Flags::default();
    flags
        .set("fraction", args.fraction)
        .set("rank_policy", args.rank.map(RankPolicy::Fixed).or(args.energy.map(RankPolicy::EnergyThreshold)));
    let settings: InterveneSettings = resolve(&InterveneSettings::default(), args.common.config.as_deref(), flags)?;

    let mut run = RunDir::create(&args.common.out, "intervene")?;
    run.echo(
        seed,
        &settings,
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "stats": args.stats.display().to_string(),
        }),
    )?;
    let (params, _) = load_checkpoint(&args.checkpoint).context("sae::load_checkpoint")?;
    let stats: ConceptStats = read_json(&args.stats)?;
    if stats.width() != params.width() {
        bail!("statistics cover {} concepts but the dictionary has {}", stats.width(), params.width());
    }
    let subspace =
        build_removal_subspace(params.dictionary(), &stats.attribution, settings.fraction, settings.rank_policy)
            .context("intervention::build_removal_subspace")?;
    save_subspace(&run.join(SUBSPACE_DIR), &subspace).context("intervention::save_subspace")?;
    run.log(&format!("rank {} from {} atoms", subspace.rank(), subspace.source_indices().len()));
    Ok(())
}
