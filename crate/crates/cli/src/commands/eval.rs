use anyhow::Context;
use saeprobe::intervention::load_subspace;
use saeprobe::retrieval::{run_task, EvalOptions, RemovalSides};
use saeprobe::store::RoleMask;
use serde_json::json;

use super::{load_shards, load_task, pool_flags};
use crate::args::{EvalArgs, Sides};
use crate::rundir::{paths_json, RunDir};
use crate::settings::{resolve, EvalSettings, Flags};

pub const REPORT_FILE: &str = "report.json";

pub fn run(seed: u64, args: &EvalArgs) -> anyhow::Result<()> {
    let mut flags = Flags::default();
    pool_flags(&mut flags, &args.pool);
    flags.set("ks", args.ks.clone());
    if let Some(sides) = args.sides {
        flags
            .set("remove_from_queries", Some(sides != Sides::Candidates))
            .set("remove_from_candidates", Some(sides != Sides::Queries));
    }
    let settings: EvalSettings = resolve(&EvalSettings::default(), args.common.config.as_deref(), flags)?;

    let mut run = RunDir::create(&args.common.out, "eval")?;
    run.echo(
        seed,
        &settings,
        json!({
            "shards": paths_json(&args.shards),
            "task": args.task.display().to_string(),
            "subspace": args.subspace.as_ref().map(|p| p.display().to_string()),
        }),
    )?;
    let shards = load_shards(&args.shards)?;
    let task = load_task(&args.task)?;
    let subspace = args
        .subspace
        .as_deref()
        .map(|p| load_subspace(p).with_context(|| format!("intervention::load_subspace({})", p.display())))
        .transpose()?;
    let opts = EvalOptions {
        pooling: settings.pooling,
        mask: settings.masked_roles.iter().copied().collect::<RoleMask>(),
        removal: subspace.as_ref(),
        sides: RemovalSides { queries: settings.remove_from_queries, candidates: settings.remove_from_candidates },
        ks: settings.ks.clone(),
    };
    let report = run_task(&shards, &task, &opts).context("retrieval::run_task")?;
    run.write_json(REPORT_FILE, &report)?;
    report.write_csv(run.create_file("recall.csv")?)?;
    let summary: Vec<String> = report.recall_at.iter().map(|(k, r)| format!("R@{k}={r:.4}")).collect();
    println!("{} {}", report.task_label, summary.join(" "));
    run.log(&summary.join(" "));
    Ok(())
}
