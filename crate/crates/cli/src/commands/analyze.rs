use std::collections::{BTreeMap, HashMap};

use anyhow::{bail, Context};
use saeprobe::metrics::{
    concept_stats, cumulative_energy_curve, jaccard, modality_density_export, top_fraction, write_two_column_csv,
    CodeCollection, PairWeighting, PairedCodes, TopSetReport,
};
use saeprobe::sae::{dead_feature_report, load_checkpoint};
use saeprobe::store::{pool_shard, RoleMask};
use saeprobe::{Modality, SparseCode};
use serde_json::json;

use super::{load_shards, load_task, pool_flags};
use crate::args::{AnalyzeArgs, Weighting};
use crate::rundir::{paths_json, RunDir};
use crate::settings::{resolve, AnalyzeSettings, Flags};

pub const STATS_FILE: &str = "stats.json";

pub fn run(seed: u64, args: &AnalyzeArgs) -> anyhow::Result<()> {
    let mut flags = Flags::default();
    pool_flags(&mut flags, &args.pool);
    flags
        .set("fraction", args.fraction)
        .set("activity_epsilon", args.activity_epsilon)
        .set(
            "weighting",
            args.weighting.map(|w| match w {
                Weighting::Uniform => PairWeighting::Uniform,
                Weighting::CodeSimilarity => PairWeighting::CodeSimilarity,
            }),
        )
        .set("density_grid", args.density_grid)
        .set("bandwidth", args.bandwidth);
    let settings: AnalyzeSettings = resolve(&AnalyzeSettings::default(), args.common.config.as_deref(), flags)?;

    let mut run = RunDir::create(&args.common.out, "analyze")?;
    run.echo(
        seed,
        &settings,
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "shards": paths_json(&args.shards),
            "task": args.task.display().to_string(),
        }),
    )?;

    let (params, _) = load_checkpoint(&args.checkpoint).context("sae::load_checkpoint")?;
    let shards = load_shards(&args.shards)?;
    if shards[0].dim() != params.input_dim() {
        bail!("shards have dimension {} but the checkpoint expects {}", shards[0].dim(), params.input_dim());
    }
    let task = load_task(&args.task)?;
    let mask: RoleMask = settings.masked_roles.iter().copied().collect();

    let mut codes: BTreeMap<u64, (Modality, SparseCode)> = BTreeMap::new();
    for shard in &shards {
        let modality: HashMap<u64, Modality> = shard.meta().iter().map(|m| (m.sample_id, m.modality)).collect();
        for emb in pool_shard(shard, settings.pooling, &mask).context("store::pool_shard")? {
            let code = params.encode(&emb.vector).context("sae::encode")?;
            if codes.insert(emb.sample_id, (modality[&emb.sample_id], code)).is_some() {
                bail!("sample {} appears in more than one shard", emb.sample_id);
            }
        }
    }
    let by_modality = |m: Modality| -> Vec<SparseCode> {
        codes.values().filter(|(mm, _)| *mm == m).map(|(_, c)| c.clone()).collect()
    };
    let image =
        CodeCollection::new(by_modality(Modality::Image), Modality::Image).context("no image samples in the shards")?;
    let text =
        CodeCollection::new(by_modality(Modality::Text), Modality::Text).context("no text samples in the shards")?;

    let sample_of = |entries: &[saeprobe::retrieval::TaskEntry]| -> HashMap<String, u64> {
        entries.iter().map(|e| (e.id.clone(), e.sample_id)).collect()
    };
    let (queries, candidates) = (sample_of(&task.queries), sample_of(&task.candidates));
    let lookup =
        |sample: u64| codes.get(&sample).with_context(|| format!("task sample {sample} not found in the shards"));
    let mut pairs = Vec::new();
    for q in &task.queries {
        for cid in &task.qrels[&q.id] {
            let (mq, zq) = lookup(queries[&q.id])?;
            let (mc, zc) = lookup(candidates[cid])?;
            match (mq, mc) {
                (Modality::Text, Modality::Image) => pairs.push((zc.clone(), zq.clone())),
                (Modality::Image, Modality::Text) => pairs.push((zq.clone(), zc.clone())),
                _ => bail!("pair ({}, {cid}) is not an image-text pair", q.id),
            }
        }
    }
    let pairs = PairedCodes::new(pairs).context("metrics::PairedCodes::new")?;

    let stats =
        concept_stats(&image, &text, &pairs, params.dictionary(), settings.activity_epsilon, settings.weighting)
            .context("metrics::concept_stats")?;
    run.write_json(STATS_FILE, &stats)?;

    let f = settings.fraction;
    let energy_top = top_fraction(&stats.energy, f).context("metrics::top_fraction(energy)")?;
    let bridge_top = top_fraction(&stats.bridge, f).context("metrics::top_fraction(bridge)")?;
    let attribution_top = top_fraction(&stats.attribution, f).context("metrics::top_fraction(attribution)")?;
    run.write_json(
        "top_sets.json",
        &json!({
            "sets": [
                TopSetReport::new("energy", f, &energy_top),
                TopSetReport::new("bridge", f, &bridge_top),
                TopSetReport::new("attribution", f, &attribution_top),
            ],
            "jaccard": {
                "energy_bridge": jaccard(&energy_top, &bridge_top),
                "energy_attribution": jaccard(&energy_top, &attribution_top),
                "bridge_attribution": jaccard(&bridge_top, &attribution_top),
            },
        }),
    )?;

    match cumulative_energy_curve(&stats.energy) {
        Ok(curve) => write_two_column_csv(run.create_file("energy_curve.csv")?, ("rank", "cumulative_energy"), curve)?,
        Err(e) => run.log(&format!("skipping energy curve: {e}")),
    }
    let active = stats.active_modality_scores();
    if active.is_empty() {
        run.log("no active concepts, skipping modality density");
    } else {
        let density = modality_density_export(&active, settings.bandwidth, settings.density_grid)
            .context("metrics::modality_density_export")?;
        write_two_column_csv(run.create_file("modality_density.csv")?, ("modality_score", "density"), density)?;
    }

    let dead = dead_feature_report(codes.values().map(|(_, c)| c), params.width());
    run.write_json(
        "summary.json",
        &json!({
            "width": params.width(),
            "image_samples": image.len(),
            "text_samples": text.len(),
            "pairs": pairs.len(),
            "active_concepts": active.len(),
            "dead_concepts": dead,
        }),
    )?;
    run.log(&format!("analyzed {} pairs", pairs.len()));
    Ok(())
}
