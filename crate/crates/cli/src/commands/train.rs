use anyhow::Context;
use saeprobe::ndarray::Array2;
use saeprobe::sae::{dead_feature_report, epoch_batches, save_checkpoint, train, write_loss_csv};
use serde_json::json;

use super::load_shards;
use crate::args::TrainArgs;
use crate::rundir::{paths_json, RunDir};
use crate::settings::{resolve, Flags, TrainSettings};

pub const CHECKPOINT_DIR: &str = "checkpoint";

pub fn run(seed: u64, args: &TrainArgs) -> anyhow::Result<()> {
    let defaults = TrainSettings::for_profile(args.profile, seed);
    let mut flags = Flags::default();
    flags
        .set("width", args.width)
        .set("k", args.k)
        .set("learning_rate", args.learning_rate)
        .set("batch_size", args.batch_size)
        .set("steps", args.steps)
        .set("alpha", args.alpha)
        .set("buffer_capacity", args.buffer_capacity)
        .set("standardize", args.standardize.then_some(true));
    let settings: TrainSettings = resolve(&defaults, args.common.config.as_deref(), flags)?;
    let config = settings.train_config();
    config.validate().context("sae::TrainConfig::validate")?;

    let mut run = RunDir::create(&args.common.out, "train")?;
    run.echo(seed, &settings, json!({ "profile": args.profile, "shards": paths_json(&args.shards) }))?;
    if args.dry_run {
        run.log("dry run, settings resolved");
        return Ok(());
    }

    let shards = load_shards(&args.shards)?;
    let dim = shards[0].dim();
    let rows: Vec<f32> = shards.iter().flat_map(|s| s.vectors().iter().copied()).collect();
    let capacity = settings.buffer_capacity.max(settings.batch_size);
    let batches = epoch_batches(&rows, dim, settings.batch_size, capacity, settings.shuffle_seed)
        .context("sae::epoch_batches")?;
    run.log(&format!("training on {} tokens of dimension {dim}", rows.len() / dim));
    let outcome = train(batches, &config, settings.shape(dim)).context("sae::train")?;

    save_checkpoint(&run.join(CHECKPOINT_DIR), &outcome.params, settings.alpha, settings.steps, settings.init_seed)
        .context("sae::save_checkpoint")?;
    write_loss_csv(run.create_file("loss.csv")?, &outcome.history)?;

    let mut codes = Vec::new();
    for shard in &shards {
        let batch = ndarray_rows(shard.vectors(), dim);
        codes.extend(outcome.params.encode_batch(batch.view()).context("sae::encode_batch")?);
    }
    let dead = dead_feature_report(&codes, settings.width);
    let last = outcome.history.last().expect("at least one step");
    run.write_json(
        "train_summary.json",
        &json!({
            "steps": settings.steps,
            "final_loss": last.total,
            "final_reconstruction": last.reconstruction,
            "input_scale": outcome.input_scale,
            "dead_features": dead,
        }),
    )?;
    run.log(&format!("finished, {} dead features", dead.len()));
    Ok(())
}

fn ndarray_rows(values: &[f32], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((values.len() / dim, dim), |(i, j)| f64::from(values[i * dim + j]))
}
