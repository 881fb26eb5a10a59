use anyhow::Context;
use saeprobe::derive_seed;
use saeprobe::store::{save_matrix, save_shard};
use saeprobe::synth::{gen_paired_corpus, SynthSpec};
use serde_json::json;

use crate::args::SynthArgs;
use crate::rundir::RunDir;
use crate::settings::{resolve, Flags};

pub const IMAGE_SHARD: &str = "image.shard";
pub const TEXT_SHARD: &str = "text.shard";
pub const TASK_FILE: &str = "task.json";

pub fn run(seed: u64, args: &SynthArgs) -> anyhow::Result<()> {
    let defaults = SynthSpec { seed: derive_seed(seed, "synth"), ..SynthSpec::default() };
    let mut flags = Flags::default();
    flags
        .set("c_true", args.c_true)
        .set("d", args.d)
        .set("k_true", args.k_true)
        .set("noise_sigma", args.noise_sigma)
        .set("n_samples", args.n_samples)
        .set("shared_fraction", args.shared_fraction)
        .set("text_bias_beta", args.text_bias_beta)
        .set("nuisance_strength", args.nuisance_strength)
        .set("image_nuisance_ratio", args.image_nuisance_ratio)
        .set("tokens_per_sample", args.tokens_per_sample);
    let spec: SynthSpec = resolve(&defaults, args.common.config.as_deref(), flags)?;
    spec.validate().context("synth::SynthSpec::validate")?;

    let mut run = RunDir::create(&args.common.out, "synth")?;
    run.echo(seed, &spec, json!({}))?;
    let corpus = gen_paired_corpus(&spec).context("synth::gen_paired_corpus")?;

    save_shard(&corpus.image, &run.join(IMAGE_SHARD)).context("store::save_shard(image)")?;
    save_shard(&corpus.text, &run.join(TEXT_SHARD)).context("store::save_shard(text)")?;
    run.write_json(TASK_FILE, &corpus.task)?;
    let nuisance: Vec<f32> = corpus.nuisance.iter().map(|&v| v as f32).collect();
    save_matrix(&run.join("nuisance.bin"), spec.d, &nuisance)?;
    let planted: Vec<f32> = corpus.dictionary.iter().map(|&v| v as f32).collect();
    save_matrix(&run.join("planted_dictionary.bin"), spec.d, &planted)?;
    run.write_json("partition.json", &corpus.partition)?;
    run.log(&format!("wrote {} pairs of dimension {}", spec.n_samples, spec.d));
    Ok(())
}
