use saeprobe::metrics::{concept_stats, CodeCollection, PairWeighting, PairedCodes};
use saeprobe::retrieval::{build_task, evaluate_task, EvalOptions};
use saeprobe::sae::{epoch_batches, train, SaeShape, TrainConfig};
use saeprobe::store::RoleMask;
use saeprobe::synth::{gen_activations, gen_paired_corpus, gen_planted_dictionary, SynthSpec};
use saeprobe::{derive_seed, Modality, PoolingStrategy, SparseCode};

#[test]
fn residual_noise_has_requested_scale() {
    let (c, d, sigma) = (64, 32, 0.05);
    let dict = gen_planted_dictionary(c, d, 1).unwrap();
    let (shard, codes) = gen_activations(dict.view(), 4000, 4, sigma, 2).unwrap();
    let mut sum_sq = 0.0;
    for (row, code) in shard.rows().zip(&codes) {
        let mut clean = vec![0.0; d];
        for &(i, v) in code.entries() {
            for (j, x) in clean.iter_mut().enumerate() {
                *x += v * dict[[i, j]];
            }
        }
        sum_sq += row.iter().zip(&clean).map(|(&a, b)| (f64::from(a) - b).powi(2)).sum::<f64>();
    }
    let empirical = (sum_sq / (4000 * d) as f64).sqrt();
    // 128k draws put the standard error near 0.2%.
    assert!((empirical / sigma - 1.0).abs() < 0.02, "empirical sigma {empirical}");
}

#[test]
fn clean_shared_corpus_retrieves_perfectly() {
    let spec = SynthSpec {
        shared_fraction: 1.0,
        noise_sigma: 0.0,
        nuisance_strength: 0.0,
        n_samples: 300,
        ..SynthSpec::default()
    };
    let corpus = gen_paired_corpus(&spec).unwrap();
    let task = build_task(&[corpus.image, corpus.text], &corpus.task, PoolingStrategy::Mean, &RoleMask::new()).unwrap();
    let report = evaluate_task(&task, &EvalOptions::default()).unwrap();
    assert_eq!(report.recall_at[&1], 1.0);
}

#[test]
fn nuisance_breaks_retrieval() {
    let spec = SynthSpec { shared_fraction: 1.0, nuisance_strength: 20.0, n_samples: 300, ..SynthSpec::default() };
    let corpus = gen_paired_corpus(&spec).unwrap();
    let task = build_task(&[corpus.image, corpus.text], &corpus.task, PoolingStrategy::Mean, &RoleMask::new()).unwrap();
    let report = evaluate_task(&task, &EvalOptions::default()).unwrap();
    assert!(report.recall_at[&1] < 0.2, "R@1 = {}", report.recall_at[&1]);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn text_biased_concepts_score_text_side() {
    let spec = SynthSpec { c_true: 32, d: 32, text_bias_beta: 3.0, n_samples: 3000, ..SynthSpec::default() };
    let corpus = gen_paired_corpus(&spec).unwrap();
    let mut rows = corpus.image.vectors().to_vec();
    rows.extend_from_slice(corpus.text.vectors());
    let config = TrainConfig {
        steps: 1500,
        batch_size: 256,
        seed: derive_seed(spec.seed, "test/init"),
        ..TrainConfig::default()
    };
    let batches =
        epoch_batches(&rows, spec.d, config.batch_size, 6000, derive_seed(spec.seed, "test/shuffle")).unwrap();
    let params = train(batches, &config, SaeShape { width: 64, input_dim: spec.d, k: 4 }).unwrap().params;

    let encode = |shard: &saeprobe::ActivationShard| -> Vec<SparseCode> {
        shard.rows().map(|r| params.encode(&r.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()).unwrap()).collect()
    };
    let (img, txt) = (encode(&corpus.image), encode(&corpus.text));
    let pairs = PairedCodes::new(img.iter().cloned().zip(txt.iter().cloned()).collect()).unwrap();
    let stats = concept_stats(
        &CodeCollection::new(img, Modality::Image).unwrap(),
        &CodeCollection::new(txt, Modality::Text).unwrap(),
        &pairs,
        params.dictionary(),
        1e-8,
        PairWeighting::Uniform,
    )
    .unwrap();

    let learned = params.dictionary();
    let matched: Vec<f64> = corpus
        .partition
        .text_only
        .iter()
        .map(|&p| {
            let planted = corpus.dictionary.row(p);
            let best = (0..learned.nrows())
                .max_by(|&a, &b| planted.dot(&learned.row(a)).total_cmp(&planted.dot(&learned.row(b))))
                .unwrap();
            stats.modality_score[best].unwrap_or(0.0)
        })
        .collect();
    assert!(!matched.is_empty());
    let m = median(matched);
    assert!(m > 0.5, "median modality score of text-specific concepts = {m}");
}
