//! Synthetic activations with planted ground truth.
//!
//! All randomness comes from ChaCha8 streams seeded through
//! [`derive_seed`](crate::derive_seed), one stream per labelled stage, and
//! every stage draws in a fixed order, so output is bitwise reproducible.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::retrieval::{TaskEntry, TaskSpec};
use crate::sae::{normalize_rows, SparseCode};
use crate::store::{ActivationShard, Modality, TokenMeta, TokenRole};

pub const DEFAULT_SYNTH_SEED: u64 = 0xC0C0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Planted dictionary size.
    pub c_true: usize,
    pub d: usize,
    /// Active concepts per sample (per side for paired corpora).
    pub k_true: usize,
    pub noise_sigma: f64,
    /// Samples, or pairs for paired corpora.
    pub n_samples: usize,
    pub shared_fraction: f64,
    /// Scale applied to text-specific concept activations.
    pub text_bias_beta: f64,
    /// Magnitude `s` of the planted nuisance direction on the text side.
    pub nuisance_strength: f64,
    /// Image-side nuisance magnitude relative to the text side.
    pub image_nuisance_ratio: f64,
    pub tokens_per_sample: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            c_true: 128,
            d: 64,
            k_true: 4,
            noise_sigma: 0.01,
            n_samples: 500,
            shared_fraction: 0.5,
            text_bias_beta: 1.0,
            nuisance_strength: 0.0,
            image_nuisance_ratio: 0.25,
            tokens_per_sample: 1,
            seed: DEFAULT_SYNTH_SEED,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_true == 0 || self.d == 0 {
            return Err(Error::config("c_true and d must be positive"));
        }
        if self.k_true == 0 || self.k_true > self.c_true {
            return Err(Error::config(format!(
                "k_true must lie in [1, c_true = {}], got {}",
                self.c_true, self.k_true
            )));
        }
        if self.n_samples == 0 || self.tokens_per_sample == 0 {
            return Err(Error::config("n_samples and tokens_per_sample must be positive"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("text_bias_beta", self.text_bias_beta),
            ("nuisance_strength", self.nuisance_strength),
            ("image_nuisance_ratio", self.image_nuisance_ratio),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return Err(Error::config(format!("shared_fraction must lie in [0, 1], got {}", self.shared_fraction)));
        }
        Ok(())
    }

    /// Which planted concepts are shared, image-only and text-only.
    pub fn partition(&self) -> ConceptPartition {
        let c = self.c_true;
        let n_shared = ((self.shared_fraction * c as f64).round() as usize).min(c);
        let rest = c - n_shared;
        let n_image = rest / 2;
        ConceptPartition {
            shared: (0..n_shared).collect(),
            image_only: (n_shared..n_shared + n_image).collect(),
            text_only: (n_shared + n_image..c).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptPartition {
    pub shared: Vec<usize>,
    pub image_only: Vec<usize>,
    pub text_only: Vec<usize>,
}

/// Gaussian rows scaled to unit norm.
pub fn gen_planted_dictionary(c_true: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    if c_true == 0 || d == 0 {
        return Err(Error::config("dictionary dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::from_shape_simple_fn((c_true, d), || StandardNormal.sample(&mut rng));
    normalize_rows(&mut m);
    Ok(m)
}

fn magnitude(rng: &mut ChaCha8Rng) -> f64 {
    let g: f64 = StandardNormal.sample(rng);
    g.abs() + 0.5
}

fn draw_code(rng: &mut ChaCha8Rng, pool: &[usize], k: usize, scale: f64, out: &mut Vec<(usize, f64)>) {
    let k = k.min(pool.len());
    if k == 0 {
        return;
    }
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    for i in picked {
        out.push((i, scale * magnitude(rng)));
    }
}

fn signal(dictionary: ArrayView2<'_, f64>, code: &[(usize, f64)], out: &mut [f64]) {
    out.fill(0.0);
    for &(i, v) in code {
        for (o, a) in out.iter_mut().zip(dictionary.row(i)) {
            *o += v * a;
        }
    }
}

fn noise_into(rng: &mut ChaCha8Rng, noise: Option<&Normal<f64>>, v: &mut [f64]) {
    if let Some(n) = noise {
        v.iter_mut().for_each(|x| *x += n.sample(rng));
    }
}

fn noise_dist(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, sigma).map(Some).map_err(|e| Error::config(format!("noise_sigma: {e}")))
}

/// Samples with `k_true` uniformly chosen planted concepts each, magnitudes
/// `|N(0,1)| + 0.5`, and additive `N(0, noise_sigma²)` noise. Returns a
/// single-token-per-sample image shard and the true codes.
pub fn gen_activations(
    dictionary: ArrayView2<'_, f64>,
    n: usize,
    k_true: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(ActivationShard, Vec<SparseCode>)> {
    let (c, d) = dictionary.dim();
    if k_true == 0 || k_true > c {
        return Err(Error::config(format!("k_true must lie in [1, {c}], got {k_true}")));
    }
    if n == 0 {
        return Err(Error::config("n must be positive"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    let noise = noise_dist(noise_sigma)?;
    let all: Vec<usize> = (0..c).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(n * d);
    let mut meta = Vec::with_capacity(n);
    let mut codes = Vec::with_capacity(n);
    let mut h = vec![0.0; d];
    for j in 0..n {
        let mut entries = Vec::with_capacity(k_true);
        draw_code(&mut rng, &all, k_true, 1.0, &mut entries);
        signal(dictionary, &entries, &mut h);
        noise_into(&mut rng, noise.as_ref(), &mut h);
        vectors.extend(h.iter().map(|&x| x as f32));
        meta.push(TokenMeta {
            sample_id: j as u64,
            modality: Modality::Image,
            token_role: TokenRole::Image,
            token_index: 0,
        });
        codes.push(SparseCode::new(c, entries)?);
    }
    Ok((ActivationShard::new(d, vectors, meta)?, codes))
}

/// Unit vector orthogonal to the span of the dictionary rows when `d > c`.
/// Otherwise it is made orthogonal to as many leading rows as the dimension
/// allows (the first `d − 1`).
pub fn gen_nuisance_direction(dictionary: ArrayView2<'_, f64>, seed: u64) -> Result<Vec<f64>> {
    let (c, d) = dictionary.dim();
    let limit = c.min(d.saturating_sub(1));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(limit);
    for row in dictionary.rows().into_iter().take(limit) {
        let mut v = row.to_vec();
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
                u.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            u.iter_mut().for_each(|x| *x /= n);
            return Ok(u);
        }
    }
    Err(Error::Numeric("could not draw a nuisance direction".into()))
}

/// A two-modality corpus of `n_samples` matched pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    pub image: ActivationShard,
    pub text: ActivationShard,
    pub task: TaskSpec,
    pub nuisance: Vec<f64>,
    pub dictionary: Array2<f64>,
    pub partition: ConceptPartition,
    pub image_codes: Vec<SparseCode>,
    pub text_codes: Vec<SparseCode>,
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

/// Pair `j` is image sample `j` and text sample `n + j`. Both sides carry the
/// same shared-concept code plus their own modality-specific concepts; the
/// text side adds `s·u` and the image side `image_nuisance_ratio·s·u`.
/// The task queries with text and retrieves images.
pub fn gen_paired_corpus(spec: &SynthSpec) -> Result<PairedCorpus> {
    spec.validate()?;
    let dictionary = gen_planted_dictionary(spec.c_true, spec.d, derive_seed(spec.seed, "synth/dictionary"))?;
    let nuisance = gen_nuisance_direction(dictionary.view(), derive_seed(spec.seed, "synth/nuisance"))?;
    let partition = spec.partition();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth/pairs"));
    let noise = noise_dist(spec.noise_sigma)?;

    let k = spec.k_true;
    let k_shared =
        if partition.shared.is_empty() { 0 } else { ((spec.shared_fraction * k as f64).ceil() as usize).min(k) };
    let k_own = k - k_shared;
    let (n, d, t) = (spec.n_samples, spec.d, spec.tokens_per_sample);
    let s_text = spec.nuisance_strength;
    let s_image = spec.nuisance_strength * spec.image_nuisance_ratio;

    let mut image_v = Vec::with_capacity(n * t * d);
    let mut text_v = Vec::with_capacity(n * t * d);
    let mut image_m = Vec::with_capacity(n * t);
    let mut text_m = Vec::with_capacity(n * t);
    let mut image_codes = Vec::with_capacity(n);
    let mut text_codes = Vec::with_capacity(n);
    let mut clean = vec![0.0; d];
    let mut tok = vec![0.0; d];

    for j in 0..n {
        let mut shared = Vec::with_capacity(k_shared);
        draw_code(&mut rng, &partition.shared, k_shared, 1.0, &mut shared);
        let mut img = shared.clone();
        draw_code(&mut rng, &partition.image_only, k_own, 1.0, &mut img);
        let mut txt = shared;
        draw_code(&mut rng, &partition.text_only, k_own, spec.text_bias_beta, &mut txt);
        img.sort_unstable_by_key(|e| e.0);
        txt.sort_unstable_by_key(|e| e.0);

        for (code, s, modality, role, sample_id, vectors, meta) in [
            (&img, s_image, Modality::Image, TokenRole::Image, j, &mut image_v, &mut image_m),
            (&txt, s_text, Modality::Text, TokenRole::Content, n + j, &mut text_v, &mut text_m),
        ] {
            signal(dictionary.view(), code, &mut clean);
            clean.iter_mut().zip(&nuisance).for_each(|(x, u)| *x += s * u);
            for ti in 0..t {
                tok.copy_from_slice(&clean);
                noise_into(&mut rng, noise.as_ref(), &mut tok);
                vectors.extend(tok.iter().map(|&x| x as f32));
                meta.push(TokenMeta {
                    sample_id: sample_id as u64,
                    modality,
                    token_role: role,
                    token_index: ti as u32,
                });
            }
        }
        image_codes.push(SparseCode::new(spec.c_true, img)?);
        text_codes.push(SparseCode::new(spec.c_true, txt)?);
    }

    let w = id_width(n);
    let mut qrels = BTreeMap::new();
    let mut queries = Vec::with_capacity(n);
    let mut candidates = Vec::with_capacity(n);
    for j in 0..n {
        let qid = format!("t{j:0w$}");
        let cid = format!("i{j:0w$}");
        queries.push(TaskEntry { id: qid.clone(), sample_id: (n + j) as u64 });
        candidates.push(TaskEntry { id: cid.clone(), sample_id: j as u64 });
        qrels.insert(qid, BTreeSet::from([cid]));
    }
    let task = TaskSpec { task_label: "text->image".into(), queries, candidates, qrels };

    Ok(PairedCorpus {
        image: ActivationShard::new(d, image_v, image_m)?,
        text: ActivationShard::new(d, text_v, text_m)?,
        task,
        nuisance,
        dictionary,
        partition,
        image_codes,
        text_codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::decode_with;

    fn max_pairwise_cos(m: &Array2<f64>) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in i + 1..m.nrows() {
                best = best.max(m.row(i).dot(&m.row(j)).abs());
            }
        }
        best
    }

    #[test]
    fn dictionary_rows_unit_and_deterministic() {
        let a = gen_planted_dictionary(128, 64, DEFAULT_SYNTH_SEED).unwrap();
        let b = gen_planted_dictionary(128, 64, DEFAULT_SYNTH_SEED).unwrap();
        assert_eq!(a, b);
        for r in a.rows() {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-6);
        }
        assert!(max_pairwise_cos(&a) < 0.5);
        assert_ne!(a, gen_planted_dictionary(128, 64, 1).unwrap());
    }

    #[test]
    fn noiseless_activations_reconstruct_exactly() {
        let dict = gen_planted_dictionary(32, 16, 3).unwrap();
        let (shard, codes) = gen_activations(dict.view(), 200, 3, 0.0, 9).unwrap();
        assert_eq!(shard.count(), 200);
        for (row, z) in shard.rows().zip(&codes) {
            assert_eq!(z.len(), 3);
            assert!(z.entries().iter().all(|&(_, v)| v >= 0.5));
            let h = decode_with(dict.view(), z).unwrap();
            for (a, b) in row.iter().zip(&h) {
                assert!((*a as f64 - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn nuisance_orthogonal_when_room() {
        let dict = gen_planted_dictionary(16, 40, 5).unwrap();
        let u = gen_nuisance_direction(dict.view(), 6).unwrap();
        assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        for r in dict.rows() {
            let p: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!(p.abs() < 1e-10);
        }
    }

    #[test]
    fn nuisance_when_dictionary_spans_space() {
        let dict = gen_planted_dictionary(64, 16, 5).unwrap();
        let u = gen_nuisance_direction(dict.view(), 6).unwrap();
        for r in dict.rows().into_iter().take(15) {
            let p: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!(p.abs() < 1e-10);
        }
    }

    #[test]
    fn partition_covers_all_concepts() {
        let spec = SynthSpec { c_true: 11, shared_fraction: 0.3, ..SynthSpec::default() };
        let p = spec.partition();
        assert_eq!(p.shared.len(), 3);
        assert_eq!(p.image_only.len(), 4);
        assert_eq!(p.text_only.len(), 4);
        let all: Vec<usize> = p.shared.iter().chain(&p.image_only).chain(&p.text_only).copied().collect();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn pairs_share_their_shared_code() {
        let spec = SynthSpec { n_samples: 50, text_bias_beta: 3.0, ..SynthSpec::default() };
        let c = gen_paired_corpus(&spec).unwrap();
        let p = &c.partition;
        for (zi, zt) in c.image_codes.iter().zip(&c.text_codes) {
            let si: Vec<_> = zi.entries().iter().filter(|e| e.0 < p.shared.len()).collect();
            let st: Vec<_> = zt.entries().iter().filter(|e| e.0 < p.shared.len()).collect();
            assert_eq!(si, st);
            assert_eq!(si.len(), 2);
            assert!(zi.entries().iter().all(|e| !p.text_only.contains(&e.0)));
            assert!(zt.entries().iter().filter(|e| p.text_only.contains(&e.0)).all(|e| e.1 >= 1.5));
        }
        assert_eq!(c.task.queries[7].sample_id, 57);
        assert_eq!(c.task.qrels["t07"], BTreeSet::from(["i07".to_string()]));
        assert_eq!(c.text.meta()[0].modality, Modality::Text);
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = SynthSpec { n_samples: 20, tokens_per_sample: 3, nuisance_strength: 2.0, ..SynthSpec::default() };
        assert_eq!(gen_paired_corpus(&spec).unwrap(), gen_paired_corpus(&spec).unwrap());
        let other = SynthSpec { seed: 1, ..spec.clone() };
        assert_ne!(gen_paired_corpus(&spec).unwrap().image, gen_paired_corpus(&other).unwrap().image);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SynthSpec { k_true: 0, ..SynthSpec::default() },
            SynthSpec { k_true: 200, ..SynthSpec::default() },
            SynthSpec { shared_fraction: 1.5, ..SynthSpec::default() },
            SynthSpec { noise_sigma: -1.0, ..SynthSpec::default() },
            SynthSpec { n_samples: 0, ..SynthSpec::default() },
        ] {
            assert!(matches!(spec.validate(), Err(Error::Config(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let s: SynthSpec = serde_json::from_str(r#"{"c_true": 8, "d": 4}"#).unwrap();
        assert_eq!(s.k_true, 4);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"ctrue": 8}"#).is_err());
    }
}
