use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::{decode_with, SparseCode};
use crate::store::Modality;

pub const DEFAULT_ACTIVITY_EPSILON: f64 = 1e-8;

/// Codes from a single modality, all of the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeCollection {
    codes: Vec<SparseCode>,
    modality: Modality,
    dim: usize,
}

impl CodeCollection {
    pub fn new(codes: Vec<SparseCode>, modality: Modality) -> Result<Self> {
        let dim = codes.first().ok_or_else(|| Error::config("code collection is empty"))?.dim();
        if let Some(bad) = codes.iter().find(|z| z.dim() != dim) {
            return Err(Error::shape(format!("mixed code widths {dim} and {}", bad.dim())));
        }
        Ok(Self { codes, modality, dim })
    }

    pub fn codes(&self) -> &[SparseCode] {
        &self.codes
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Per-concept mean activation.
    pub fn mean(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        accumulate(&mut sum, &self.codes);
        let inv = 1.0 / self.codes.len() as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
        sum
    }
}

fn accumulate(sum: &mut [f64], codes: &[SparseCode]) {
    for z in codes {
        for &(i, v) in z.entries() {
            sum[i] += v;
        }
    }
}

/// Sparse codes of matched image–text pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCodes {
    pairs: Vec<(SparseCode, SparseCode)>,
    dim: usize,
}

impl PairedCodes {
    pub fn new(pairs: Vec<(SparseCode, SparseCode)>) -> Result<Self> {
        let dim = pairs.first().ok_or_else(|| Error::config("no matched pairs"))?.0.dim();
        for (img, txt) in &pairs {
            if img.dim() != dim || txt.dim() != dim {
                return Err(Error::shape(format!("pair widths ({}, {}) differ from {dim}", img.dim(), txt.dim())));
            }
        }
        Ok(Self { pairs, dim })
    }

    pub fn pairs(&self) -> &[(SparseCode, SparseCode)] {
        &self.pairs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// How matched pairs are weighted in the pair expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairWeighting {
    /// Every matched pair counts once.
    #[default]
    Uniform,
    /// Pairs weighted by the code inner product `z_ιᵀ z_τ`, normalized to
    /// sum to one. Off unless requested.
    CodeSimilarity,
}

impl PairWeighting {
    fn weights(&self, pairs: &PairedCodes) -> Result<Vec<f64>> {
        let n = pairs.len();
        match self {
            PairWeighting::Uniform => Ok(vec![1.0 / n as f64; n]),
            PairWeighting::CodeSimilarity => {
                let raw: Vec<f64> = pairs.pairs.iter().map(|(a, b)| sparse_dot(a, b)).collect();
                let total: f64 = raw.iter().sum();
                if total.is_nan() || total <= 0.0 {
                    return Err(Error::Numeric(
                        "code-similarity weights sum to zero: no pair shares an active concept".into(),
                    ));
                }
                Ok(raw.into_iter().map(|w| w / total).collect())
            }
        }
    }
}

fn sparse_dot(a: &SparseCode, b: &SparseCode) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    let (ea, eb) = (a.entries(), b.entries());
    while i < ea.len() && j < eb.len() {
        match ea[i].0.cmp(&eb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += ea[i].1 * eb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Mean activation per concept over every code in every collection, each
/// sample weighted equally.
pub fn energy(collections: &[&CodeCollection]) -> Result<Vec<f64>> {
    let first = collections.first().ok_or_else(|| Error::config("energy needs at least one code collection"))?;
    let dim = first.dim;
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for col in collections {
        if col.dim != dim {
            return Err(Error::shape(format!("collections of width {dim} and {}", col.dim)));
        }
        accumulate(&mut sum, &col.codes);
        n += col.len();
    }
    if n == 0 {
        return Err(Error::config("energy needs at least one code"));
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok(sum)
}

/// Per-concept share of expected activation coming from text. `None` marks
/// concepts whose combined mean activation is below `activity_epsilon`.
pub fn modality_score(
    image: &CodeCollection,
    text: &CodeCollection,
    activity_epsilon: f64,
) -> Result<Vec<Option<f64>>> {
    if image.modality != Modality::Image {
        return Err(Error::config("first collection must hold image codes"));
    }
    if text.modality != Modality::Text {
        return Err(Error::config("second collection must hold text codes"));
    }
    if image.dim != text.dim {
        return Err(Error::shape(format!("image width {} vs text width {}", image.dim, text.dim)));
    }
    let (ei, et) = (image.mean(), text.mean());
    Ok(ei
        .iter()
        .zip(&et)
        .map(|(&i, &t)| {
            let denom = i + t;
            (denom >= activity_epsilon).then(|| t / denom)
        })
        .collect())
}

fn check_dictionary(pairs: &PairedCodes, dictionary: ArrayView2<'_, f64>) -> Result<()> {
    if dictionary.nrows() != pairs.dim {
        return Err(Error::shape(format!(
            "dictionary has {} atoms, codes have width {}",
            dictionary.nrows(),
            pairs.dim
        )));
    }
    Ok(())
}

/// `M_ij = ⟨D_i, D_j⟩`.
pub fn dictionary_gram(dictionary: ArrayView2<'_, f64>) -> Array2<f64> {
    dictionary.dot(&dictionary.t())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeScores {
    /// `B = E[z_ι z_τᵀ] ⊙ M`.
    pub matrix: Array2<f64>,
    /// `b_i = ½ Σ_j (B_ij + B_ji)`.
    pub per_concept: Vec<f64>,
}

/// Full `c × c` bridge matrix. Memory is quadratic in the dictionary width;
/// use [`bridge_per_concept`] when only the per-concept scores are needed.
pub fn bridge_matrix(
    pairs: &PairedCodes,
    dictionary: ArrayView2<'_, f64>,
    weighting: PairWeighting,
) -> Result<BridgeScores> {
    check_dictionary(pairs, dictionary)?;
    let c = pairs.dim;
    let weights = weighting.weights(pairs)?;
    let mut outer = Array2::<f64>::zeros((c, c));
    for ((img, txt), w) in pairs.pairs.iter().zip(&weights) {
        for &(i, zi) in img.entries() {
            for &(j, zj) in txt.entries() {
                outer[[i, j]] += w * zi * zj;
            }
        }
    }
    let matrix = outer * dictionary_gram(dictionary);
    let per_concept = (0..c).map(|i| 0.5 * (matrix.row(i).sum() + matrix.column(i).sum())).collect();
    Ok(BridgeScores { matrix, per_concept })
}

/// Per-concept bridge scores without materializing `B`.
///
/// `Σ_j B_ij = E[z_ι,i ⟨D_i, ĥ_τ⟩]`, so each pair only touches its active
/// atoms. The symmetrized marginal equals half the retrieval attribution.
pub fn bridge_per_concept(
    pairs: &PairedCodes,
    dictionary: ArrayView2<'_, f64>,
    weighting: PairWeighting,
) -> Result<Vec<f64>> {
    let mut a = cross_reconstruction_terms(pairs, dictionary, weighting)?;
    a.iter_mut().for_each(|v| *v *= 0.5);
    Ok(a)
}

/// `A = E[z_ι ⊙ (M z_τ) + z_τ ⊙ (M z_ι)]`, computed through reconstructions:
/// `(M z)_i = ⟨D_i, Σ_j z_j D_j⟩`.
pub fn retrieval_attribution(
    pairs: &PairedCodes,
    dictionary: ArrayView2<'_, f64>,
    weighting: PairWeighting,
) -> Result<Vec<f64>> {
    cross_reconstruction_terms(pairs, dictionary, weighting)
}

fn cross_reconstruction_terms(
    pairs: &PairedCodes,
    dictionary: ArrayView2<'_, f64>,
    weighting: PairWeighting,
) -> Result<Vec<f64>> {
    check_dictionary(pairs, dictionary)?;
    let weights = weighting.weights(pairs)?;
    let mut out = vec![0.0; pairs.dim];
    for ((img, txt), w) in pairs.pairs.iter().zip(&weights) {
        let rec_img = decode_with(dictionary, img)?;
        let rec_txt = decode_with(dictionary, txt)?;
        for &(i, z) in img.entries() {
            out[i] += w * z * dot(dictionary.row(i).iter(), &rec_txt);
        }
        for &(i, z) in txt.entries() {
            out[i] += w * z * dot(dictionary.row(i).iter(), &rec_img);
        }
    }
    Ok(out)
}

fn dot<'a>(a: impl Iterator<Item = &'a f64>, b: &[f64]) -> f64 {
    a.zip(b).map(|(x, y)| x * y).sum()
}

/// Per-concept statistics of one analysis run. Inactive concepts have no
/// modality score (`null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptStats {
    pub energy: Vec<f64>,
    pub modality_score: Vec<Option<f64>>,
    pub bridge: Vec<f64>,
    pub attribution: Vec<f64>,
}

impl ConceptStats {
    pub fn width(&self) -> usize {
        self.energy.len()
    }

    pub fn active_modality_scores(&self) -> Vec<f64> {
        self.modality_score.iter().flatten().copied().collect()
    }
}

pub fn concept_stats(
    image: &CodeCollection,
    text: &CodeCollection,
    pairs: &PairedCodes,
    dictionary: ArrayView2<'_, f64>,
    activity_epsilon: f64,
    weighting: PairWeighting,
) -> Result<ConceptStats> {
    let attribution = retrieval_attribution(pairs, dictionary, weighting)?;
    Ok(ConceptStats {
        energy: energy(&[image, text])?,
        modality_score: modality_score(image, text, activity_epsilon)?,
        bridge: bridge_per_concept(pairs, dictionary, weighting)?,
        attribution,
    })
}
