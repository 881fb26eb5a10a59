use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A sparse concept-activation vector: strictly increasing indices in
/// `[0, dim)` paired with strictly positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseCode {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for (pos, &(i, v)) in entries.iter().enumerate() {
            if i >= dim {
                return Err(Error::Index { index: i, dim });
            }
            if pos > 0 && entries[pos - 1].0 >= i {
                return Err(Error::Consistency(format!(
                    "code indices must be strictly increasing (found {} then {i})",
                    entries[pos - 1].0
                )));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Consistency(format!("code value {v} at index {i} is not positive")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Keeps the strictly positive entries of a dense vector.
    pub fn from_dense(dense: &[f64]) -> Self {
        let entries = dense.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, &v)| (i, v)).collect();
        Self { dim: dense.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// ReLU followed by Top-K: the `k` largest strictly positive entries, ties
/// going to the lower index. Output is sorted by index.
pub fn top_k_positive(pre: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = pre.iter().copied().enumerate().filter(|&(_, v)| v > 0.0).collect();
    let rank =
        |a: &(usize, f64), b: &(usize, f64)| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0));
    if cand.len() > k {
        if k == 0 {
            return Vec::new();
        }
        cand.select_nth_unstable_by(k - 1, rank);
        cand.truncate(k);
    }
    cand.sort_unstable_by_key(|&(i, _)| i);
    cand
}

/// Top-K SAE parameters. All matrices are `c × d`, one concept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    pub(crate) enc_weight: Array2<f64>,
    pub(crate) dictionary: Array2<f64>,
    pub(crate) enc_bias: Array1<f64>,
    pub(crate) k: usize,
}

impl SaeParams {
    pub fn new(enc_weight: Array2<f64>, dictionary: Array2<f64>, enc_bias: Array1<f64>, k: usize) -> Result<Self> {
        let (c, d) = dictionary.dim();
        if c == 0 || d == 0 {
            return Err(Error::shape("dictionary must be non-empty"));
        }
        if enc_weight.dim() != (c, d) {
            return Err(Error::shape(format!("encoder weight is {:?}, dictionary is {:?}", enc_weight.dim(), (c, d))));
        }
        if enc_bias.len() != c {
            return Err(Error::shape(format!("bias has {} entries for width {c}", enc_bias.len())));
        }
        if k == 0 || k > c {
            return Err(Error::config(format!("k = {k} must lie in 1..={c}")));
        }
        for (name, ok) in [
            ("enc_weight", enc_weight.iter().all(|v| v.is_finite())),
            ("dictionary", dictionary.iter().all(|v| v.is_finite())),
            ("enc_bias", enc_bias.iter().all(|v| v.is_finite())),
        ] {
            if !ok {
                return Err(Error::NonFinite { param: name.into() });
            }
        }
        Ok(Self { enc_weight, dictionary, enc_bias, k })
    }

    /// Seeded Gaussian dictionary with unit rows; the encoder starts as a
    /// copy of the dictionary and the bias at zero.
    pub fn init(width: usize, input_dim: usize, k: usize, seed: u64) -> Result<Self> {
        if width == 0 || input_dim == 0 {
            return Err(Error::config("width and input dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dict = Array2::from_shape_simple_fn((width, input_dim), || StandardNormal.sample(&mut rng));
        normalize_rows(&mut dict);
        Self::new(dict.clone(), dict, Array1::zeros(width), k)
    }

    pub fn width(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn enc_weight(&self) -> ArrayView2<'_, f64> {
        self.enc_weight.view()
    }

    pub fn dictionary(&self) -> ArrayView2<'_, f64> {
        self.dictionary.view()
    }

    pub fn enc_bias(&self) -> ArrayView1<'_, f64> {
        self.enc_bias.view()
    }

    pub fn normalize_dictionary(&mut self) {
        normalize_rows(&mut self.dictionary);
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(format!("input of length {len} for SAE input dimension {}", self.input_dim())));
        }
        Ok(())
    }

    /// `W_enc · h + b`.
    pub fn pre_activation(&self, h: &[f64]) -> Result<Array1<f64>> {
        self.check_input(h.len())?;
        Ok(self.enc_weight.dot(&ArrayView1::from(h)) + &self.enc_bias)
    }

    /// Row-wise pre-activations for an `n × d` batch.
    pub fn pre_activation_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(batch.ncols())?;
        Ok(batch.dot(&self.enc_weight.t()) + self.enc_bias.view().insert_axis(Axis(0)))
    }

    pub fn encode(&self, h: &[f64]) -> Result<SparseCode> {
        let pre = self.pre_activation(h)?;
        Ok(SparseCode { dim: self.width(), entries: top_k_positive(pre.as_slice().expect("contiguous"), self.k) })
    }

    pub fn encode_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<SparseCode>> {
        let pre = self.pre_activation_batch(batch)?;
        Ok(pre
            .rows()
            .into_iter()
            .map(|row| SparseCode {
                dim: self.width(),
                entries: top_k_positive(row.as_slice().expect("contiguous"), self.k),
            })
            .collect())
    }

    /// `Σ_i z_i · D_i`.
    pub fn decode(&self, z: &SparseCode) -> Result<Vec<f64>> {
        decode_with(self.dictionary.view(), z)
    }
}

/// Linear combination of dictionary rows selected by a sparse code.
pub fn decode_with(dictionary: ArrayView2<'_, f64>, z: &SparseCode) -> Result<Vec<f64>> {
    let c = dictionary.nrows();
    if z.dim != c {
        return Err(Error::shape(format!("code of width {} for dictionary of {c} atoms", z.dim)));
    }
    let mut out = vec![0.0; dictionary.ncols()];
    for &(i, v) in &z.entries {
        if i >= c {
            return Err(Error::Index { index: i, dim: c });
        }
        for (o, &a) in out.iter_mut().zip(dictionary.row(i)) {
            *o += v * a;
        }
    }
    Ok(out)
}

/// Scales each nonzero row to unit Euclidean norm.
pub fn normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
}
