//! Subspace removal: project embeddings off the span of the most
//! similarity-dominant dictionary atoms.
//!
//! The atoms with the highest retrieval attribution form `D_R` (m × d). The
//! top right singular vectors of `D_R` give an orthonormal basis `V_r`, and
//! each embedding is replaced by the unit vector along `h − V_r V_rᵀ h`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{fraction_count, rank_by_score};
use crate::store::{load_matrix, save_matrix};

/// Residual norms below this are treated as lying inside the subspace.
pub const DEGENERATE_RESIDUAL: f64 = 1e-9;

pub const DEFAULT_REMOVAL_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Keep exactly `r` singular directions.
    Fixed(usize),
    /// Smallest `r` whose squared singular values reach this share of the total.
    EnergyThreshold(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::EnergyThreshold(0.99)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalSubspace {
    /// `d × r`, orthonormal columns.
    basis: Array2<f64>,
    source_indices: Vec<usize>,
    singular_values: Vec<f64>,
    fraction: f64,
    policy: RankPolicy,
}

impl RemovalSubspace {
    /// The subspace spanned by nothing: removal reduces to normalization.
    pub fn empty(dim: usize) -> Self {
        Self {
            basis: Array2::zeros((dim, 0)),
            source_indices: Vec::new(),
            singular_values: Vec::new(),
            fraction: 0.0,
            policy: RankPolicy::Fixed(0),
        }
    }

    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    /// Singular values of `D_R`, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn policy(&self) -> RankPolicy {
        self.policy
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// `V_r V_rᵀ`.
    pub fn projector(&self) -> Array2<f64> {
        self.basis.dot(&self.basis.t())
    }
}

/// Selects the top-attribution atoms and returns their principal subspace.
pub fn build_removal_subspace(
    dictionary: ArrayView2<'_, f64>,
    attribution: &[f64],
    fraction: f64,
    policy: RankPolicy,
) -> Result<RemovalSubspace> {
    let (c, d) = dictionary.dim();
    if attribution.len() != c {
        return Err(Error::shape(format!("{} attribution scores for {c} atoms", attribution.len())));
    }
    let m = fraction_count(fraction, c)?;
    let mut source_indices: Vec<usize> = rank_by_score(attribution)?.into_iter().take(m).collect();
    source_indices.sort_unstable();

    let sub = DMatrix::from_fn(m, d, |i, j| dictionary[[source_indices[i], j]]);
    if sub.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { param: "selected dictionary atoms".into() });
    }
    let svd = sub.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let top = singular_values.first().copied().unwrap_or(0.0);
    if top.is_nan() || top <= 1e-12 {
        return Err(Error::Numeric("selected atoms are all zero; subspace is degenerate".into()));
    }

    let max_rank = singular_values.len();
    let r = match policy {
        RankPolicy::Fixed(r) => {
            if r > max_rank {
                return Err(Error::config(format!("rank {r} exceeds min(m, d) = {max_rank}")));
            }
            r
        }
        RankPolicy::EnergyThreshold(theta) => {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::config(format!("energy threshold {theta} must lie in [0, 1]")));
            }
            energy_rank(&singular_values, theta)
        }
    };

    let basis = Array2::from_shape_fn((d, r), |(row, col)| v_t[(order[col], row)]);
    Ok(RemovalSubspace { basis, source_indices, singular_values, fraction, policy })
}

fn energy_rank(singular_values: &[f64], theta: f64) -> usize {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if theta <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (r, s) in singular_values.iter().enumerate() {
        acc += s * s;
        // Relative slack absorbs round-off in the running sum.
        if acc >= theta * total * (1.0 - 1e-12) {
            return r + 1;
        }
    }
    singular_values.len()
}

/// `h̃ = h − V_r V_rᵀ h`, scaled to unit length.
pub fn remove_and_normalize(h: &[f64], subspace: &RemovalSubspace) -> Result<Vec<f64>> {
    if h.len() != subspace.dim() {
        return Err(Error::shape(format!(
            "embedding of length {} for subspace in dimension {}",
            h.len(),
            subspace.dim()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { param: "embedding".into() });
    }
    let mut residual = h.to_vec();
    for col in subspace.basis.columns() {
        let coef: f64 = col.iter().zip(h).map(|(v, x)| v * x).sum();
        for (r, v) in residual.iter_mut().zip(col.iter()) {
            *r -= coef * v;
        }
    }
    let norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_RESIDUAL {
        return Err(Error::DegenerateEmbedding { norm });
    }
    residual.iter_mut().for_each(|v| *v /= norm);
    Ok(residual)
}

pub const SUBSPACE_BASIS_FILE: &str = "basis.bin";
pub const SUBSPACE_MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceManifest {
    pub fraction: f64,
    pub rank_policy: RankPolicy,
    pub r: usize,
    pub source_indices: Vec<usize>,
    pub singular_values: Vec<f64>,
}

/// Stores `V_rᵀ` (one basis vector per row) and the manifest under `dir`.
pub fn save_subspace(dir: &Path, subspace: &RemovalSubspace) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rows: Vec<f32> = subspace.basis.t().iter().map(|&v| v as f32).collect();
    save_matrix(&dir.join(SUBSPACE_BASIS_FILE), subspace.dim(), &rows)?;
    let manifest = SubspaceManifest {
        fraction: subspace.fraction,
        rank_policy: subspace.policy,
        r: subspace.rank(),
        source_indices: subspace.source_indices.clone(),
        singular_values: subspace.singular_values.clone(),
    };
    fs::write(dir.join(SUBSPACE_MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_subspace(dir: &Path) -> Result<RemovalSubspace> {
    let manifest: SubspaceManifest = serde_json::from_slice(&fs::read(dir.join(SUBSPACE_MANIFEST_FILE))?)?;
    let (header, data) = load_matrix(&dir.join(SUBSPACE_BASIS_FILE))?;
    if header.count != manifest.r {
        return Err(Error::Consistency(format!(
            "basis file holds {} vectors, manifest says r = {}",
            header.count, manifest.r
        )));
    }
    let d = header.dim;
    let basis = Array2::from_shape_fn((d, manifest.r), |(i, j)| f64::from(data[j * d + i]));
    Ok(RemovalSubspace {
        basis,
        source_indices: manifest.source_indices,
        singular_values: manifest.singular_values,
        fraction: manifest.fraction,
        policy: manifest.rank_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn axis_subspace(d: usize, axes: &[usize]) -> RemovalSubspace {
        let mut basis = Array2::zeros((d, axes.len()));
        for (col, &a) in axes.iter().enumerate() {
            basis[[a, col]] = 1.0;
        }
        RemovalSubspace {
            basis,
            source_indices: axes.to_vec(),
            singular_values: vec![1.0; axes.len()],
            fraction: 1.0,
            policy: RankPolicy::Fixed(axes.len()),
        }
    }

    #[test]
    fn single_atom_is_its_own_basis() {
        let s = 1.0 / 3f64.sqrt();
        let dict = array![[s, s, s], [1.0, 0.0, 0.0]];
        let sub = build_removal_subspace(dict.view(), &[5.0, 1.0], 0.5, RankPolicy::default()).unwrap();
        assert_eq!(sub.rank(), 1);
        assert_eq!(sub.source_indices(), &[0]);
        let col = sub.basis().column(0).to_owned();
        assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        assert!((col.dot(&dict.row(0)).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_atoms_collapse_to_rank_one() {
        let dict = array![[0.6, 0.8, 0.0], [0.6, 0.8, 0.0], [0.0, 0.0, 1.0]];
        let sub = build_removal_subspace(dict.view(), &[3.0, 2.0, 1.0], 2.0 / 3.0, RankPolicy::EnergyThreshold(0.99))
            .unwrap();
        assert_eq!(sub.source_indices(), &[0, 1]);
        assert_eq!(sub.rank(), 1);
    }

    #[test]
    fn zero_atoms_are_degenerate() {
        let dict = Array2::zeros((4, 3));
        assert!(matches!(
            build_removal_subspace(dict.view(), &[1.0, 0.0, 0.0, 0.0], 0.25, RankPolicy::Fixed(1)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn fixed_rank_beyond_selection_is_rejected() {
        let dict: Array2<f64> = Array2::eye(4);
        assert!(matches!(
            build_removal_subspace(dict.view(), &[1.0, 2.0, 3.0, 4.0], 0.5, RankPolicy::Fixed(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn threshold_zero_gives_rank_zero() {
        let dict: Array2<f64> = Array2::eye(3);
        let sub = build_removal_subspace(dict.view(), &[1.0, 2.0, 3.0], 1.0, RankPolicy::EnergyThreshold(0.0)).unwrap();
        assert_eq!(sub.rank(), 0);
        let h = [3.0, 0.0, 4.0];
        assert_eq!(remove_and_normalize(&h, &sub).unwrap(), vec![0.6, 0.0, 0.8]);
    }

    #[test]
    fn axis_projection() {
        let sub = axis_subspace(3, &[0]);
        assert_eq!(remove_and_normalize(&[1.0, 1.0, 0.0], &sub).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(remove_and_normalize(&[0.0, 3.0, 4.0], &sub).unwrap(), vec![0.0, 0.6, 0.8]);
        assert!(matches!(remove_and_normalize(&[1.0, 0.0, 0.0], &sub), Err(Error::DegenerateEmbedding { .. })));
        assert!(matches!(remove_and_normalize(&[1.0, 0.0], &sub), Err(Error::Shape(_))));
    }

    #[test]
    fn empty_subspace_normalizes() {
        let sub = RemovalSubspace::empty(2);
        assert_eq!(remove_and_normalize(&[3.0, 4.0], &sub).unwrap(), vec![0.6, 0.8]);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let dict = array![[0.6, 0.8, 0.0], [0.0, 0.6, 0.8], [1.0, 0.0, 0.0]];
        let sub = build_removal_subspace(dict.view(), &[3.0, 2.0, 1.0], 0.6, RankPolicy::Fixed(2)).unwrap();
        save_subspace(dir.path(), &sub).unwrap();
        let back = load_subspace(dir.path()).unwrap();
        assert_eq!(back.rank(), 2);
        assert_eq!(back.source_indices(), sub.source_indices());
        let (p, q) = (sub.projector(), back.projector());
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(SUBSPACE_MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(v["r"], 2);
        assert_eq!(v["rank_policy"], serde_json::json!({"fixed": 2}));
        assert_eq!(v["source_indices"], serde_json::json!([0, 1]));
    }
}
