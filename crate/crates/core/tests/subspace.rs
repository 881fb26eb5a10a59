//! Removal subspace against a cyclic Jacobi eigensolver on `D_Rᵀ D_R`.

#![allow(clippy::needless_range_loop)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use saeprobe::intervention::{build_removal_subspace, remove_and_normalize, RankPolicy};

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect();
    (values, vectors)
}

struct Oracle {
    singular_values: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

fn oracle(dict: &Array2<f64>, rows: &[usize]) -> Oracle {
    let d = dict.ncols();
    let gram =
        (0..d).map(|i| (0..d).map(|j| rows.iter().map(|&r| dict[[r, i]] * dict[[r, j]]).sum()).collect()).collect();
    let (values, eigenvectors) = jacobi_eigen(gram);
    let m = rows.len().min(d);
    Oracle { singular_values: values.iter().take(m).map(|v| v.max(0.0).sqrt()).collect(), eigenvectors }
}

fn projector(vectors: &[Vec<f64>], r: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| vectors[..r].iter().map(|v| v[i] * v[j]).sum())
}

fn random_dictionary(rng: &mut ChaCha8Rng, c: usize, d: usize) -> Array2<f64> {
    let mut m: Array2<f64> = Array2::from_shape_simple_fn((c, d), || StandardNormal.sample(rng));
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        row.mapv_inplace(|v: f64| v / n);
    }
    m
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn fixed_rank_projector_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..30 {
        let (c, d) = (40, rng.random_range(4..=12));
        let dict = random_dictionary(&mut rng, c, d);
        let attribution: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fraction = rng.random_range(2..=8) as f64 / c as f64;
        let probe = build_removal_subspace(dict.view(), &attribution, fraction, RankPolicy::Fixed(0)).unwrap();
        let truth = oracle(&dict, probe.source_indices());

        for (got, want) in probe.singular_values().iter().zip(&truth.singular_values) {
            assert!((got - want).abs() < 1e-9, "trial {trial}: singular value {got} vs {want}");
        }
        for r in 1..=truth.singular_values.len() {
            let s = &truth.singular_values;
            // Projectors are only unique across an eigengap.
            if r < s.len() && s[r - 1] - s[r] < 1e-3 {
                continue;
            }
            let sub = build_removal_subspace(dict.view(), &attribution, fraction, RankPolicy::Fixed(r)).unwrap();
            let diff = max_abs_diff(&sub.projector(), &projector(&truth.eigenvectors, r, d));
            assert!(diff < 1e-8, "trial {trial}, rank {r}: projector off by {diff}");
        }
    }
}

#[test]
fn selected_atoms_are_top_attribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dict = random_dictionary(&mut rng, 20, 6);
    let attribution: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
    let sub = build_removal_subspace(dict.view(), &attribution, 0.2, RankPolicy::Fixed(1)).unwrap();
    let mut want: Vec<usize> = (0..20).filter(|&i| attribution[i] >= 16.0).collect();
    want.sort_unstable();
    assert_eq!(sub.source_indices(), want.as_slice());
}

#[test]
fn energy_policy_picks_smallest_sufficient_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let dict = random_dictionary(&mut rng, 30, 8);
        let attribution: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let theta = rng.random_range(0.05..0.999);
        let sub = build_removal_subspace(dict.view(), &attribution, 0.2, RankPolicy::EnergyThreshold(theta)).unwrap();
        let s2: Vec<f64> = oracle(&dict, sub.source_indices()).singular_values.iter().map(|s| s * s).collect();
        let total: f64 = s2.iter().sum();
        let want = (1..=s2.len()).find(|&r| s2[..r].iter().sum::<f64>() >= theta * total).unwrap();
        assert_eq!(sub.rank(), want, "theta {theta}");
    }
}

#[test]
fn removal_matches_oracle_projector() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let d = 10;
    let dict = random_dictionary(&mut rng, 50, d);
    let attribution: Vec<f64> = (0..50).map(|_| rng.random()).collect();
    let sub = build_removal_subspace(dict.view(), &attribution, 0.1, RankPolicy::Fixed(3)).unwrap();
    let truth = oracle(&dict, sub.source_indices());
    let p = projector(&truth.eigenvectors, 3, d);
    for _ in 0..50 {
        let h: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let got = remove_and_normalize(&h, &sub).unwrap();
        let mut want: Vec<f64> = (0..d).map(|i| h[i] - (0..d).map(|j| p[[i, j]] * h[j]).sum::<f64>()).collect();
        let norm = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        want.iter_mut().for_each(|v| *v /= norm);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
        for col in sub.basis().columns() {
            let along: f64 = col.iter().zip(&got).map(|(a, b)| a * b).sum();
            assert!(along.abs() < 1e-12);
        }
    }
}
