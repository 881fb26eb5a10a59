//! Deterministic fixtures shared by the benchmarks.

use saeprobe::derive_seed;
use saeprobe::ndarray::Array2;
use saeprobe::sae::SaeParams;
use saeprobe::synth::{gen_activations, gen_planted_dictionary};
use saeprobe::SparseCode;

pub const SEED: u64 = 0xBE7C;

/// `n × d` activations built from a planted dictionary of `c` atoms.
pub fn activations(n: usize, c: usize, d: usize, k: usize) -> (Array2<f64>, Vec<SparseCode>) {
    let dict = gen_planted_dictionary(c, d, derive_seed(SEED, "bench/dictionary")).expect("valid shape");
    let (shard, codes) =
        gen_activations(dict.view(), n, k, 0.01, derive_seed(SEED, "bench/samples")).expect("valid shape");
    let rows = Array2::from_shape_fn((n, d), |(i, j)| f64::from(shard.row(i)[j]));
    (rows, codes)
}

pub fn params(width: usize, d: usize, k: usize) -> SaeParams {
    SaeParams::init(width, d, k, derive_seed(SEED, "bench/params")).expect("valid shape")
}

/// `(id, vector)` lists for retrieval benchmarks.
pub fn embeddings(prefix: &str, n: usize, d: usize) -> Vec<(String, Vec<f64>)> {
    let (rows, _) = activations(n, 2 * d, d, 4);
    rows.rows().into_iter().enumerate().map(|(i, r)| (format!("{prefix}{i:05}"), r.to_vec())).collect()
}
