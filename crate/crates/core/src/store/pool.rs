use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::format::{ActivationShard, TokenMeta, TokenRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingStrategy {
    /// Arithmetic mean over every unmasked token, `special` included.
    #[default]
    Mean,
    /// The unmasked token with the highest `token_index`.
    LastToken,
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::LastToken => "last_token",
        })
    }
}

impl std::str::FromStr for PoolingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "last_token" | "last-token" => Ok(Self::LastToken),
            other => Err(Error::config(format!("unknown pooling strategy `{other}`"))),
        }
    }
}

pub type RoleMask = BTreeSet<TokenRole>;

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub vector: Vec<f64>,
    pub sample_id: u64,
    pub strategy: PoolingStrategy,
    pub mask: RoleMask,
}

/// Pools the tokens of one sample into a single embedding.
pub fn pool_sample<'a, I>(
    sample_id: u64,
    tokens: I,
    strategy: PoolingStrategy,
    mask: &RoleMask,
) -> Result<PooledEmbedding>
where
    I: IntoIterator<Item = (&'a [f32], &'a TokenMeta)>,
{
    let mut sum: Option<Vec<f64>> = None;
    let mut n = 0usize;
    let mut last: Option<(u32, &[f32])> = None;
    for (vec, meta) in tokens {
        if mask.contains(&meta.token_role) {
            continue;
        }
        match strategy {
            PoolingStrategy::Mean => {
                let acc = sum.get_or_insert_with(|| vec![0.0; vec.len()]);
                if acc.len() != vec.len() {
                    return Err(Error::shape(format!(
                        "sample {sample_id}: token of length {} among length {}",
                        vec.len(),
                        acc.len()
                    )));
                }
                for (a, &v) in acc.iter_mut().zip(vec) {
                    *a += f64::from(v);
                }
                n += 1;
            }
            PoolingStrategy::LastToken => {
                if last.is_none_or(|(idx, _)| meta.token_index >= idx) {
                    last = Some((meta.token_index, vec));
                }
            }
        }
    }
    let vector = match strategy {
        PoolingStrategy::Mean => {
            let mut acc = sum.ok_or(Error::EmptySample { sample_id })?;
            let inv = 1.0 / n as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
            acc
        }
        PoolingStrategy::LastToken => {
            let (_, v) = last.ok_or(Error::EmptySample { sample_id })?;
            v.iter().map(|&x| f64::from(x)).collect()
        }
    };
    Ok(PooledEmbedding { vector, sample_id, strategy, mask: mask.clone() })
}

/// Pools every sample in a shard, in order of first appearance.
pub fn pool_shard(shard: &ActivationShard, strategy: PoolingStrategy, mask: &RoleMask) -> Result<Vec<PooledEmbedding>> {
    shard
        .samples()
        .into_iter()
        .map(|(sample_id, rows)| {
            let tokens = rows.iter().map(|&r| (shard.row(r), &shard.meta()[r]));
            pool_sample(sample_id, tokens, strategy, mask)
        })
        .collect()
}
