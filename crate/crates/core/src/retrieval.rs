//! Zero-shot retrieval evaluation over pooled embeddings.
//!
//! Exhaustive cosine ranking (ties broken by candidate id) and hit-rate
//! Recall@K: a query counts as a hit at K when any relevant candidate is
//! ranked in its top K.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervention::{remove_and_normalize, RemovalSubspace};
use crate::store::{pool_shard, ActivationShard, PooledEmbedding, PoolingStrategy, RoleMask, TokenRole};

pub type Qrels = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: String,
    pub sample_id: u64,
}

/// On-disk task description: which samples act as queries and candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_label: String,
    pub queries: Vec<TaskEntry>,
    pub candidates: Vec<TaskEntry>,
    pub qrels: Qrels,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let qids: BTreeSet<&str> = self.queries.iter().map(|q| q.id.as_str()).collect();
        let cids: BTreeSet<&str> = self.candidates.iter().map(|c| c.id.as_str()).collect();
        if qids.len() != self.queries.len() {
            return Err(Error::Consistency("duplicate query ids".into()));
        }
        if cids.len() != self.candidates.len() {
            return Err(Error::Consistency("duplicate candidate ids".into()));
        }
        check_qrels(&self.qrels, &qids, &cids)
    }
}

fn check_qrels(qrels: &Qrels, qids: &BTreeSet<&str>, cids: &BTreeSet<&str>) -> Result<()> {
    for (q, rel) in qrels {
        if !qids.contains(q.as_str()) {
            return Err(Error::Consistency(format!("qrels mention unknown query `{q}`")));
        }
        if rel.is_empty() {
            return Err(Error::Consistency(format!("query `{q}` has no relevant candidate")));
        }
        if let Some(c) = rel.iter().find(|c| !cids.contains(c.as_str())) {
            return Err(Error::Consistency(format!("query `{q}` lists unknown candidate `{c}`")));
        }
    }
    for q in qids {
        if !qrels.contains_key(*q) {
            return Err(Error::Consistency(format!("query `{q}` has no qrels entry")));
        }
    }
    Ok(())
}

/// Queries and candidates with their embeddings plus relevance judgments.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalTask {
    pub task_label: String,
    pub queries: Vec<(String, PooledEmbedding)>,
    pub candidates: Vec<(String, PooledEmbedding)>,
    pub qrels: Qrels,
}

impl RetrievalTask {
    pub fn validate(&self) -> Result<()> {
        let qids: BTreeSet<&str> = self.queries.iter().map(|(q, _)| q.as_str()).collect();
        let cids: BTreeSet<&str> = self.candidates.iter().map(|(c, _)| c.as_str()).collect();
        check_qrels(&self.qrels, &qids, &cids)
    }
}

/// One query's candidates, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    /// Indices into [`Rankings::candidate_ids`].
    pub order: Vec<usize>,
    /// Cosine similarity of each entry of `order`.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rankings {
    pub candidate_ids: Vec<String>,
    pub lists: Vec<Ranking>,
}

impl Rankings {
    pub fn ranked_ids(&self, list: &Ranking) -> Vec<&str> {
        list.order.iter().map(|&i| self.candidate_ids[i].as_str()).collect()
    }
}

fn unit(id: &str, v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numeric(format!("embedding `{id}` has zero or non-finite norm")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Ranks every candidate for every query by descending cosine similarity.
pub fn cosine_rank<Q, C>(queries: &[(String, Q)], candidates: &[(String, C)]) -> Result<Rankings>
where
    Q: AsRef<[f64]> + Sync,
    C: AsRef<[f64]> + Sync,
{
    let dim = queries
        .first()
        .map(|(_, q)| q.as_ref().len())
        .or_else(|| candidates.first().map(|(_, c)| c.as_ref().len()))
        .unwrap_or(0);
    let check = |id: &str, v: &[f64]| -> Result<()> {
        if v.len() != dim {
            return Err(Error::shape(format!("embedding `{id}` has length {}, expected {dim}", v.len())));
        }
        Ok(())
    };
    let cand_units: Vec<Vec<f64>> = candidates
        .iter()
        .map(|(id, v)| {
            check(id, v.as_ref())?;
            unit(id, v.as_ref())
        })
        .collect::<Result<_>>()?;
    let candidate_ids: Vec<String> = candidates.iter().map(|(id, _)| id.clone()).collect();
    // Tie order: candidate id ascending.
    let mut id_rank: Vec<usize> = (0..candidates.len()).collect();
    id_rank.sort_by(|&a, &b| candidate_ids[a].cmp(&candidate_ids[b]));
    let mut tie_key = vec![0usize; candidates.len()];
    for (pos, &i) in id_rank.iter().enumerate() {
        tie_key[i] = pos;
    }

    let lists = queries
        .par_iter()
        .map(|(qid, q)| {
            check(qid, q.as_ref())?;
            let qu = unit(qid, q.as_ref())?;
            let sims: Vec<f64> = cand_units.iter().map(|c| c.iter().zip(&qu).map(|(a, b)| a * b).sum()).collect();
            let mut order: Vec<usize> = (0..sims.len()).collect();
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(tie_key[a].cmp(&tie_key[b])));
            let scores = order.iter().map(|&i| sims[i]).collect();
            Ok(Ranking { query_id: qid.clone(), order, scores })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Rankings { candidate_ids, lists })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub pooling: PoolingStrategy,
    pub masked_roles: Vec<TokenRole>,
    pub intervention: bool,
    pub removal_rank: usize,
    pub remove_from_queries: bool,
    pub remove_from_candidates: bool,
}

impl Default for ConfigEcho {
    fn default() -> Self {
        Self {
            pooling: PoolingStrategy::Mean,
            masked_roles: Vec::new(),
            intervention: false,
            removal_rank: 0,
            remove_from_queries: false,
            remove_from_candidates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub task_label: String,
    /// Recall@K keyed by K.
    pub recall_at: BTreeMap<usize, f64>,
    /// 1-based rank of the best relevant candidate per query.
    pub per_query_ranks: BTreeMap<String, usize>,
    pub num_queries: usize,
    pub degenerate_queries: usize,
    pub degenerate_candidates: usize,
    pub config: ConfigEcho,
}

impl RetrievalReport {
    /// `K,recall` rows in ascending K.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "K,recall")?;
        for (k, r) in &self.recall_at {
            writeln!(w, "{k},{r}")?;
        }
        Ok(())
    }
}

/// Hit-rate Recall@K over every query in `qrels`.
pub fn recall_at_k(rankings: &Rankings, qrels: &Qrels, ks: &[usize]) -> Result<RetrievalReport> {
    if ks.is_empty() {
        return Err(Error::config("at least one K is required"));
    }
    if ks.contains(&0) {
        return Err(Error::config("K must be positive"));
    }
    if qrels.is_empty() {
        return Err(Error::config("qrels are empty"));
    }
    let by_query: HashMap<&str, &Ranking> = rankings.lists.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut per_query_ranks = BTreeMap::new();
    for (qid, relevant) in qrels {
        let list = by_query
            .get(qid.as_str())
            .ok_or_else(|| Error::Consistency(format!("query `{qid}` missing from rankings")))?;
        if let Some(pos) = list.order.iter().position(|&c| relevant.contains(&rankings.candidate_ids[c])) {
            per_query_ranks.insert(qid.clone(), pos + 1);
        }
    }
    let n = qrels.len() as f64;
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = per_query_ranks.values().filter(|&&r| r <= k).count();
            (k, hits as f64 / n)
        })
        .collect();
    Ok(RetrievalReport {
        task_label: String::new(),
        recall_at,
        per_query_ranks,
        num_queries: qrels.len(),
        degenerate_queries: 0,
        degenerate_candidates: 0,
        config: ConfigEcho::default(),
    })
}

/// Which side(s) of the task the removal subspace is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalSides {
    pub queries: bool,
    pub candidates: bool,
}

impl Default for RemovalSides {
    fn default() -> Self {
        Self { queries: true, candidates: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions<'a> {
    pub pooling: PoolingStrategy,
    pub mask: RoleMask,
    pub removal: Option<&'a RemovalSubspace>,
    pub sides: RemovalSides,
    pub ks: Vec<usize>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self {
            pooling: PoolingStrategy::Mean,
            mask: RoleMask::new(),
            removal: None,
            sides: RemovalSides::default(),
            ks: vec![1, 5, 10],
        }
    }
}

/// Pools the task's samples out of `shards` and assembles a [`RetrievalTask`].
pub fn build_task(
    shards: &[ActivationShard],
    spec: &TaskSpec,
    pooling: PoolingStrategy,
    mask: &RoleMask,
) -> Result<RetrievalTask> {
    spec.validate()?;
    let mut pooled: HashMap<u64, PooledEmbedding> = HashMap::new();
    for shard in shards {
        for emb in pool_shard(shard, pooling, mask)? {
            if pooled.insert(emb.sample_id, emb).is_some() {
                return Err(Error::Consistency("sample appears in more than one shard".into()));
            }
        }
    }
    let take = |entries: &[TaskEntry]| -> Result<Vec<(String, PooledEmbedding)>> {
        entries
            .iter()
            .map(|e| {
                pooled.get(&e.sample_id).cloned().map(|p| (e.id.clone(), p)).ok_or_else(|| {
                    Error::Consistency(format!("sample {} (for `{}`) not found in shards", e.sample_id, e.id))
                })
            })
            .collect()
    };
    Ok(RetrievalTask {
        task_label: spec.task_label.clone(),
        queries: take(&spec.queries)?,
        candidates: take(&spec.candidates)?,
        qrels: spec.qrels.clone(),
    })
}

/// Applies the optional removal, ranks and scores an assembled task.
pub fn evaluate_task(task: &RetrievalTask, opts: &EvalOptions<'_>) -> Result<RetrievalReport> {
    task.validate()?;
    type Side = (Vec<(String, Vec<f64>)>, usize);
    let transform = |side: bool, items: &[(String, PooledEmbedding)]| -> Result<Side> {
        let mut out = Vec::with_capacity(items.len());
        let mut degenerate = 0;
        for (id, emb) in items {
            match opts.removal.filter(|_| side) {
                None => out.push((id.clone(), emb.vector.clone())),
                Some(sub) => match remove_and_normalize(&emb.vector, sub) {
                    Ok(v) => out.push((id.clone(), v)),
                    Err(Error::DegenerateEmbedding { .. }) => degenerate += 1,
                    Err(e) => return Err(e),
                },
            }
        }
        Ok((out, degenerate))
    };
    let (queries, degenerate_queries) = transform(opts.sides.queries, &task.queries)?;
    let (candidates, degenerate_candidates) = transform(opts.sides.candidates, &task.candidates)?;
    let rankings = cosine_rank(&queries, &candidates)?;

    // Degenerate queries stay in the denominator as misses.
    let kept: BTreeSet<&str> = queries.iter().map(|(q, _)| q.as_str()).collect();
    let mut report = {
        let live: Qrels =
            task.qrels.iter().filter(|(q, _)| kept.contains(q.as_str())).map(|(q, r)| (q.clone(), r.clone())).collect();
        if live.is_empty() {
            RetrievalReport {
                task_label: String::new(),
                recall_at: opts.ks.iter().map(|&k| (k, 0.0)).collect(),
                per_query_ranks: BTreeMap::new(),
                num_queries: 0,
                degenerate_queries: 0,
                degenerate_candidates: 0,
                config: ConfigEcho::default(),
            }
        } else {
            recall_at_k(&rankings, &live, &opts.ks)?
        }
    };
    let total = task.qrels.len();
    if report.num_queries != total {
        let scale = report.num_queries as f64 / total as f64;
        report.recall_at.values_mut().for_each(|r| *r *= scale);
        report.num_queries = total;
    }
    report.task_label = task.task_label.clone();
    report.degenerate_queries = degenerate_queries;
    report.degenerate_candidates = degenerate_candidates;
    report.config = ConfigEcho {
        pooling: opts.pooling,
        masked_roles: opts.mask.iter().copied().collect(),
        intervention: opts.removal.is_some(),
        removal_rank: opts.removal.map_or(0, RemovalSubspace::rank),
        remove_from_queries: opts.removal.is_some() && opts.sides.queries,
        remove_from_candidates: opts.removal.is_some() && opts.sides.candidates,
    };
    Ok(report)
}

/// Pools, optionally intervenes, ranks and scores a task read from shards.
pub fn run_task(shards: &[ActivationShard], spec: &TaskSpec, opts: &EvalOptions<'_>) -> Result<RetrievalReport> {
    let task = build_task(shards, spec, opts.pooling, &opts.mask)?;
    evaluate_task(&task, opts)
}
