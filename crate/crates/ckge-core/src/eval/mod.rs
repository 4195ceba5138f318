//! Link-prediction evaluation under selectable candidate protocols.
//!
//! The legacy protocol ranks a test triple of snapshot `i` only against the
//! entities that existed at snapshot `i`; the corrected protocol ranks
//! against every entity of the checkpoint being evaluated. Because ids are
//! born in snapshot order, both candidate sets are plain id prefixes, and
//! the corrected rank decomposes exactly as
//! `rank_current = rank_local + interfering_new_count`.

mod forgetting;
mod report;
mod theta;

pub use forgetting::{build_forgetting_report, decompose_forgetting, ForgettingReport};
pub use report::{
    markdown_summary, read_forgetting_json, read_theta_csv, write_forgetting_json, write_theta_csv,
};
pub use theta::{
    aggregate_final, bwt, cf, omega_new, theta_matrices, theta_matrix, MetricMatrix, MetricName,
    ThetaSet,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, SnapshotSequence, Triple};
use crate::models::{score, EmbeddingStore};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Legacy: candidates are the entities of the test triple's snapshot.
    SnapshotLocal,
    /// Corrected: candidates are the entities of the evaluated checkpoint.
    Current,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::SnapshotLocal => "legacy",
            PolicyKind::Current => "corrected",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legacy" | "snapshot-local" => Ok(PolicyKind::SnapshotLocal),
            "corrected" | "current" => Ok(PolicyKind::Current),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CorruptedSide {
    Head,
    Tail,
}

/// One ranking query: a test triple with one side replaced by candidates.
#[derive(Clone, Copy, Debug)]
pub struct Query {
    pub triple: Triple,
    pub side: CorruptedSide,
    /// Snapshot the test triple belongs to (defines which entities count as
    /// interfering newcomers).
    pub snapshot: usize,
}

impl Query {
    pub fn true_entity(&self) -> u32 {
        match self.side {
            CorruptedSide::Head => self.triple.head,
            CorruptedSide::Tail => self.triple.tail,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RankResult {
    /// 1 + number of strictly-better unfiltered competitors.
    pub rank: usize,
    /// Competitors born after the query's snapshot that outscore the truth.
    pub interfering_new_count: usize,
    /// Highest-scoring competitor, or the true entity at rank 1.
    pub best_competitor: u32,
    /// Unfiltered candidates that tie the true score exactly (diagnostic;
    /// ties do not raise the rank).
    pub tie_count: usize,
}

/// Filtered rank of the true entity among the candidate prefix
/// `0..n_candidates`. Candidates forming a known-true triple (other than the
/// query itself) never count; strictly greater scores do. `local_bound` is
/// |E_i| of the query's snapshot: qualifying competitors at or above it are
/// interference from later snapshots.
pub fn rank(
    emb: &EmbeddingStore,
    query: &Query,
    n_candidates: u32,
    local_bound: u32,
    filter: &FilterIndex,
) -> Result<RankResult> {
    let true_entity = query.true_entity();
    if true_entity >= n_candidates {
        return Err(Error::Contract(format!(
            "true entity {true_entity} is outside the candidate set 0..{n_candidates}"
        )));
    }
    let Triple {
        head,
        relation,
        tail,
    } = query.triple;
    let true_score = score(emb, head, relation, tail)?;
    if n_candidates as usize > emb.n_entities() {
        return Err(Error::Bounds(format!(
            "candidate set 0..{n_candidates} exceeds the store ({} entities)",
            emb.n_entities()
        )));
    }
    let mut better = 0usize;
    let mut interfering = 0usize;
    let mut ties = 0usize;
    let mut best = (true_score, true_entity);
    for c in 0..n_candidates {
        if c == true_entity {
            continue;
        }
        let known_true = match query.side {
            CorruptedSide::Tail => filter.contains(head, relation, c),
            CorruptedSide::Head => filter.contains(c, relation, tail),
        };
        if known_true {
            continue;
        }
        let s = match query.side {
            CorruptedSide::Tail => crate::models::score_unchecked(emb, head, relation, c),
            CorruptedSide::Head => crate::models::score_unchecked(emb, c, relation, tail),
        };
        if s > true_score {
            better += 1;
            if c >= local_bound {
                interfering += 1;
            }
            if s > best.0 {
                best = (s, c);
            }
        } else if s == true_score {
            ties += 1;
        }
    }
    Ok(RankResult {
        rank: 1 + better,
        interfering_new_count: interfering,
        best_competitor: best.1,
        tie_count: ties,
    })
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct TestsetMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    /// Queries with at least one exact score tie (diagnostic).
    pub tie_queries: usize,
}

/// Both-side evaluation of one test set: every triple contributes a
/// head-corruption and a tail-corruption query. Queries run in parallel;
/// aggregation is sequential in input order.
pub fn evaluate_testset(
    emb: &EmbeddingStore,
    test_triples: &[Triple],
    test_snapshot: usize,
    seq: &SnapshotSequence,
    checkpoint_snapshot: usize,
    policy: PolicyKind,
    filter: &FilterIndex,
) -> Result<TestsetMetrics> {
    let local_bound = seq.entity_count(test_snapshot) as u32;
    let n_candidates = match policy {
        PolicyKind::SnapshotLocal => local_bound,
        PolicyKind::Current => seq.entity_count(checkpoint_snapshot) as u32,
    };
    let results: Result<Vec<(RankResult, RankResult)>> = test_triples
        .par_iter()
        .map(|&triple| {
            let tail_q = Query {
                triple,
                side: CorruptedSide::Tail,
                snapshot: test_snapshot,
            };
            let head_q = Query {
                triple,
                side: CorruptedSide::Head,
                snapshot: test_snapshot,
            };
            Ok((
                rank(emb, &tail_q, n_candidates, local_bound, filter)?,
                rank(emb, &head_q, n_candidates, local_bound, filter)?,
            ))
        })
        .collect();
    let results = results?;
    let mut metrics = TestsetMetrics::default();
    for (a, b) in &results {
        for r in [a, b] {
            metrics.mrr += 1.0 / r.rank as f64;
            metrics.hits1 += f64::from(r.rank <= 1);
            metrics.hits3 += f64::from(r.rank <= 3);
            metrics.hits10 += f64::from(r.rank <= 10);
            metrics.tie_queries += usize::from(r.tie_count > 0);
            metrics.n_queries += 1;
        }
    }
    if metrics.n_queries > 0 {
        let inv = 1.0 / metrics.n_queries as f64;
        metrics.mrr *= inv;
        metrics.hits1 *= inv;
        metrics.hits3 *= inv;
        metrics.hits10 *= inv;
    }
    Ok(metrics)
}
