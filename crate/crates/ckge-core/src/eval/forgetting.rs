//! Classifying lost predictions into representation drift and entity
//! interference.

use serde::{Deserialize, Serialize};

use crate::continual::RunArtifacts;
use crate::error::Result;
use crate::kg::{FilterIndex, SnapshotSequence};

use super::{rank, CorruptedSide, MetricMatrix, PolicyKind, Query};

/// Per-query classification counts for one source snapshot, plus the
/// aggregate forgetting metrics of the run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ForgettingReport {
    /// Source snapshot the per-query classification is computed for.
    pub source_snapshot: usize,
    /// Undefined (null) when the sequence is too short for the formula.
    pub bwt: Option<f64>,
    pub cf: Option<f64>,
    pub omega_new: Option<f64>,
    /// MRR of ΔG_source at its own checkpoint.
    pub mrr_source: f64,
    /// Legacy-protocol MRR of ΔG_source at the final checkpoint.
    pub mrr_final_legacy: f64,
    /// Corrected-protocol MRR of ΔG_source at the final checkpoint.
    pub mrr_final_corrected: f64,
    /// Queries of ΔG_source that ranked first at the source checkpoint.
    pub captured_at_source: usize,
    pub still_correct: usize,
    pub drift_forgotten: usize,
    pub interference_forgotten: usize,
    /// Both an old and a new entity outrank the truth; the two clauses are
    /// not mutually exclusive, so this class keeps the counts disjoint.
    pub both_forgotten: usize,
}

impl ForgettingReport {
    pub fn classified_total(&self) -> usize {
        self.still_correct
            + self.drift_forgotten
            + self.interference_forgotten
            + self.both_forgotten
    }
}

/// Classifies every query of ΔG_source that was captured (rank 1 under
/// snapshot-local candidates) at its own checkpoint:
///
/// - drift-forgotten: an old entity (E_source) now outranks the truth;
/// - interference-forgotten: old entities stay behind but a later-born
///   entity outranks the truth;
/// - both: drift and interference at once;
/// - still-correct: neither.
pub fn decompose_forgetting(
    run: &RunArtifacts,
    seq: &SnapshotSequence,
    source_snapshot: usize,
    filter_at_final: &FilterIndex,
) -> Result<ForgettingReport> {
    let final_snapshot = seq.last_snapshot();
    let ckpt_source = run.checkpoint(source_snapshot)?;
    let ckpt_final = run.checkpoint(final_snapshot)?;
    let filter_source = FilterIndex::build(seq, source_snapshot)?;
    let local_bound = seq.entity_count(source_snapshot) as u32;
    let current_bound = seq.entity_count(final_snapshot) as u32;

    let mut report = ForgettingReport {
        source_snapshot,
        ..ForgettingReport::default()
    };
    for &triple in &seq.snapshot(source_snapshot).test {
        for side in [CorruptedSide::Tail, CorruptedSide::Head] {
            let query = Query {
                triple,
                side,
                snapshot: source_snapshot,
            };
            // The capture condition at the source checkpoint.
            let at_source = rank(
                ckpt_source,
                &query,
                local_bound,
                local_bound,
                &filter_source,
            )?;
            if at_source.rank != 1 {
                continue;
            }
            report.captured_at_source += 1;
            let local = rank(
                ckpt_final,
                &query,
                local_bound,
                local_bound,
                filter_at_final,
            )?;
            let current = rank(
                ckpt_final,
                &query,
                current_bound,
                local_bound,
                filter_at_final,
            )?;
            let drift = local.rank > 1;
            let interference = current.interfering_new_count > 0;
            match (drift, interference) {
                (false, false) => report.still_correct += 1,
                (true, false) => report.drift_forgotten += 1,
                (false, true) => report.interference_forgotten += 1,
                (true, true) => report.both_forgotten += 1,
            }
        }
    }
    Ok(report)
}

/// Assembles the aggregate metrics around the snapshot-0 decomposition.
pub fn build_forgetting_report(
    run: &RunArtifacts,
    seq: &SnapshotSequence,
    legacy_mrr: &MetricMatrix,
    corrected_mrr: &MetricMatrix,
) -> Result<ForgettingReport> {
    debug_assert_eq!(legacy_mrr.policy, PolicyKind::SnapshotLocal);
    debug_assert_eq!(corrected_mrr.policy, PolicyKind::Current);
    let filter = FilterIndex::build(seq, seq.last_snapshot())?;
    let mut report = decompose_forgetting(run, seq, 0, &filter)?;
    let n = corrected_mrr.last();
    report.bwt = super::bwt(corrected_mrr).ok();
    report.cf = super::cf(corrected_mrr).ok();
    report.omega_new = (n >= 1).then(|| super::omega_new(corrected_mrr));
    report.mrr_source = corrected_mrr.get(0, 0);
    report.mrr_final_legacy = legacy_mrr.get(n, 0);
    report.mrr_final_corrected = corrected_mrr.get(n, 0);
    Ok(report)
}
