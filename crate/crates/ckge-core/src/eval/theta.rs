//! The θ matrix and the scalar metrics derived from it.
//!
//! θ[j][i] is a link-prediction metric for test set ΔG_i evaluated at the
//! checkpoint of snapshot j, under one candidate policy. Lower-triangular:
//! only j ≥ i is defined.

use serde::{Deserialize, Serialize};

use crate::continual::RunArtifacts;
use crate::error::{Error, Result};
use crate::kg::{FilterIndex, SnapshotSequence};

use super::{evaluate_testset, PolicyKind};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    Mrr,
    Hits1,
    Hits3,
    Hits10,
}

pub const ALL_METRICS: [MetricName; 4] = [
    MetricName::Mrr,
    MetricName::Hits1,
    MetricName::Hits3,
    MetricName::Hits10,
];

impl MetricName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Mrr => "mrr",
            MetricName::Hits1 => "hits1",
            MetricName::Hits3 => "hits3",
            MetricName::Hits10 => "hits10",
        }
    }
}

impl std::str::FromStr for MetricName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_METRICS
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct MetricMatrix {
    pub metric: MetricName,
    pub policy: PolicyKind,
    /// Row j holds θ[j][0..=j].
    values: Vec<Vec<f64>>,
    /// |ΔG_i| in triples (each contributes two queries).
    pub test_sizes: Vec<usize>,
}

impl MetricMatrix {
    pub fn new(
        metric: MetricName,
        policy: PolicyKind,
        values: Vec<Vec<f64>>,
        test_sizes: Vec<usize>,
    ) -> Result<MetricMatrix> {
        for (j, row) in values.iter().enumerate() {
            if row.len() != j + 1 {
                return Err(Error::Contract(format!(
                    "θ row {j} has {} cells, expected {}",
                    row.len(),
                    j + 1
                )));
            }
        }
        if test_sizes.len() != values.len() {
            return Err(Error::Contract("test_sizes length mismatch".into()));
        }
        Ok(MetricMatrix {
            metric,
            policy,
            values,
            test_sizes,
        })
    }

    /// Number of snapshots (N+1).
    pub fn n_snapshots(&self) -> usize {
        self.values.len()
    }

    /// Index of the final snapshot (N).
    pub fn last(&self) -> usize {
        self.values.len() - 1
    }

    /// θ[j][i]; defined for i ≤ j.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j][i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// All four metric matrices from a single ranking pass per cell.
#[derive(Clone, Debug)]
pub struct ThetaSet {
    pub mrr: MetricMatrix,
    pub hits1: MetricMatrix,
    pub hits3: MetricMatrix,
    pub hits10: MetricMatrix,
    /// Queries with exact score ties per checkpoint row (diagnostic).
    pub tie_queries: usize,
}

impl ThetaSet {
    pub fn by_name(&self, metric: MetricName) -> &MetricMatrix {
        match metric {
            MetricName::Mrr => &self.mrr,
            MetricName::Hits1 => &self.hits1,
            MetricName::Hits3 => &self.hits3,
            MetricName::Hits10 => &self.hits10,
        }
    }
}

/// θ[j][i] = evaluate ΔG_i at checkpoint j with candidates per `policy` and
/// the filter built through snapshot j.
pub fn theta_matrices(
    run: &RunArtifacts,
    seq: &SnapshotSequence,
    policy: PolicyKind,
) -> Result<ThetaSet> {
    let n = seq.n_snapshots();
    if run.checkpoints.len() != n {
        return Err(Error::MissingArtifact(format!(
            "run has {} checkpoints for {} snapshots",
            run.checkpoints.len(),
            n
        )));
    }
    let mut mrr = Vec::with_capacity(n);
    let mut hits1 = Vec::with_capacity(n);
    let mut hits3 = Vec::with_capacity(n);
    let mut hits10 = Vec::with_capacity(n);
    let mut ties = 0usize;
    for j in 0..n {
        let ckpt = run.checkpoint(j)?;
        let filter = FilterIndex::build(seq, j)?;
        let mut row_mrr = Vec::with_capacity(j + 1);
        let mut row_h1 = Vec::with_capacity(j + 1);
        let mut row_h3 = Vec::with_capacity(j + 1);
        let mut row_h10 = Vec::with_capacity(j + 1);
        for i in 0..=j {
            let m = evaluate_testset(ckpt, &seq.snapshot(i).test, i, seq, j, policy, &filter)?;
            row_mrr.push(m.mrr);
            row_h1.push(m.hits1);
            row_h3.push(m.hits3);
            row_h10.push(m.hits10);
            ties += m.tie_queries;
        }
        mrr.push(row_mrr);
        hits1.push(row_h1);
        hits3.push(row_h3);
        hits10.push(row_h10);
    }
    let sizes: Vec<usize> = (0..n).map(|i| seq.snapshot(i).test.len()).collect();
    Ok(ThetaSet {
        mrr: MetricMatrix::new(MetricName::Mrr, policy, mrr, sizes.clone())?,
        hits1: MetricMatrix::new(MetricName::Hits1, policy, hits1, sizes.clone())?,
        hits3: MetricMatrix::new(MetricName::Hits3, policy, hits3, sizes.clone())?,
        hits10: MetricMatrix::new(MetricName::Hits10, policy, hits10, sizes)?,
        tie_queries: ties,
    })
}

/// Single-metric view of [`theta_matrices`].
pub fn theta_matrix(
    run: &RunArtifacts,
    seq: &SnapshotSequence,
    metric: MetricName,
    policy: PolicyKind,
) -> Result<MetricMatrix> {
    Ok(theta_matrices(run, seq, policy)?.by_name(metric).clone())
}

/// Final-checkpoint aggregate: Σ_i θ[N][i]·|ΔG_i| / Σ_i |ΔG_i|.
pub fn aggregate_final(theta: &MetricMatrix) -> f64 {
    let n = theta.last();
    let mut num = 0.0;
    let mut denom = 0.0;
    for i in 0..=n {
        num += theta.get(n, i) * theta.test_sizes[i] as f64;
        denom += theta.test_sizes[i] as f64;
    }
    if denom > 0.0 {
        num / denom
    } else {
        0.0
    }
}

/// Backward transfer: (1/(N-1)) Σ_{i=0}^{N-1} (θ[N][i] - θ[i][i]).
/// The divisor follows the printed formula even though the sum has N terms.
pub fn bwt(theta: &MetricMatrix) -> Result<f64> {
    let n = theta.last();
    if n < 2 {
        return Err(Error::Domain(format!(
            "BWT needs at least 3 snapshots (N ≥ 2), got N = {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += theta.get(n, i) - theta.get(i, i);
    }
    Ok(sum / (n - 1) as f64)
}

/// Cycle-normalized, size-weighted relative forgetting:
/// Σ_{i<N} [(θ[N][i] - θ[i][i]) / ((N-i)·θ[i][i])] · [|ΔG_i| / Σ_{k<N}|ΔG_k|].
/// Only defined over the corrected-policy matrix.
pub fn cf(theta: &MetricMatrix) -> Result<f64> {
    if theta.policy != PolicyKind::Current {
        return Err(Error::Config(
            "CF is derived from the corrected-policy matrix".into(),
        ));
    }
    let n = theta.last();
    if n < 1 {
        return Err(Error::Domain("CF needs at least 2 snapshots".into()));
    }
    let past_size: usize = theta.test_sizes[..n].iter().sum();
    if past_size == 0 {
        return Err(Error::Domain("CF needs non-empty past test sets".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let diag = theta.get(i, i);
        if diag <= 0.0 {
            return Err(Error::Domain(format!("CF undefined: θ[{i}][{i}] = {diag}")));
        }
        total += (theta.get(n, i) - diag) / ((n - i) as f64 * diag)
            * (theta.test_sizes[i] as f64 / past_size as f64);
    }
    Ok(total)
}

/// Mean new-knowledge acquisition: average of θ[i][i] for i = 1..N.
pub fn omega_new(theta: &MetricMatrix) -> f64 {
    let n = theta.last();
    assert!(n >= 1, "omega_new needs at least 2 snapshots");
    (1..=n).map(|i| theta.get(i, i)).sum::<f64>() / n as f64
}
