//! Run artifacts on disk: θ CSVs, the forgetting JSON, and the Markdown
//! summary table.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::theta::{MetricMatrix, MetricName, ThetaSet, ALL_METRICS};
use super::{ForgettingReport, PolicyKind};

/// CSV columns: snapshot_j,testset_i,policy,metric,value,n_queries.
/// One row per (checkpoint, test set, metric) cell.
pub fn write_theta_csv(set: &ThetaSet, path: &Path) -> Result<()> {
    let mut out = String::from("snapshot_j,testset_i,policy,metric,value,n_queries\n");
    let policy = set.mrr.policy;
    for metric in ALL_METRICS {
        let m = set.by_name(metric);
        for j in 0..m.n_snapshots() {
            for i in 0..=j {
                writeln!(
                    out,
                    "{j},{i},{},{},{},{}",
                    policy.as_str(),
                    metric.as_str(),
                    m.get(j, i),
                    2 * m.test_sizes[i]
                )
                .expect("string write");
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a θ CSV back into matrices (inverse of [`write_theta_csv`]).
pub fn read_theta_csv(path: &Path) -> Result<ThetaSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: &str| Error::Parse {
        path: path.display().to_string(),
        line: line + 1,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, "snapshot_j,testset_i,policy,metric,value,n_queries")) => {}
        _ => return Err(parse_err(0, "bad or missing header")),
    }
    struct Cell {
        j: usize,
        i: usize,
        value: f64,
        n_queries: usize,
    }
    let mut cells: Vec<(MetricName, Cell)> = Vec::new();
    let mut policy: Option<PolicyKind> = None;
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(lineno, "expected 6 fields"));
        }
        let j: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, "bad snapshot_j"))?;
        let i: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, "bad testset_i"))?;
        let p: PolicyKind = fields[2].parse()?;
        match policy {
            None => policy = Some(p),
            Some(prev) if prev == p => {}
            Some(_) => return Err(parse_err(lineno, "mixed policies in one file")),
        }
        let metric: MetricName = fields[3].parse()?;
        let value: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(lineno, "bad value"))?;
        let n_queries: usize = fields[5]
            .parse()
            .map_err(|_| parse_err(lineno, "bad n_queries"))?;
        cells.push((
            metric,
            Cell {
                j,
                i,
                value,
                n_queries,
            },
        ));
    }
    let policy = policy.ok_or_else(|| parse_err(0, "no data rows"))?;
    let n = cells
        .iter()
        .map(|(_, c)| c.j + 1)
        .max()
        .ok_or_else(|| parse_err(0, "no data rows"))?;
    let mut sizes = vec![0usize; n];
    let mut build = |name: MetricName| -> Result<MetricMatrix> {
        let mut rows: Vec<Vec<f64>> = (0..n).map(|j| vec![f64::NAN; j + 1]).collect();
        for (m, c) in cells.iter().filter(|(m, _)| *m == name) {
            let _ = m;
            if c.i >= rows[c.j].len() {
                return Err(Error::Validation(format!(
                    "cell ({}, {}) above the diagonal",
                    c.j, c.i
                )));
            }
            rows[c.j][c.i] = c.value;
            sizes[c.i] = c.n_queries / 2;
        }
        if rows.iter().any(|r| r.iter().any(|v| v.is_nan())) {
            return Err(Error::Validation(format!(
                "θ CSV is missing {} cells",
                name.as_str()
            )));
        }
        MetricMatrix::new(name, policy, rows, sizes.clone())
    };
    Ok(ThetaSet {
        mrr: build(MetricName::Mrr)?,
        hits1: build(MetricName::Hits1)?,
        hits3: build(MetricName::Hits3)?,
        hits10: build(MetricName::Hits10)?,
        tie_queries: 0,
    })
}

pub fn write_forgetting_json(report: &ForgettingReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_forgetting_json(path: &Path) -> Result<ForgettingReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// The per-test-set summary table: legacy MRR, corrected MRR, and the
/// relative change, one row per test set at the final checkpoint plus the
/// size-weighted aggregate.
pub fn markdown_summary(
    legacy_mrr: &MetricMatrix,
    corrected_mrr: &MetricMatrix,
    report: &ForgettingReport,
) -> String {
    let n = legacy_mrr.last();
    let mut out = String::new();
    out.push_str("| test set | MRR w/o | MRR | % change |\n");
    out.push_str("|---|---|---|---|\n");
    let pct = |wo: f64, with: f64| {
        if wo > 0.0 {
            100.0 * (with - wo) / wo
        } else {
            0.0
        }
    };
    for i in 0..=n {
        let wo = legacy_mrr.get(n, i);
        let with = corrected_mrr.get(n, i);
        writeln!(
            out,
            "| ΔG_{i} | {wo:.4} | {with:.4} | {:.1} |",
            pct(wo, with)
        )
        .unwrap();
    }
    let wo = super::aggregate_final(legacy_mrr);
    let with = super::aggregate_final(corrected_mrr);
    writeln!(
        out,
        "| weighted | {wo:.4} | {with:.4} | {:.1} |",
        pct(wo, with)
    )
    .unwrap();
    out.push('\n');
    writeln!(
        out,
        "BWT {} | CF {} | Ω_new {}",
        report.bwt.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.cf.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.omega_new.map_or("n/a".into(), |v| format!("{v:.4}")),
    )
    .unwrap();
    writeln!(
        out,
        "ΔG_{}: captured {} | still correct {} | drift {} | interference {} | both {}",
        report.source_snapshot,
        report.captured_at_source,
        report.still_correct,
        report.drift_forgotten,
        report.interference_forgotten,
        report.both_forgotten,
    )
    .unwrap();
    out
}
