//! TSV directory ingestion and emission.
//!
//! Layout: `<root>/snapshot_<i>/{train,valid,test}.tsv`, UTF-8, LF endings,
//! one `head<TAB>relation<TAB>tail` per line, no header. Ids are assigned
//! internally in first-appearance order (train, valid, test per snapshot).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Snapshot, SnapshotSequence, Triple, Vocab};

const SPLITS: [&str; 3] = ["train.tsv", "valid.tsv", "test.tsv"];

/// Loads and validates a snapshot sequence from `dir`.
pub fn load_snapshot_sequence(dir: &Path) -> Result<SnapshotSequence> {
    let mut n = 0;
    while dir.join(format!("snapshot_{n}")).is_dir() {
        n += 1;
    }
    if n == 0 {
        return Err(Error::MissingArtifact(format!(
            "{}: no snapshot_0 subdirectory",
            dir.display()
        )));
    }

    let mut vocab = Vocab::new(n);
    let mut snapshots = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    for i in 0..n {
        let snap_dir = dir.join(format!("snapshot_{i}"));
        let mut snap = Snapshot::default();
        for (s, file) in SPLITS.iter().enumerate() {
            let path = snap_dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let split = match s {
                0 => &mut snap.train,
                1 => &mut snap.valid,
                _ => &mut snap.test,
            };
            for (lineno, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let mut fields = line.split('\t');
                let (h, r, t) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(h), Some(r), Some(t), None)
                        if !h.is_empty() && !r.is_empty() && !t.is_empty() =>
                    {
                        (h, r, t)
                    }
                    _ => {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            line: lineno + 1,
                            msg: "expected exactly three non-empty tab-separated fields".into(),
                        })
                    }
                };
                let triple = Triple::new(
                    vocab.intern_entity(h, i),
                    vocab.intern_relation(r, i),
                    vocab.intern_entity(t, i),
                );
                if !seen.insert(triple) {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("duplicate triple ({h}, {r}, {t})"),
                    });
                }
                split.push(triple);
            }
        }
        vocab.seal_snapshot(i);
        snapshots.push(snap);
    }

    let seq = SnapshotSequence::from_parts_unvalidated(snapshots, vocab);
    seq.validate()?;
    Ok(seq)
}

/// Writes `seq` to `dir` in the loader's format. Reloading the result yields
/// identical id assignments and triple sets.
pub fn write_snapshot_sequence(seq: &SnapshotSequence, dir: &Path) -> Result<()> {
    for (i, snap) in seq.snapshots().iter().enumerate() {
        let snap_dir = dir.join(format!("snapshot_{i}"));
        fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
        for (split, file) in snap.splits().iter().zip(SPLITS) {
            let path = snap_dir.join(file);
            let mut buf = String::new();
            for t in *split {
                buf.push_str(seq.vocab().entity_name(t.head));
                buf.push('\t');
                buf.push_str(seq.vocab().relation_name(t.relation));
                buf.push('\t');
                buf.push_str(seq.vocab().entity_name(t.tail));
                buf.push('\n');
            }
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(buf.as_bytes())
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
