//! Growing knowledge-graph snapshot sequences.
//!
//! A sequence stores per-snapshot *deltas*: the train/valid/test triples that
//! first appear at each snapshot. Cumulative views (all triples, all entities
//! known through snapshot `i`) are derived. Entity and relation ids are dense
//! integers assigned in first-appearance order, so the ids born at snapshot
//! `i` always form a contiguous range on top of the ids born before it.

mod filter;
mod load;

pub use filter::FilterIndex;
pub use load::{load_snapshot_sequence, write_snapshot_sequence};

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// One (head, relation, tail) fact, by dense id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Entity/relation vocabularies with birth-snapshot bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
    entity_birth: Vec<u32>,
    relation_birth: Vec<u32>,
    /// entities_through[i] = |E_i| (cumulative).
    entities_through: Vec<usize>,
    /// relations_through[i] = |R_i| (cumulative).
    relations_through: Vec<usize>,
}

impl Vocab {
    fn new(n_snapshots: usize) -> Self {
        Vocab {
            entities_through: vec![0; n_snapshots],
            relations_through: vec![0; n_snapshots],
            ..Vocab::default()
        }
    }

    /// Interns `name` at `snapshot`, returning its id. New names are born at
    /// `snapshot`; ids grow densely.
    fn intern_entity(&mut self, name: &str, snapshot: usize) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len() as EntityId;
        self.entity_names.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        self.entity_birth.push(snapshot as u32);
        id
    }

    fn intern_relation(&mut self, name: &str, snapshot: usize) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relation_names.len() as RelationId;
        self.relation_names.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        self.relation_birth.push(snapshot as u32);
        id
    }

    fn seal_snapshot(&mut self, snapshot: usize) {
        self.entities_through[snapshot] = self.entity_names.len();
        self.relations_through[snapshot] = self.relation_names.len();
    }

    pub fn n_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_names.len()
    }

    /// |E_i|: entities born at snapshots 0..=i.
    pub fn entities_through(&self, snapshot: usize) -> usize {
        self.entities_through[snapshot]
    }

    /// |R_i|.
    pub fn relations_through(&self, snapshot: usize) -> usize {
        self.relations_through[snapshot]
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id as usize]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id as usize]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied()
    }

    /// Snapshot at which the entity id was first seen.
    pub fn entity_birth(&self, id: EntityId) -> usize {
        self.entity_birth[id as usize] as usize
    }

    pub fn relation_birth(&self, id: RelationId) -> usize {
        self.relation_birth[id as usize] as usize
    }
}

/// Per-snapshot delta splits (the triples first appearing at this snapshot).
#[derive(Clone, Debug, Default)]
pub struct Snapshot {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl Snapshot {
    pub fn n_triples(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn splits(&self) -> [&[Triple]; 3] {
        [&self.train, &self.valid, &self.test]
    }
}

/// Read-only view of what snapshot `i` adds on top of snapshot `i-1`.
#[derive(Clone, Debug)]
pub struct DeltaView<'a> {
    pub snapshot: usize,
    pub train: &'a [Triple],
    pub valid: &'a [Triple],
    pub test: &'a [Triple],
    /// ΔE_i as a contiguous id range.
    pub new_entities: std::ops::Range<EntityId>,
    /// ΔR_i as a contiguous id range.
    pub new_relations: std::ops::Range<RelationId>,
}

/// Name-level triples for the three splits of one snapshot.
pub type NamedSplits = [Vec<(String, String, String)>; 3];

/// An ordered sequence of cumulative KG snapshots, stored as deltas.
#[derive(Clone, Debug)]
pub struct SnapshotSequence {
    snapshots: Vec<Snapshot>,
    vocab: Vocab,
}

impl SnapshotSequence {
    /// Builds a sequence from name-level triples, assigning ids in
    /// first-appearance order (train, then valid, then test per snapshot).
    /// Validates all sequence invariants.
    pub fn from_named_triples(snapshots: &[NamedSplits]) -> Result<SnapshotSequence> {
        if snapshots.is_empty() {
            return Err(Error::Validation("sequence has no snapshots".into()));
        }
        let mut vocab = Vocab::new(snapshots.len());
        let mut out = Vec::with_capacity(snapshots.len());
        let mut seen = std::collections::HashSet::new();
        for (i, splits) in snapshots.iter().enumerate() {
            let mut snap = Snapshot::default();
            for (s, split) in splits.iter().enumerate() {
                for (h, r, t) in split {
                    let triple = Triple::new(
                        vocab.intern_entity(h, i),
                        vocab.intern_relation(r, i),
                        vocab.intern_entity(t, i),
                    );
                    if !seen.insert(triple) {
                        return Err(Error::Validation(format!(
                            "duplicate triple ({h}, {r}, {t}) at snapshot {i}"
                        )));
                    }
                    match s {
                        0 => snap.train.push(triple),
                        1 => snap.valid.push(triple),
                        _ => snap.test.push(triple),
                    }
                }
            }
            vocab.seal_snapshot(i);
            out.push(snap);
        }
        let seq = SnapshotSequence {
            snapshots: out,
            vocab,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Assembles a sequence without validating invariants. Intended for
    /// callers that construct id-level data directly; run [`validate`]
    /// (or expect downstream failures) after mutating.
    ///
    /// [`validate`]: SnapshotSequence::validate
    pub fn from_parts_unvalidated(snapshots: Vec<Snapshot>, vocab: Vocab) -> SnapshotSequence {
        SnapshotSequence { snapshots, vocab }
    }

    /// Number of snapshots (N+1).
    pub fn n_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    /// Index of the last snapshot (N).
    pub fn last_snapshot(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn snapshot(&self, i: usize) -> &Snapshot {
        &self.snapshots[i]
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// |E_i|.
    pub fn entity_count(&self, i: usize) -> usize {
        self.vocab.entities_through(i)
    }

    /// |R_i|.
    pub fn relation_count(&self, i: usize) -> usize {
        self.vocab.relations_through(i)
    }

    /// ΔT_i, ΔG_i, ΔE_i, ΔR_i for snapshot `i`.
    pub fn deltas(&self, i: usize) -> Result<DeltaView<'_>> {
        if i >= self.snapshots.len() {
            return Err(Error::Bounds(format!(
                "snapshot {i} out of range (sequence has {})",
                self.snapshots.len()
            )));
        }
        let (e_lo, r_lo) = if i == 0 {
            (0, 0)
        } else {
            (
                self.vocab.entities_through(i - 1) as EntityId,
                self.vocab.relations_through(i - 1) as RelationId,
            )
        };
        let snap = &self.snapshots[i];
        Ok(DeltaView {
            snapshot: i,
            train: &snap.train,
            valid: &snap.valid,
            test: &snap.test,
            new_entities: e_lo..self.vocab.entities_through(i) as EntityId,
            new_relations: r_lo..self.vocab.relations_through(i) as RelationId,
        })
    }

    /// T_i: all training triples of snapshots 0..=i, in snapshot order.
    pub fn cumulative_train(&self, i: usize) -> Vec<Triple> {
        self.snapshots[..=i]
            .iter()
            .flat_map(|s| s.train.iter().copied())
            .collect()
    }

    /// Total triples (all splits) across all snapshots.
    pub fn total_triples(&self) -> usize {
        self.snapshots.iter().map(|s| s.n_triples()).sum()
    }

    /// Checks every sequence invariant; errors name the offending snapshot.
    pub fn validate(&self) -> Result<()> {
        let n = self.snapshots.len();
        if n == 0 {
            return Err(Error::Validation("sequence has no snapshots".into()));
        }
        if self.vocab.entities_through.len() != n || self.vocab.relations_through.len() != n {
            return Err(Error::Validation(
                "vocab cumulative counts do not match snapshot count".into(),
            ));
        }
        // Birth assignments must be non-decreasing and consistent with the
        // cumulative counts: ids born at snapshot i occupy exactly
        // entities_through[i-1]..entities_through[i].
        for (what, births, through) in [
            (
                "entity",
                &self.vocab.entity_birth,
                &self.vocab.entities_through,
            ),
            (
                "relation",
                &self.vocab.relation_birth,
                &self.vocab.relations_through,
            ),
        ] {
            if births.len() != *through.last().unwrap() {
                return Err(Error::Validation(format!(
                    "{what} birth table size mismatch"
                )));
            }
            let mut prev_end = 0usize;
            for (i, &end) in through.iter().enumerate() {
                if end < prev_end {
                    return Err(Error::Validation(format!(
                        "{what} count shrinks at snapshot {i}"
                    )));
                }
                for id in prev_end..end {
                    if births[id] as usize != i {
                        return Err(Error::Validation(format!(
                            "{what} id {id} born at snapshot {} but counted at {i}",
                            births[id]
                        )));
                    }
                }
                prev_end = end;
            }
        }
        // Splits: ids in range for their snapshot, no duplicates anywhere,
        // and every new id is actually used at its birth snapshot.
        let mut seen = std::collections::HashSet::new();
        let mut entity_used_at_birth = vec![false; self.vocab.n_entities()];
        let mut relation_used_at_birth = vec![false; self.vocab.n_relations()];
        for (i, snap) in self.snapshots.iter().enumerate() {
            let e_max = self.vocab.entities_through(i) as EntityId;
            let r_max = self.vocab.relations_through(i) as RelationId;
            for split in snap.splits() {
                for &t in split {
                    if t.head >= e_max || t.tail >= e_max || t.relation >= r_max {
                        return Err(Error::Validation(format!(
                            "snapshot {i} references an id born later than {i}: \
                             ({}, {}, {}) with |E_{i}|={e_max}, |R_{i}|={r_max}",
                            t.head, t.relation, t.tail
                        )));
                    }
                    if !seen.insert(t) {
                        return Err(Error::Validation(format!(
                            "duplicate triple ({}, {}, {}) at snapshot {i}",
                            t.head, t.relation, t.tail
                        )));
                    }
                    for e in [t.head, t.tail] {
                        if self.vocab.entity_birth(e) == i {
                            entity_used_at_birth[e as usize] = true;
                        }
                    }
                    if self.vocab.relation_birth(t.relation) == i {
                        relation_used_at_birth[t.relation as usize] = true;
                    }
                }
            }
        }
        if let Some(id) = entity_used_at_birth.iter().position(|&u| !u) {
            return Err(Error::Validation(format!(
                "entity id {id} is born at snapshot {} but never referenced there \
                 (containment broken)",
                self.vocab.entity_birth(id as EntityId)
            )));
        }
        if let Some(id) = relation_used_at_birth.iter().position(|&u| !u) {
            return Err(Error::Validation(format!(
                "relation id {id} is born at snapshot {} but never referenced there \
                 (containment broken)",
                self.vocab.relation_birth(id as RelationId)
            )));
        }
        Ok(())
    }
}
