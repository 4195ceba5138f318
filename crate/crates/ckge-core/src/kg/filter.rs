//! Known-true triple index for filtered ranking and negative sampling.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::{EntityId, RelationId, SnapshotSequence, Triple};

/// Membership index over every triple (all splits) of snapshots
/// `0..=built_through`. Competitors that form a known-true triple are
/// excluded from rank counts, and corrupted training triples are rejected
/// against this set.
#[derive(Clone, Debug)]
pub struct FilterIndex {
    known_tails: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
    known_heads: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
    built_through: usize,
    len: usize,
}

impl FilterIndex {
    pub fn build(seq: &SnapshotSequence, upto: usize) -> Result<FilterIndex> {
        if upto >= seq.n_snapshots() {
            return Err(Error::Bounds(format!(
                "filter upto={upto} out of range (sequence has {})",
                seq.n_snapshots()
            )));
        }
        let mut idx = FilterIndex {
            known_tails: HashMap::new(),
            known_heads: HashMap::new(),
            built_through: upto,
            len: 0,
        };
        for snap in &seq.snapshots()[..=upto] {
            for split in snap.splits() {
                for &t in split {
                    idx.insert(t);
                }
            }
        }
        Ok(idx)
    }

    fn insert(&mut self, t: Triple) {
        self.known_tails
            .entry((t.head, t.relation))
            .or_default()
            .insert(t.tail);
        self.known_heads
            .entry((t.tail, t.relation))
            .or_default()
            .insert(t.head);
        self.len += 1;
    }

    /// Is (h, r, t) a known-true triple in S_built_through?
    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.known_tails
            .get(&(head, relation))
            .is_some_and(|s| s.contains(&tail))
    }

    /// Tails t such that (head, relation, t) is known-true.
    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> Option<&HashSet<EntityId>> {
        self.known_tails.get(&(head, relation))
    }

    /// Heads h such that (h, relation, tail) is known-true.
    pub fn known_heads(&self, tail: EntityId, relation: RelationId) -> Option<&HashSet<EntityId>> {
        self.known_heads.get(&(tail, relation))
    }

    pub fn built_through(&self) -> usize {
        self.built_through
    }

    /// Number of indexed triples (Σ_i |ΔS_i| for i ≤ built_through).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn named(h: &str, r: &str, t: &str) -> (String, String, String) {
        (h.into(), r.into(), t.into())
    }

    #[test]
    fn direct_enumeration() {
        let seq = SnapshotSequence::from_named_triples(&[[
            vec![named("a", "p", "b"), named("a", "p", "c")],
            vec![],
            vec![],
        ]])
        .unwrap();
        let idx = FilterIndex::build(&seq, 0).unwrap();
        let a = seq.vocab().entity_id("a").unwrap();
        let b = seq.vocab().entity_id("b").unwrap();
        let c = seq.vocab().entity_id("c").unwrap();
        let p = seq.vocab().relation_id("p").unwrap();
        let tails = idx.known_tails(a, p).unwrap();
        assert_eq!(tails.len(), 2);
        assert!(tails.contains(&b) && tails.contains(&c));
        assert!(idx.contains(a, p, b));
        assert!(!idx.contains(b, p, a));
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn membership_agrees_with_linear_scan() {
        // Random 3-snapshot toy; 1000 random probes against a brute-force scan.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let names: Vec<String> = (0..30).map(|i| format!("e{i}")).collect();
        let rels: Vec<String> = (0..4).map(|i| format!("r{i}")).collect();
        let mut used = std::collections::HashSet::new();
        let mut snaps = Vec::new();
        for _ in 0..3 {
            let mut train = Vec::new();
            for _ in 0..60 {
                let h = names.choose(&mut rng).unwrap().clone();
                let r = rels.choose(&mut rng).unwrap().clone();
                let t = names.choose(&mut rng).unwrap().clone();
                if used.insert((h.clone(), r.clone(), t.clone())) {
                    train.push((h, r, t));
                }
            }
            snaps.push([train, vec![], vec![]]);
        }
        let seq = SnapshotSequence::from_named_triples(&snaps).unwrap();

        for upto in 0..seq.n_snapshots() {
            let idx = FilterIndex::build(&seq, upto).unwrap();
            let all: Vec<Triple> = seq.snapshots()[..=upto]
                .iter()
                .flat_map(|s| {
                    s.splits()
                        .into_iter()
                        .flatten()
                        .copied()
                        .collect::<Vec<_>>()
                })
                .collect();
            assert_eq!(idx.len(), all.len());
            let ne = seq.entity_count(upto) as u32;
            let nr = seq.relation_count(upto) as u32;
            for _ in 0..1000 {
                let h = rng.gen_range(0..ne);
                let r = rng.gen_range(0..nr);
                let t = rng.gen_range(0..ne);
                let brute = all
                    .iter()
                    .any(|x| x.head == h && x.relation == r && x.tail == t);
                assert_eq!(idx.contains(h, r, t), brute);
            }
        }
    }
}
