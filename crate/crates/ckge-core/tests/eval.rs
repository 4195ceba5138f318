//! Ranking, protocol, and decomposition behavior on controlled fixtures.

mod common;

use ckge_core::continual::{run_continual, FreezePolicy, RunArtifacts, StrategyConfig};
use ckge_core::eval::{
    decompose_forgetting, evaluate_testset, rank, theta_matrices, CorruptedSide, PolicyKind, Query,
};
use ckge_core::kg::{FilterIndex, SnapshotSequence, Triple};
use ckge_core::models::{
    init_embeddings, score, EmbeddingStore, InitScheme, ModelKind, ScoreModel,
};
use ckge_core::snapgen::GrowthKind;

use common::{growth_seq, quick_model, quick_train};

fn named(h: &str, r: &str, t: &str) -> (String, String, String) {
    (h.into(), r.into(), t.into())
}

/// Two-snapshot capital-city fixture: snapshot 0 holds Paris, France,
/// Germany and the training fact (Paris, capital_of, France); snapshot 1
/// introduces Italy. Entity ids: Paris 0, France 1, Germany 2, Italy 3.
fn capitals_sequence() -> SnapshotSequence {
    SnapshotSequence::from_named_triples(&[
        [vec![named("Paris", "capital_of", "France")], vec![], vec![]],
        [vec![named("Rome", "capital_of", "Italy")], vec![], vec![]],
    ])
    .unwrap()
}

fn capitals_store(entities: &[[f64; 2]], relation: [f64; 2]) -> EmbeddingStore {
    let mut emb = init_embeddings(
        ModelKind::TransEL2,
        entities.len(),
        1,
        2,
        InitScheme::Normal,
        0,
    );
    for (i, row) in entities.iter().enumerate() {
        emb.entity_mut(i as u32).copy_from_slice(row);
    }
    emb.relation_row_mut(0).copy_from_slice(&relation);
    emb
}

#[test]
fn singleton_candidate_ranks_first() {
    let emb = init_embeddings(ModelKind::TransEL2, 4, 1, 4, InitScheme::Normal, 3);
    let seq = SnapshotSequence::from_named_triples(&[[vec![named("b", "p", "a")], vec![], vec![]]])
        .unwrap();
    let filter = FilterIndex::build(&seq, 0).unwrap();
    // Head query whose true entity is id 0: the candidate prefix 0..1 is
    // exactly {true_entity}, so the rank can only be 1.
    let query = Query {
        triple: Triple::new(0, 0, 1), // (b, p, a)
        side: CorruptedSide::Head,
        snapshot: 0,
    };
    let r = rank(&emb, &query, 1, 1, &filter).unwrap();
    assert_eq!(r.rank, 1);
    assert_eq!(r.best_competitor, 0, "rank-1 keeps the truth as best");
    // The true entity outside the candidate set violates the contract.
    let bad = Query {
        triple: Triple::new(0, 0, 1),
        side: CorruptedSide::Tail, // truth is id 1
        snapshot: 0,
    };
    assert!(rank(&emb, &bad, 1, 1, &filter).is_err());
}

#[test]
fn interference_fixture_matches_hand_placement() {
    // Paris + capital_of lands at (1, 0). France sits 0.3 away, Germany far,
    // Italy (born at snapshot 1) sits 0.1 away: closer than France.
    let seq = capitals_sequence();
    // Ids by first appearance: Paris 0, France 1, Germany? — Germany never
    // appears in a triple, so use Rome/Italy from snapshot 1 instead and a
    // snapshot-0 distractor in the test split.
    assert_eq!(seq.vocab().entity_id("Paris"), Some(0));
    assert_eq!(seq.vocab().entity_id("France"), Some(1));
    assert_eq!(seq.vocab().entity_id("Rome"), Some(2));
    assert_eq!(seq.vocab().entity_id("Italy"), Some(3));
    let filter = FilterIndex::build(&seq, 1).unwrap();
    let emb = capitals_store(
        &[
            [0.0, 0.0], // Paris
            [1.0, 0.3], // France: distance 0.3 from the target point
            [4.0, 4.0], // Rome: far away
            [1.0, 0.1], // Italy: distance 0.1, interferes
        ],
        [1.0, 0.0], // capital_of
    );
    let query = Query {
        triple: Triple::new(0, 0, 1), // (Paris, capital_of, France)
        side: CorruptedSide::Tail,
        snapshot: 0,
    };
    let local_bound = seq.entity_count(0) as u32; // E_0 = {Paris, France, Rome}?
    assert_eq!(local_bound, 2, "snapshot 0 has exactly Paris and France");
    let local = rank(&emb, &query, local_bound, local_bound, &filter).unwrap();
    assert_eq!(local.rank, 1, "France wins among snapshot-0 entities");
    let current_bound = seq.entity_count(1) as u32;
    let current = rank(&emb, &query, current_bound, local_bound, &filter).unwrap();
    assert_eq!(current.rank, 2, "Italy outranks France in the full set");
    assert_eq!(current.interfering_new_count, 1);
    assert_eq!(current.best_competitor, 3, "the interferer is Italy");
    assert_eq!(
        current.rank,
        local.rank + current.interfering_new_count,
        "rank decomposition identity"
    );
}

#[test]
fn rank_matches_brute_force_oracle() {
    // 200 random queries on a 50-entity toy, against a naive loop that
    // scores every candidate independently.
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let mut triples = Vec::new();
    let mut seen = std::collections::HashSet::new();
    while triples.len() < 120 {
        let h = rng.gen_range(0..50);
        let t = rng.gen_range(0..50);
        let r = rng.gen_range(0..3);
        if h != t && seen.insert((h, r, t)) {
            triples.push(named(&format!("e{h}"), &format!("r{r}"), &format!("e{t}")));
        }
    }
    let seq = SnapshotSequence::from_named_triples(&[[triples, vec![], vec![]]]).unwrap();
    let filter = FilterIndex::build(&seq, 0).unwrap();
    let n = seq.entity_count(0) as u32;
    for kind in [ModelKind::TransEL2, ModelKind::DistMult, ModelKind::RotatE] {
        let emb = init_embeddings(kind, n as usize, 3, 8, InitScheme::Normal, 5);
        for qi in 0..200 {
            let triple = seq.snapshot(0).train[qi % seq.snapshot(0).train.len()];
            let side = if qi % 2 == 0 {
                CorruptedSide::Tail
            } else {
                CorruptedSide::Head
            };
            let query = Query {
                triple,
                side,
                snapshot: 0,
            };
            let got = rank(&emb, &query, n, n, &filter).unwrap();
            // Naive: score every candidate, count strictly greater after
            // dropping known-true corruptions and the truth itself.
            let true_score = score(&emb, triple.head, triple.relation, triple.tail).unwrap();
            let mut better = 0;
            for c in 0..n {
                let (candidate, known) = match side {
                    CorruptedSide::Tail => (
                        (triple.head, triple.relation, c),
                        filter.contains(triple.head, triple.relation, c),
                    ),
                    CorruptedSide::Head => (
                        (c, triple.relation, triple.tail),
                        filter.contains(c, triple.relation, triple.tail),
                    ),
                };
                if c == query.true_entity() || known {
                    continue;
                }
                if score(&emb, candidate.0, candidate.1, candidate.2).unwrap() > true_score {
                    better += 1;
                }
            }
            assert_eq!(got.rank, 1 + better, "{kind:?} query {qi}");
        }
    }
}

#[test]
fn evaluate_testset_hand_arithmetic() {
    // Geometry pinned so one query ranks 1 and the other ranks 2:
    // MRR = (1 + 1/2)/2 = 0.75, Hits@1 = 0.5.
    let seq = SnapshotSequence::from_named_triples(&[[
        vec![named("a", "p", "b"), named("c", "p", "b")],
        vec![],
        vec![named("a", "p", "d")],
    ]])
    .unwrap();
    // ids: a0 b1 c2 d3.
    let filter = FilterIndex::build(&seq, 0).unwrap();
    // Tail query (a, p, ?): target a + p = (1, 0.5); the truth d sits 0.3
    // away, b is filtered as known-true, a and c sit ≈1 away -> rank 1.
    // Head query (?, p, d): the truth a sits 0.3 away but c sits 0.1 away
    // and (c, p, d) is NOT a known triple -> rank 2.
    let emb = capitals_store(
        &[
            [0.0, 0.5], // a: ||a + p - d|| = ||(1, .5) - (1, .2)|| = 0.3
            [5.0, 5.0], // b (filtered for the tail query anyway)
            [0.0, 0.3], // c: ||c + p - d|| = 0.1 -> outranks a
            [1.0, 0.2], // d: tail query: ||a + p - d|| = 0.3...
        ],
        [1.0, 0.0],
    );
    let metrics = evaluate_testset(
        &emb,
        &seq.snapshot(0).test,
        0,
        &seq,
        0,
        PolicyKind::Current,
        &filter,
    )
    .unwrap();
    assert_eq!(metrics.n_queries, 2);
    assert!((metrics.mrr - 0.75).abs() < 1e-12, "mrr {}", metrics.mrr);
    assert!((metrics.hits1 - 0.5).abs() < 1e-12);
    assert!((metrics.hits3 - 1.0).abs() < 1e-12);
}

#[test]
fn perfect_model_scores_unit_metrics() {
    // All queries rank 1 -> MRR = Hits@1 = 1. Ring geometry embedded
    // exactly: entity e at angle stays translation-consistent only for a
    // hand-built line layout, so use explicit coordinates.
    let seq = SnapshotSequence::from_named_triples(&[[
        vec![named("x", "p", "y")],
        vec![],
        vec![named("y", "p", "z")],
    ]])
    .unwrap();
    // ids: x0 y1 z2. Embed on a line with p = +1.
    let emb = capitals_store(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [1.0, 0.0]);
    let filter = FilterIndex::build(&seq, 0).unwrap();
    let metrics = evaluate_testset(
        &emb,
        &seq.snapshot(0).test,
        0,
        &seq,
        0,
        PolicyKind::Current,
        &filter,
    )
    .unwrap();
    assert_eq!(metrics.mrr, 1.0);
    assert_eq!(metrics.hits1, 1.0);
}

fn toy_run(kind: GrowthKind, seed: u64) -> (SnapshotSequence, RunArtifacts) {
    let seq = growth_seq(kind, 5, 20, 3, 3, seed);
    let model = quick_model(ModelKind::TransEL2, 8);
    let run = run_continual(
        &seq,
        &model,
        &StrategyConfig::finetune(),
        &quick_train(12),
        seed,
    )
    .unwrap();
    (seq, run)
}

#[test]
fn corrected_policy_never_beats_legacy() {
    let (seq, run) = toy_run(GrowthKind::EntityGrowth, 5);
    let legacy = theta_matrices(&run, &seq, PolicyKind::SnapshotLocal).unwrap();
    let corrected = theta_matrices(&run, &seq, PolicyKind::Current).unwrap();
    for j in 0..seq.n_snapshots() {
        for i in 0..=j {
            assert!(
                legacy.mrr.get(j, i) >= corrected.mrr.get(j, i) - 1e-15,
                "θ^legacy[{j}][{i}] < θ^corrected[{j}][{i}]"
            );
            // Diagonal cells use identical candidate sets under both
            // policies.
            if i == j {
                assert_eq!(legacy.mrr.get(j, i), corrected.mrr.get(j, i));
                assert_eq!(legacy.hits10.get(j, i), corrected.hits10.get(j, i));
            }
        }
    }
}

#[test]
fn rank_decomposition_identity_holds_everywhere() {
    let (seq, run) = toy_run(GrowthKind::EntityGrowth, 7);
    let n = seq.last_snapshot();
    let ckpt = run.checkpoint(n).unwrap();
    let filter = FilterIndex::build(&seq, n).unwrap();
    let mut checked = 0;
    for i in 0..=n {
        let local_bound = seq.entity_count(i) as u32;
        let current_bound = seq.entity_count(n) as u32;
        for &triple in &seq.snapshot(i).test {
            for side in [CorruptedSide::Tail, CorruptedSide::Head] {
                let query = Query {
                    triple,
                    side,
                    snapshot: i,
                };
                let local = rank(ckpt, &query, local_bound, local_bound, &filter).unwrap();
                let current = rank(ckpt, &query, current_bound, local_bound, &filter).unwrap();
                assert_eq!(
                    current.rank,
                    local.rank + current.interfering_new_count,
                    "identity violated at snapshot {i}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 60, "fixture too small ({checked} queries)");
}

#[test]
fn theta_matrix_matches_per_cell_evaluation() {
    let (seq, run) = toy_run(GrowthKind::EqualSize, 3);
    let set = theta_matrices(&run, &seq, PolicyKind::Current).unwrap();
    for j in 0..seq.n_snapshots() {
        let filter = FilterIndex::build(&seq, j).unwrap();
        for i in 0..=j {
            let direct = evaluate_testset(
                run.checkpoint(j).unwrap(),
                &seq.snapshot(i).test,
                i,
                &seq,
                j,
                PolicyKind::Current,
                &filter,
            )
            .unwrap();
            assert_eq!(set.mrr.get(j, i), direct.mrr);
            assert_eq!(set.hits10.get(j, i), direct.hits10);
        }
    }
}

#[test]
fn frozen_run_shows_pure_interference() {
    let seq = growth_seq(GrowthKind::EntityGrowth, 5, 20, 3, 3, 11);
    let model = quick_model(ModelKind::TransEL2, 8);
    let strat = StrategyConfig {
        freeze_old: FreezePolicy::Always,
        ..StrategyConfig::finetune()
    };
    let run = run_continual(&seq, &model, &strat, &quick_train(12), 11).unwrap();
    // Legacy θ over ΔG_0 is bit-identical across checkpoints.
    let legacy = theta_matrices(&run, &seq, PolicyKind::SnapshotLocal).unwrap();
    for j in 1..seq.n_snapshots() {
        assert_eq!(
            legacy.mrr.get(j, 0),
            legacy.mrr.get(0, 0),
            "frozen legacy θ[{j}][0] moved"
        );
    }
    // And the decomposition attributes all forgetting to interference.
    let filter = FilterIndex::build(&seq, seq.last_snapshot()).unwrap();
    let report = decompose_forgetting(&run, &seq, 0, &filter).unwrap();
    assert_eq!(report.drift_forgotten, 0, "frozen rows cannot drift");
    assert_eq!(report.both_forgotten, 0);
    assert_eq!(
        report.classified_total(),
        report.captured_at_source,
        "classification must partition the captured queries"
    );
}

#[test]
fn drift_fixture_classifies_as_drift() {
    // Hand-placed 2-d TransE stores: at the source checkpoint France is the
    // nearest completion; at the final checkpoint the old entities have
    // drifted so Germany wins. No new entities exist, so the loss is pure
    // drift.
    // The training fact must not turn the drifting competitor into a
    // filtered known-true answer, so it links France -> Germany.
    let seq = SnapshotSequence::from_named_triples(&[
        [
            vec![named("France", "capital_of", "Germany")],
            vec![],
            vec![named("Paris", "capital_of", "France")],
        ],
        [vec![named("France", "near", "Germany")], vec![], vec![]],
    ])
    .unwrap();
    // ids by first appearance: France 0, Germany 1, Paris 2.
    let at_source = capitals_store(&[[1.0, 0.2], [3.0, 3.0], [0.0, 0.0]], [1.0, 0.0]);
    let mut at_final = at_source.clone();
    // Expand for snapshot 1 vocabulary (relation "near"), drifting rows.
    let at_final_exp = {
        let grown = ckge_core::models::expand_store(
            &at_final,
            3,
            2,
            InitScheme::Normal,
            9,
            ckge_core::models::Projection::None,
        )
        .unwrap();
        at_final = grown;
        // France drifts away (but keeps the head query correct), Germany
        // drifts in front of the tail-query target point (1, 0).
        at_final.entity_mut(0).copy_from_slice(&[1.0, -0.8]);
        at_final.entity_mut(1).copy_from_slice(&[1.2, 0.1]);
        at_final
    };
    let run = RunArtifacts {
        model: ScoreModel::new(ModelKind::TransEL2, 2),
        checkpoints: vec![at_source, at_final_exp],
        stats: vec![],
        replay_buffer: None,
    };
    let filter = FilterIndex::build(&seq, 1).unwrap();
    let report = decompose_forgetting(&run, &seq, 0, &filter).unwrap();
    assert_eq!(report.captured_at_source, 2, "both sides rank 1 at source");
    assert_eq!(
        report.drift_forgotten, 1,
        "the tail query is drift-forgotten"
    );
    assert_eq!(report.interference_forgotten, 0, "no new entities exist");
    assert_eq!(report.still_correct, 1, "the head query stays correct");
}

#[test]
fn interference_fixture_classifies_as_interference() {
    // Old rows identical across checkpoints; a new entity (Italy) lands
    // nearer the target point than the true answer.
    let source = capitals_store(&[[0.0, 0.0], [1.0, 0.3]], [1.0, 0.0]);
    let mut fin = ckge_core::models::expand_store(
        &source,
        4,
        1,
        InitScheme::Normal,
        13,
        ckge_core::models::Projection::None,
    )
    .unwrap();
    fin.entity_mut(2).copy_from_slice(&[4.0, 4.0]); // Rome far
    fin.entity_mut(3).copy_from_slice(&[1.0, 0.1]); // Italy interferes
    let run = RunArtifacts {
        model: ScoreModel::new(ModelKind::TransEL2, 2),
        checkpoints: vec![source, fin],
        stats: vec![],
        replay_buffer: None,
    };
    // Make (Paris, capital_of, France) a test triple of snapshot 0 by
    // rebuilding the sequence with it in the test split.
    let seq = SnapshotSequence::from_named_triples(&[
        [vec![], vec![], vec![named("Paris", "capital_of", "France")]],
        [vec![named("Rome", "capital_of", "Italy")], vec![], vec![]],
    ])
    .unwrap();
    let filter = FilterIndex::build(&seq, 1).unwrap();
    let report = decompose_forgetting(&run, &seq, 0, &filter).unwrap();
    // Tail query: Italy interferes; head query (?, capital_of, France):
    // candidates Paris/France; France itself scores -(something) ... the
    // head query stays correct since no competitor beats Paris.
    assert_eq!(report.interference_forgotten, 1);
    assert_eq!(
        report.drift_forgotten, 0,
        "old rows were copied bit-exactly"
    );
    assert_eq!(report.classified_total(), report.captured_at_source);
}

#[test]
fn decomposition_consistent_with_rank_accounting() {
    // Classification re-derived from raw rank identities on ~500 queries.
    let (seq, run) = toy_run(GrowthKind::EntityGrowth, 13);
    let n = seq.last_snapshot();
    let filter_n = FilterIndex::build(&seq, n).unwrap();
    for source in 0..n {
        let report = decompose_forgetting(&run, &seq, source, &filter_n).unwrap();
        let filter_src = FilterIndex::build(&seq, source).unwrap();
        let src_bound = seq.entity_count(source) as u32;
        let cur_bound = seq.entity_count(n) as u32;
        let ckpt_src = run.checkpoint(source).unwrap();
        let ckpt_n = run.checkpoint(n).unwrap();
        let (mut captured, mut still, mut drift, mut interf, mut both) = (0, 0, 0, 0, 0);
        for &triple in &seq.snapshot(source).test {
            for side in [CorruptedSide::Tail, CorruptedSide::Head] {
                let q = Query {
                    triple,
                    side,
                    snapshot: source,
                };
                if rank(ckpt_src, &q, src_bound, src_bound, &filter_src)
                    .unwrap()
                    .rank
                    != 1
                {
                    continue;
                }
                captured += 1;
                let local = rank(ckpt_n, &q, src_bound, src_bound, &filter_n).unwrap();
                let current = rank(ckpt_n, &q, cur_bound, src_bound, &filter_n).unwrap();
                // interfering count must explain the whole rank gap
                assert_eq!(current.rank - local.rank, current.interfering_new_count);
                match (local.rank > 1, current.interfering_new_count > 0) {
                    (false, false) => still += 1,
                    (true, false) => drift += 1,
                    (false, true) => interf += 1,
                    (true, true) => both += 1,
                }
            }
        }
        assert_eq!(report.captured_at_source, captured);
        assert_eq!(report.still_correct, still);
        assert_eq!(report.drift_forgotten, drift);
        assert_eq!(report.interference_forgotten, interf);
        assert_eq!(report.both_forgotten, both);
    }
}
