//! Central finite-difference verification of every analytic gradient path.
//!
//! Each case evaluates a loss twice per touched coordinate (±ε) and compares
//! the central difference against the analytic partial. A handful of
//! untouched coordinates are probed per case as well: their numerical
//! derivative must vanish, which catches silently dropped gradient terms.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kg::Triple;
use crate::models::{
    grad_minibatch, init_embeddings, EmbeddingStore, InitScheme, LossKind, ScoreModel, SparseGrad,
    ALL_MODEL_KINDS,
};

pub const EPSILON: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Gradients this small are compared absolutely; FD noise dominates below it.
pub const ABS_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct GradcheckFailure {
    pub case: String,
    pub coordinate: String,
    pub analytic: f64,
    pub finite_diff: f64,
}

#[derive(Debug, Default)]
pub struct GradcheckReport {
    pub coordinates_checked: usize,
    pub cases_run: usize,
    pub failures: Vec<GradcheckFailure>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: GradcheckReport) {
        self.coordinates_checked += other.coordinates_checked;
        self.cases_run += other.cases_run;
        self.failures.extend(other.failures);
    }
}

#[derive(Clone, Copy)]
enum Coord {
    Entity(u32, usize),
    Relation(u32, usize),
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coord::Entity(row, k) => write!(f, "entity[{row}][{k}]"),
            Coord::Relation(row, k) => write!(f, "relation_row[{row}][{k}]"),
        }
    }
}

fn nudge(emb: &mut EmbeddingStore, coord: Coord, delta: f64) {
    match coord {
        Coord::Entity(row, k) => emb.entity_mut(row)[k] += delta,
        Coord::Relation(row, k) => emb.relation_row_mut(row)[k] += delta,
    }
}

/// Checks one analytic (value, gradient) pair against central differences of
/// its value function. `loss` must be deterministic.
pub fn check_case(
    case: &str,
    emb: &EmbeddingStore,
    loss: &dyn Fn(&EmbeddingStore) -> Result<(f64, SparseGrad)>,
    report: &mut GradcheckReport,
) -> Result<()> {
    let (_, grad) = loss(emb)?;
    let mut coords: Vec<(Coord, f64)> = Vec::new();
    for (&row, g) in &grad.entity {
        for (k, &a) in g.iter().enumerate() {
            coords.push((Coord::Entity(row, k), a));
        }
    }
    for (&row, g) in &grad.relation {
        for (k, &a) in g.iter().enumerate() {
            coords.push((Coord::Relation(row, k), a));
        }
    }
    // Probe up to two untouched rows: analytic zero must hold numerically.
    if let Some(row) = (0..emb.n_entities() as u32).find(|r| !grad.entity.contains_key(r)) {
        coords.push((Coord::Entity(row, 0), 0.0));
    }
    if let Some(row) = (0..emb.n_relation_rows() as u32).find(|r| !grad.relation.contains_key(r)) {
        coords.push((Coord::Relation(row, 0), 0.0));
    }

    let mut probe = emb.clone();
    for (coord, analytic) in coords {
        nudge(&mut probe, coord, EPSILON);
        let (up, _) = loss(&probe)?;
        nudge(&mut probe, coord, -2.0 * EPSILON);
        let (down, _) = loss(&probe)?;
        nudge(&mut probe, coord, EPSILON);
        let fd = (up - down) / (2.0 * EPSILON);
        report.coordinates_checked += 1;
        let err = (analytic - fd).abs();
        if err > REL_TOL * analytic.abs().max(fd.abs()) && err > ABS_TOL {
            report.failures.push(GradcheckFailure {
                case: case.to_string(),
                coordinate: coord.to_string(),
                analytic,
                finite_diff: fd,
            });
        }
    }
    report.cases_run += 1;
    Ok(())
}

/// Random small instances of every penalty term over compatible model kinds.
pub fn run_penalty_gradchecks(n_instances: usize, seed: u64) -> Result<GradcheckReport> {
    use crate::continual::{
        AlignPenalty, FisherWeights, PsiKind, RecMode, ReconstructionPenalty, RegPenalty,
        RegWeights,
    };
    use crate::models::Penalty;

    let mut report = GradcheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_instances {
        let kind = ALL_MODEL_KINDS[i % ALL_MODEL_KINDS.len()];
        let dim = 2 * (1 + (i / ALL_MODEL_KINDS.len()) % 4);
        let n_entities = rng.gen_range(4..=12);
        let n_relations = rng.gen_range(1..=3);
        // Previous checkpoint and a drifted current store of the same shape.
        let prev = init_embeddings(
            kind,
            n_entities,
            n_relations,
            dim,
            InitScheme::Normal,
            rng.gen(),
        );
        let now = init_embeddings(
            kind,
            n_entities,
            n_relations,
            dim,
            InitScheme::Normal,
            rng.gen(),
        );
        let lambda = rng.gen_range(0.1..3.0);

        let psi = if i % 2 == 0 { PsiKind::L2 } else { PsiKind::L1 };
        let reg = RegPenalty::new(&prev, &now, &RegWeights::Uniform, psi, lambda)?;
        check_case(
            &format!("reg/uniform/{:?}/{}/{i}", psi, kind.as_str()),
            &now,
            &|e: &EmbeddingStore| reg.eval(e),
            &mut report,
        )?;

        // Fisher weights: random nonnegative diagonal (the estimator path is
        // covered separately; the gradient only sees the weights).
        let fisher = FisherWeights {
            entity: (0..n_entities * dim)
                .map(|_| rng.gen_range(0.0..2.0))
                .collect(),
            relation: (0..prev.n_relation_rows() * prev.relation_width())
                .map(|_| rng.gen_range(0.0..2.0))
                .collect(),
            dim,
            relation_width: prev.relation_width(),
        };
        let ewc = RegPenalty::new(
            &prev,
            &now,
            &RegWeights::Fisher(fisher),
            PsiKind::L2,
            lambda,
        )?;
        check_case(
            &format!("reg/fisher/{}/{i}", kind.as_str()),
            &now,
            &|e: &EmbeddingStore| ewc.eval(e),
            &mut report,
        )?;

        let align = AlignPenalty::new(&prev, lambda)?;
        check_case(
            &format!("align/{}/{i}", kind.as_str()),
            &now,
            &|e: &EmbeddingStore| align.eval(e),
            &mut report,
        )?;

        // Reconstruction needs relation rows in entity geometry.
        if now.relation_width() == dim && kind.relation_rows_per_relation() == 1 {
            let triples: Vec<Triple> = (0..6)
                .map(|_| {
                    Triple::new(
                        rng.gen_range(0..n_entities as u32),
                        rng.gen_range(0..n_relations as u32),
                        rng.gen_range(0..n_entities as u32),
                    )
                })
                .collect();
            for mode in [RecMode::TranseStructural, RecMode::NeighborMean] {
                let rec = ReconstructionPenalty::new(&now, &triples, mode, lambda)?;
                check_case(
                    &format!("rec/{mode:?}/{}/{i}", kind.as_str()),
                    &now,
                    &|e: &EmbeddingStore| rec.eval(e),
                    &mut report,
                )?;
            }
        }
    }
    Ok(report)
}

/// The whole gradient suite: model losses plus every penalty term.
pub fn run_full_suite(n_instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut report = run_model_gradchecks(n_instances, seed)?;
    report.merge(run_penalty_gradchecks(n_instances, seed ^ 0x5eed)?);
    Ok(report)
}

/// Random small minibatch instances for every model kind under both losses.
pub fn run_model_gradchecks(n_instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_instances {
        let kind = ALL_MODEL_KINDS[i % ALL_MODEL_KINDS.len()];
        let dim = 2 * (1 + (i / ALL_MODEL_KINDS.len()) % 4); // 2, 4, 6, 8
        let n_entities = rng.gen_range(4..=20);
        let n_relations = rng.gen_range(1..=3);
        let emb = init_embeddings(
            kind,
            n_entities,
            n_relations,
            dim,
            InitScheme::Normal,
            rng.gen(),
        );
        let mut model = ScoreModel::new(kind, dim);
        model.margin = 1.0;
        model.loss = if i % 2 == 0 {
            LossKind::Margin
        } else {
            LossKind::Softplus
        };
        let rand_triple = |rng: &mut ChaCha8Rng| {
            Triple::new(
                rng.gen_range(0..n_entities as u32),
                rng.gen_range(0..n_relations as u32),
                rng.gen_range(0..n_entities as u32),
            )
        };
        let positives: Vec<Triple> = (0..3).map(|_| rand_triple(&mut rng)).collect();
        let negatives: Vec<Triple> = (0..6).map(|_| rand_triple(&mut rng)).collect();
        let case = format!("{}/{:?}/instance{}", kind.as_str(), model.loss, i);
        let model_ref = &model;
        let pos_ref = &positives;
        let neg_ref = &negatives;
        check_case(
            &case,
            &emb,
            &move |e: &EmbeddingStore| grad_minibatch(model_ref, e, pos_ref, neg_ref),
            &mut report,
        )?;
    }
    Ok(report)
}
