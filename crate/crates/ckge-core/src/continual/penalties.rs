//! Loss-level forgetting mitigation: regularization against the previous
//! checkpoint, structural reconstruction, and cosine alignment. All penalty
//! gradients flow through every embedding they read, so central finite
//! differences over the full parameter set reproduce them.

use std::cell::Cell;
use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Triple};
use crate::models::{
    grad_minibatch, negative_sample, EmbeddingStore, Penalty, ScoreModel, SparseGrad,
};

use super::{PsiKind, RecMode};

/// Diagonal Fisher information estimate, shaped like the embedding store.
#[derive(Clone, Debug)]
pub struct FisherWeights {
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
    pub dim: usize,
    pub relation_width: usize,
}

impl FisherWeights {
    pub fn all_finite_nonnegative(&self) -> bool {
        self.entity
            .iter()
            .chain(self.relation.iter())
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Mean of squared per-sample gradients over `n_samples` training triples,
/// each paired with fresh negatives. Rows of entities that never appear in
/// the sampled triples stay zero.
///
/// The gradients are always taken under the logistic (softplus) objective:
/// Fisher information is defined through a likelihood, and at a trained
/// checkpoint the hinge loss saturates to zero gradient everywhere, which
/// would degenerate the estimate.
pub fn ewc_fisher_diag(
    model: &ScoreModel,
    emb: &EmbeddingStore,
    triples: &[Triple],
    n_samples: usize,
    filter: &FilterIndex,
    rng: &mut ChaCha8Rng,
) -> Result<FisherWeights> {
    if n_samples == 0 || triples.is_empty() {
        return Err(Error::Contract(
            "fisher estimate needs at least one sample".into(),
        ));
    }
    let model = {
        let mut m = model.clone();
        m.loss = crate::models::LossKind::Softplus;
        m
    };
    let model = &model;
    let dim = emb.dim();
    let width = emb.relation_width();
    let mut fisher = FisherWeights {
        entity: vec![0.0; emb.n_entities() * dim],
        relation: vec![0.0; emb.n_relation_rows() * width],
        dim,
        relation_width: width,
    };
    let take = n_samples.min(triples.len());
    let picks = if take == triples.len() {
        (0..triples.len()).collect::<Vec<_>>()
    } else {
        rand::seq::index::sample(rng, triples.len(), take).into_vec()
    };
    for idx in &picks {
        let pos = [triples[*idx]];
        let negs = negative_sample(pos[0], emb.n_entities(), model.negatives, filter, rng)?;
        let (_, grad) = grad_minibatch(model, emb, &pos, &negs)?;
        for (&row, g) in &grad.entity {
            let base = row as usize * dim;
            for (k, v) in g.iter().enumerate() {
                fisher.entity[base + k] += v * v;
            }
        }
        for (&row, g) in &grad.relation {
            let base = row as usize * width;
            for (k, v) in g.iter().enumerate() {
                fisher.relation[base + k] += v * v;
            }
        }
    }
    let inv = 1.0 / take as f64;
    for v in fisher.entity.iter_mut().chain(fisher.relation.iter_mut()) {
        *v *= inv;
    }
    Ok(fisher)
}

/// Per-coordinate penalty weights over the old parameter block.
#[derive(Clone, Debug)]
pub enum RegWeights {
    Uniform,
    /// Per-entity and per-relation triple counts (old + new triples).
    TripleFrequency {
        entity: Vec<f64>,
        relation: Vec<f64>,
    },
    Fisher(FisherWeights),
}

impl RegWeights {
    /// Counts of triples containing each id, over old and new training sets.
    pub fn triple_frequency(
        n_entities: usize,
        n_relations: usize,
        triples: impl Iterator<Item = Triple>,
    ) -> RegWeights {
        let mut entity = vec![0.0; n_entities];
        let mut relation = vec![0.0; n_relations];
        for t in triples {
            entity[t.head as usize] += 1.0;
            entity[t.tail as usize] += 1.0;
            relation[t.relation as usize] += 1.0;
        }
        RegWeights::TripleFrequency { entity, relation }
    }
}

/// λ · Σ_old-rows w(row) · Δ_Ψ(row_now, row_prev); gradients only on the
/// current rows. Old rows are the previous checkpoint's; when the dimension
/// has grown since, the previous rows are compared zero-padded.
pub struct RegPenalty {
    prev: EmbeddingStore,
    /// Per-coordinate weights aligned to the *current* geometry.
    entity_weights: Vec<f64>,
    relation_weights: Vec<f64>,
    psi: PsiKind,
    lambda: f64,
    now_dim: usize,
    now_width: usize,
}

impl RegPenalty {
    pub fn new(
        prev: &EmbeddingStore,
        now: &EmbeddingStore,
        weights: &RegWeights,
        psi: PsiKind,
        lambda: f64,
    ) -> Result<RegPenalty> {
        if lambda < 0.0 {
            return Err(Error::Config("reg lambda must be nonnegative".into()));
        }
        if prev.n_entities() > now.n_entities() || prev.dim() > now.dim() {
            return Err(Error::Contract(
                "previous store must be a sub-block of the current one".into(),
            ));
        }
        let dim = now.dim();
        let width = now.relation_width();
        let old_rel_rows = prev.n_relation_rows();
        let rows_per = prev.kind().relation_rows_per_relation();
        let (entity_weights, relation_weights) = match weights {
            RegWeights::Uniform => (
                vec![1.0; prev.n_entities() * dim],
                vec![1.0; old_rel_rows * width],
            ),
            RegWeights::TripleFrequency { entity, relation } => {
                if entity.len() < prev.n_entities() || relation.len() < prev.n_relations() {
                    return Err(Error::Config(format!(
                        "frequency weights cover {}/{} old entities",
                        entity.len(),
                        prev.n_entities()
                    )));
                }
                let mut ew = Vec::with_capacity(prev.n_entities() * dim);
                for e in 0..prev.n_entities() {
                    ew.extend(std::iter::repeat_n(entity[e], dim));
                }
                let mut rw = Vec::with_capacity(old_rel_rows * width);
                for row in 0..old_rel_rows {
                    rw.extend(std::iter::repeat_n(relation[row / rows_per], width));
                }
                (ew, rw)
            }
            RegWeights::Fisher(f) => {
                if f.entity.len() < prev.n_entities() * f.dim
                    || f.relation.len() < old_rel_rows * f.relation_width
                {
                    return Err(Error::Config("fisher weights missing old rows".into()));
                }
                // Re-lay onto the current dimension, padding new dims with 0.
                let mut ew = vec![0.0; prev.n_entities() * dim];
                for e in 0..prev.n_entities() {
                    for k in 0..f.dim {
                        ew[e * dim + k] = f.entity[e * f.dim + k];
                    }
                }
                let mut rw = vec![0.0; old_rel_rows * width];
                for row in 0..old_rel_rows {
                    for k in 0..f.relation_width {
                        rw[row * width + k] = f.relation[row * f.relation_width + k];
                    }
                }
                (ew, rw)
            }
        };
        Ok(RegPenalty {
            prev: prev.clone(),
            entity_weights,
            relation_weights,
            psi,
            lambda,
            now_dim: dim,
            now_width: width,
        })
    }

    fn prev_coord_entity(&self, e: usize, k: usize) -> f64 {
        if k < self.prev.dim() {
            self.prev.entity(e as u32)[k]
        } else {
            0.0
        }
    }

    fn prev_coord_relation(&self, row: usize, k: usize) -> f64 {
        if k < self.prev.kind().relation_width(self.prev.dim()) {
            self.prev.relation_row(row as u32)[k]
        } else {
            0.0
        }
    }
}

impl RegPenalty {
    fn coord_prox(&self, x: f64, anchor: f64, w: f64, lr: f64) -> f64 {
        match self.psi {
            // argmin_y λw(y-a)² + (y-x)²/(2lr)
            PsiKind::L2 => {
                let c = 2.0 * self.lambda * w * lr;
                (x + c * anchor) / (1.0 + c)
            }
            // argmin_y λw|y-a| + (y-x)²/(2lr): soft threshold toward a.
            PsiKind::L1 => {
                let d = x - anchor;
                let shrink = self.lambda * w * lr;
                anchor + d.signum_or_zero() * (d.abs() - shrink).max(0.0)
            }
        }
    }
}

impl Penalty for RegPenalty {
    fn eval(&self, emb: &EmbeddingStore) -> Result<(f64, SparseGrad)> {
        let mut value = 0.0;
        let mut grad = SparseGrad::default();
        let dim = self.now_dim;
        for e in 0..self.prev.n_entities() {
            let now = emb.entity(e as u32);
            let row = grad.entity_row_mut(e as u32, dim);
            for k in 0..dim {
                let w = self.entity_weights[e * dim + k];
                let d = now[k] - self.prev_coord_entity(e, k);
                match self.psi {
                    PsiKind::L2 => {
                        value += self.lambda * w * d * d;
                        row[k] += 2.0 * self.lambda * w * d;
                    }
                    PsiKind::L1 => {
                        value += self.lambda * w * d.abs();
                        row[k] += self.lambda * w * d.signum_or_zero();
                    }
                }
            }
        }
        let width = self.now_width;
        for r in 0..self.prev.n_relation_rows() {
            let now = emb.relation_row(r as u32);
            let row = grad.relation_row_mut(r as u32, width);
            for k in 0..width {
                let w = self.relation_weights[r * width + k];
                let d = now[k] - self.prev_coord_relation(r, k);
                match self.psi {
                    PsiKind::L2 => {
                        value += self.lambda * w * d * d;
                        row[k] += 2.0 * self.lambda * w * d;
                    }
                    PsiKind::L1 => {
                        value += self.lambda * w * d.abs();
                        row[k] += self.lambda * w * d.signum_or_zero();
                    }
                }
            }
        }
        Ok((value, grad))
    }

    fn name(&self) -> &'static str {
        "reg"
    }

    fn has_prox(&self) -> bool {
        true
    }

    /// Exact backward-Euler step for the anchor penalty: stable for any λ
    /// (λ→∞ pins old rows to the previous checkpoint instead of diverging).
    fn prox_step(
        &self,
        emb: &mut crate::models::EmbeddingStore,
        lr: f64,
        mask: Option<&crate::models::UpdateMask>,
    ) -> Option<Result<f64>> {
        let dim = self.now_dim;
        let width = self.now_width;
        let mut value = 0.0;
        for e in 0..self.prev.n_entities() {
            let anchors: Vec<f64> = (0..dim).map(|k| self.prev_coord_entity(e, k)).collect();
            let row = emb.entity_mut(e as u32);
            for k in 0..dim {
                let w = self.entity_weights[e * dim + k];
                let d = row[k] - anchors[k];
                value += self.lambda
                    * w
                    * match self.psi {
                        PsiKind::L2 => d * d,
                        PsiKind::L1 => d.abs(),
                    };
                let frozen = mask.is_some_and(|m| m.entity_coord_frozen_pub(e as u32, k));
                if !frozen {
                    row[k] = self.coord_prox(row[k], anchors[k], w, lr);
                }
            }
        }
        for r in 0..self.prev.n_relation_rows() {
            let anchors: Vec<f64> = (0..width).map(|k| self.prev_coord_relation(r, k)).collect();
            let row = emb.relation_row_mut(r as u32);
            for k in 0..width {
                let w = self.relation_weights[r * width + k];
                let d = row[k] - anchors[k];
                value += self.lambda
                    * w
                    * match self.psi {
                        PsiKind::L2 => d * d,
                        PsiKind::L1 => d.abs(),
                    };
                let frozen = mask.is_some_and(|m| m.relation_coord_frozen_pub(r as u32, k));
                if !frozen {
                    row[k] = self.coord_prox(row[k], anchors[k], w, lr);
                }
            }
        }
        Some(Ok(value))
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// λ · Σ_e ||e - ẽ||² (+ the relation analog under neighbor-mean), where ẽ
/// is rebuilt from incident triples. Gradients flow into the reconstructed
/// row *and* into every contributor.
pub struct ReconstructionPenalty {
    triples: Vec<Triple>,
    mode: RecMode,
    lambda: f64,
}

impl ReconstructionPenalty {
    pub fn new(
        emb: &EmbeddingStore,
        triples: &[Triple],
        mode: RecMode,
        lambda: f64,
    ) -> Result<ReconstructionPenalty> {
        if lambda < 0.0 {
            return Err(Error::Config("rec lambda must be nonnegative".into()));
        }
        if emb.relation_width() != emb.dim() || emb.kind().relation_rows_per_relation() != 1 {
            return Err(Error::Config(format!(
                "reconstruction penalty requires relation rows in entity geometry, \
                 not available for {}",
                emb.kind().as_str()
            )));
        }
        Ok(ReconstructionPenalty {
            triples: triples.to_vec(),
            mode,
            lambda,
        })
    }
}

impl Penalty for ReconstructionPenalty {
    fn eval(&self, emb: &EmbeddingStore) -> Result<(f64, SparseGrad)> {
        let dim = emb.dim();
        // Pass 1: pooled contributions per entity (and per relation for
        // neighbor-mean).
        let mut ent_sum: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
        let mut rel_sum: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
        for t in &self.triples {
            let h = emb.entity(t.head);
            let tl = emb.entity(t.tail);
            let r = emb.relation_row(t.relation);
            match self.mode {
                RecMode::TranseStructural => {
                    let tail_entry = ent_sum.entry(t.tail).or_insert_with(|| (vec![0.0; dim], 0));
                    for k in 0..dim {
                        tail_entry.0[k] += h[k] + r[k];
                    }
                    tail_entry.1 += 1;
                    let head_entry = ent_sum.entry(t.head).or_insert_with(|| (vec![0.0; dim], 0));
                    for k in 0..dim {
                        head_entry.0[k] += tl[k] - r[k];
                    }
                    head_entry.1 += 1;
                }
                RecMode::NeighborMean => {
                    let tail_entry = ent_sum.entry(t.tail).or_insert_with(|| (vec![0.0; dim], 0));
                    for k in 0..dim {
                        tail_entry.0[k] += h[k];
                    }
                    tail_entry.1 += 1;
                    let head_entry = ent_sum.entry(t.head).or_insert_with(|| (vec![0.0; dim], 0));
                    for k in 0..dim {
                        head_entry.0[k] += tl[k];
                    }
                    head_entry.1 += 1;
                    let rel_entry = rel_sum
                        .entry(t.relation)
                        .or_insert_with(|| (vec![0.0; dim], 0));
                    for k in 0..dim {
                        rel_entry.0[k] += tl[k] - h[k];
                    }
                    rel_entry.1 += 1;
                }
            }
        }
        // Residuals u = row - mean(contributions).
        let residual = |sum: &(Vec<f64>, usize), row: &[f64]| -> Vec<f64> {
            let inv = 1.0 / sum.1 as f64;
            row.iter().zip(&sum.0).map(|(x, s)| x - s * inv).collect()
        };
        let mut value = 0.0;
        let mut grad = SparseGrad::default();
        let mut ent_residual: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
        for (&e, sum) in &ent_sum {
            let u = residual(sum, emb.entity(e));
            value += self.lambda * u.iter().map(|v| v * v).sum::<f64>();
            let row = grad.entity_row_mut(e, dim);
            for k in 0..dim {
                row[k] += 2.0 * self.lambda * u[k];
            }
            ent_residual.insert(e, (u, 1.0 / sum.1 as f64));
        }
        let mut rel_residual: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
        for (&r, sum) in &rel_sum {
            let u = residual(sum, emb.relation_row(r));
            value += self.lambda * u.iter().map(|v| v * v).sum::<f64>();
            let row = grad.relation_row_mut(r, dim);
            for k in 0..dim {
                row[k] += 2.0 * self.lambda * u[k];
            }
            rel_residual.insert(r, (u, 1.0 / sum.1 as f64));
        }
        // Pass 2: flow-through into contributors -2λ/deg · u per occurrence.
        for t in &self.triples {
            match self.mode {
                RecMode::TranseStructural => {
                    if let Some((u, inv_deg)) = ent_residual.get(&t.tail) {
                        let c = 2.0 * self.lambda * inv_deg;
                        let gh = grad.entity_row_mut(t.head, dim);
                        for k in 0..dim {
                            gh[k] -= c * u[k];
                        }
                        let gr = grad.relation_row_mut(t.relation, dim);
                        for k in 0..dim {
                            gr[k] -= c * u[k];
                        }
                    }
                    if let Some((u, inv_deg)) = ent_residual.get(&t.head) {
                        let c = 2.0 * self.lambda * inv_deg;
                        let gt = grad.entity_row_mut(t.tail, dim);
                        for k in 0..dim {
                            gt[k] -= c * u[k];
                        }
                        let gr = grad.relation_row_mut(t.relation, dim);
                        for k in 0..dim {
                            gr[k] += c * u[k];
                        }
                    }
                }
                RecMode::NeighborMean => {
                    if let Some((u, inv_deg)) = ent_residual.get(&t.tail) {
                        let c = 2.0 * self.lambda * inv_deg;
                        let gh = grad.entity_row_mut(t.head, dim);
                        for k in 0..dim {
                            gh[k] -= c * u[k];
                        }
                    }
                    if let Some((u, inv_deg)) = ent_residual.get(&t.head) {
                        let c = 2.0 * self.lambda * inv_deg;
                        let gt = grad.entity_row_mut(t.tail, dim);
                        for k in 0..dim {
                            gt[k] -= c * u[k];
                        }
                    }
                    if let Some((u, inv_deg)) = rel_residual.get(&t.relation) {
                        let c = 2.0 * self.lambda * inv_deg;
                        let gt = grad.entity_row_mut(t.tail, dim);
                        let mut gh_delta = vec![0.0; dim];
                        for k in 0..dim {
                            gt[k] -= c * u[k];
                            gh_delta[k] = c * u[k];
                        }
                        let gh = grad.entity_row_mut(t.head, dim);
                        for k in 0..dim {
                            gh[k] += gh_delta[k];
                        }
                    }
                }
            }
        }
        Ok((value, grad))
    }

    fn name(&self) -> &'static str {
        "rec"
    }
}

/// λ · Σ_old-rows (1 - cos(row_now, row_prev)); gradient only on row_now.
/// Rows whose current or previous norm vanishes contribute nothing and are
/// counted as degenerate.
pub struct AlignPenalty {
    prev: EmbeddingStore,
    lambda: f64,
    degenerate_rows: Cell<usize>,
}

const ALIGN_NORM_EPS: f64 = 1e-12;

impl AlignPenalty {
    pub fn new(prev: &EmbeddingStore, lambda: f64) -> Result<AlignPenalty> {
        if lambda < 0.0 {
            return Err(Error::Config("align lambda must be nonnegative".into()));
        }
        Ok(AlignPenalty {
            prev: prev.clone(),
            lambda,
            degenerate_rows: Cell::new(0),
        })
    }

    /// Degenerate rows seen by the most recent `eval`.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows.get()
    }

    fn cos_term(&self, now: &[f64], prev: &[f64], out: &mut [f64]) -> Option<f64> {
        let prev_padded = |k: usize| if k < prev.len() { prev[k] } else { 0.0 };
        let norm_now = now.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_prev = prev.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_now < ALIGN_NORM_EPS || norm_prev < ALIGN_NORM_EPS {
            return None;
        }
        let dot: f64 = (0..now.len()).map(|k| now[k] * prev_padded(k)).sum();
        let denom = norm_now * norm_prev;
        let cos = dot / denom;
        for k in 0..now.len() {
            // d(1 - cos)/d now_k
            out[k] += self.lambda
                * (-prev_padded(k) / denom + dot * now[k] / (norm_now * norm_now * denom));
        }
        Some(self.lambda * (1.0 - cos))
    }
}

impl Penalty for AlignPenalty {
    fn eval(&self, emb: &EmbeddingStore) -> Result<(f64, SparseGrad)> {
        let mut value = 0.0;
        let mut grad = SparseGrad::default();
        let mut degenerate = 0usize;
        let dim = emb.dim();
        for e in 0..self.prev.n_entities() as u32 {
            let row = grad.entity_row_mut(e, dim);
            match self.cos_term(emb.entity(e), self.prev.entity(e), row) {
                Some(v) => value += v,
                None => degenerate += 1,
            }
        }
        let width = emb.relation_width();
        for r in 0..self.prev.n_relation_rows() as u32 {
            let row = grad.relation_row_mut(r, width);
            match self.cos_term(emb.relation_row(r), self.prev.relation_row(r), row) {
                Some(v) => value += v,
                None => degenerate += 1,
            }
        }
        self.degenerate_rows.set(degenerate);
        Ok((value, grad))
    }

    fn name(&self) -> &'static str {
        "align"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::SnapshotSequence;
    use crate::models::{init_embeddings, InitScheme, ModelKind, Penalty, ScoreModel};
    use rand::SeedableRng;

    fn store(entities: &[&[f64]], relations: &[&[f64]]) -> EmbeddingStore {
        let dim = entities[0].len();
        let mut emb = init_embeddings(
            ModelKind::TransEL2,
            entities.len(),
            relations.len(),
            dim,
            InitScheme::Normal,
            0,
        );
        for (i, row) in entities.iter().enumerate() {
            emb.entity_mut(i as u32).copy_from_slice(row);
        }
        for (i, row) in relations.iter().enumerate() {
            emb.relation_row_mut(i as u32).copy_from_slice(row);
        }
        emb
    }

    #[test]
    fn reg_zero_when_unchanged() {
        let prev = store(&[&[1.0, 2.0], &[3.0, 4.0]], &[&[0.5, 0.5]]);
        let now = prev.clone();
        let reg = RegPenalty::new(&prev, &now, &RegWeights::Uniform, PsiKind::L2, 1.0).unwrap();
        let (value, grad) = reg.eval(&now).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad
            .entity
            .values()
            .chain(grad.relation.values())
            .all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn reg_single_drifted_row_hand_case() {
        // One row drifted by v: penalty ||v||², gradient 2v on that row.
        let prev = store(&[&[1.0, 2.0], &[3.0, 4.0]], &[&[0.5, 0.5]]);
        let v = [0.3, -0.4];
        let now = store(&[&[1.0 + v[0], 2.0 + v[1]], &[3.0, 4.0]], &[&[0.5, 0.5]]);
        let reg = RegPenalty::new(&prev, &now, &RegWeights::Uniform, PsiKind::L2, 1.0).unwrap();
        let (value, grad) = reg.eval(&now).unwrap();
        assert!((value - (v[0] * v[0] + v[1] * v[1])).abs() < 1e-15);
        let g0 = &grad.entity[&0];
        assert!((g0[0] - 2.0 * v[0]).abs() < 1e-15);
        assert!((g0[1] - 2.0 * v[1]).abs() < 1e-15);
    }

    #[test]
    fn rec_perfect_translation_is_free() {
        // b = a + p exactly: both reconstruction terms vanish.
        let a = [0.2, 0.7];
        let p = [1.0, -0.5];
        let b = [a[0] + p[0], a[1] + p[1]];
        let emb = store(&[&a, &b], &[&p]);
        let rec = ReconstructionPenalty::new(
            &emb,
            &[Triple::new(0, 0, 1)],
            RecMode::TranseStructural,
            1.0,
        )
        .unwrap();
        let (value, _) = rec.eval(&emb).unwrap();
        assert!(value.abs() < 1e-24, "value {value}");
    }

    #[test]
    fn rec_offset_translation_hand_case() {
        // b = a + p + v: tail term λ||v||² plus head term λ||v||².
        let a = [0.2, 0.7];
        let p = [1.0, -0.5];
        let v = [0.3, 0.1];
        let b = [a[0] + p[0] + v[0], a[1] + p[1] + v[1]];
        let lambda = 2.5;
        let emb = store(&[&a, &b], &[&p]);
        let rec = ReconstructionPenalty::new(
            &emb,
            &[Triple::new(0, 0, 1)],
            RecMode::TranseStructural,
            lambda,
        )
        .unwrap();
        let (value, _) = rec.eval(&emb).unwrap();
        let v_sq = v[0] * v[0] + v[1] * v[1];
        assert!((value - 2.0 * lambda * v_sq).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn align_cases() {
        let prev = store(&[&[1.0, 0.0], &[0.6, 0.8]], &[&[1.0, 1.0]]);
        // Identical rows: zero.
        let align = AlignPenalty::new(&prev, 1.0).unwrap();
        let (value, _) = align.eval(&prev.clone()).unwrap();
        assert!(value.abs() < 1e-15);
        // Scaled rows: cosine is scale-invariant.
        let mut scaled = prev.clone();
        for e in 0..2u32 {
            for v in scaled.entity_mut(e) {
                *v *= 2.0;
            }
        }
        let (value, _) = align.eval(&scaled).unwrap();
        assert!(value.abs() < 1e-12, "collinear value {value}");
        // Rotating one row by 90° contributes exactly λ.
        let lambda = 1.7;
        let align = AlignPenalty::new(&prev, lambda).unwrap();
        let mut rotated = prev.clone();
        rotated.entity_mut(0).copy_from_slice(&[0.0, 1.0]);
        let (value, _) = align.eval(&rotated).unwrap();
        assert!((value - lambda).abs() < 1e-12, "rotated value {value}");
    }

    #[test]
    fn align_degenerate_rows_counted_not_penalized() {
        let prev = store(&[&[1.0, 0.0], &[0.0, 0.0]], &[&[1.0, 1.0]]);
        let align = AlignPenalty::new(&prev, 1.0).unwrap();
        let (value, _) = align.eval(&prev.clone()).unwrap();
        assert_eq!(align.degenerate_rows(), 1);
        assert!(value.abs() < 1e-15);
    }

    #[test]
    fn fisher_untouched_rows_are_zero_and_runs_deterministic() {
        let seq = SnapshotSequence::from_named_triples(&[[
            vec![
                ("a".into(), "p".into(), "b".into()),
                ("b".into(), "p".into(), "c".into()),
            ],
            vec![],
            vec![("d".into(), "p".into(), "a".into())],
        ]])
        .unwrap();
        let filter = FilterIndex::build(&seq, 0).unwrap();
        let emb = init_embeddings(ModelKind::TransEL2, 4, 1, 4, InitScheme::Normal, 5);
        let mut model = ScoreModel::new(ModelKind::TransEL2, 4);
        model.negatives = 2;
        let train = &seq.snapshot(0).train;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f1 = ewc_fisher_diag(&model, &emb, train, train.len(), &filter, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f2 = ewc_fisher_diag(&model, &emb, train, train.len(), &filter, &mut rng).unwrap();
        assert_eq!(f1.entity, f2.entity);
        assert_eq!(f1.relation, f2.relation);
        assert!(f1.all_finite_nonnegative());
        // Negatives corrupt entities only, so a relation that never occurs
        // in the sampled triples keeps exactly zero Fisher mass.
        let seq2 = SnapshotSequence::from_named_triples(&[[
            vec![
                ("a".into(), "p".into(), "b".into()),
                ("b".into(), "q".into(), "c".into()),
            ],
            vec![],
            vec![],
        ]])
        .unwrap();
        let filter2 = FilterIndex::build(&seq2, 0).unwrap();
        let emb2 = init_embeddings(ModelKind::TransEL2, 3, 2, 4, InitScheme::Normal, 6);
        let p_only = vec![seq2.snapshot(0).train[0]];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f3 = ewc_fisher_diag(&model, &emb2, &p_only, 1, &filter2, &mut rng).unwrap();
        let q = seq2.vocab().relation_id("q").unwrap() as usize;
        assert!(f3.relation[q * 4..(q + 1) * 4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fisher_reflects_gradient_asymmetry() {
        // Two triples reuse entity 0; entity 3 appears once with a tiny
        // margin violation. Rows with consistently larger gradients get
        // larger Fisher mass.
        let seq = SnapshotSequence::from_named_triples(&[[
            vec![
                ("hub".into(), "p".into(), "x".into()),
                ("hub".into(), "p".into(), "y".into()),
                ("hub".into(), "p".into(), "z".into()),
                ("lone".into(), "p".into(), "x".into()),
            ],
            vec![],
            vec![],
        ]])
        .unwrap();
        let filter = FilterIndex::build(&seq, 0).unwrap();
        let emb = init_embeddings(ModelKind::TransEL2, 5, 1, 4, InitScheme::Normal, 7);
        let mut model = ScoreModel::new(ModelKind::TransEL2, 4);
        model.negatives = 2;
        model.margin = 5.0; // keep every hinge active
        let train = &seq.snapshot(0).train;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fisher = ewc_fisher_diag(&model, &emb, train, train.len(), &filter, &mut rng).unwrap();
        let hub = seq.vocab().entity_id("hub").unwrap() as usize;
        let lone = seq.vocab().entity_id("lone").unwrap() as usize;
        let mass = |e: usize| fisher.entity[e * 4..(e + 1) * 4].iter().sum::<f64>();
        assert!(
            mass(hub) > mass(lone),
            "hub {} vs lone {}",
            mass(hub),
            mass(lone)
        );
    }
}
