//! Minibatch loss/gradient and the per-snapshot epoch loop.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Triple};

use super::scoring::{score_gradients, score_unchecked};
use super::{
    apply_update, negative_sample, EmbeddingStore, OptimizerState, ScoreModel, SparseGrad,
    UpdateMask,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// max(0, γ - p(pos) + p(neg)), averaged over each positive's negatives.
    #[default]
    Margin,
    /// softplus(-p(pos)) + mean_j softplus(p(neg_j)).
    Softplus,
}

/// Extra loss term added to the base objective at every optimizer step.
pub trait Penalty {
    /// Penalty value and its exact analytic gradient.
    fn eval(&self, emb: &EmbeddingStore) -> Result<(f64, SparseGrad)>;

    fn name(&self) -> &'static str;

    /// Terms with a closed-form proximal operator apply themselves here
    /// (after the base-gradient step) instead of contributing an explicit
    /// gradient. Backward-Euler treatment keeps anchor penalties stable for
    /// arbitrarily large λ, where the explicit step would oscillate or
    /// diverge; to first order in lr·λ the two coincide. Returns the
    /// pre-step penalty value, or None when the term has no proximal form.
    fn prox_step(
        &self,
        emb: &mut EmbeddingStore,
        lr: f64,
        mask: Option<&UpdateMask>,
    ) -> Option<Result<f64>> {
        let _ = (emb, lr, mask);
        None
    }

    /// Whether `prox_step` handles this term.
    fn has_prox(&self) -> bool {
        false
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss and exact analytic partials over one minibatch.
///
/// `negatives` holds `k` corruptions per positive, flattened in order. The
/// returned loss is the *sum* over positives (each positive's hinge terms are
/// averaged over its negatives), so duplicating the batch doubles it.
pub fn grad_minibatch(
    model: &ScoreModel,
    emb: &EmbeddingStore,
    positives: &[Triple],
    negatives: &[Triple],
) -> Result<(f64, SparseGrad)> {
    if positives.is_empty() || !negatives.len().is_multiple_of(positives.len()) {
        return Err(Error::Contract(format!(
            "negatives ({}) must be a positive multiple of positives ({})",
            negatives.len(),
            positives.len()
        )));
    }
    let k = negatives.len() / positives.len();
    let inv_k = 1.0 / k as f64;
    let mut loss = 0.0;
    let mut grad = SparseGrad::default();
    let dim = emb.dim();
    let width = emb.relation_width();

    let accumulate = |grad: &mut SparseGrad, triple: Triple, weight: f64| -> Result<()> {
        if weight == 0.0 {
            return Ok(());
        }
        let partials = score_gradients(emb, triple.head, triple.relation, triple.tail)?;
        let head_row = grad.entity_row_mut(triple.head, dim);
        for (a, b) in head_row.iter_mut().zip(&partials.d_head) {
            *a += weight * b;
        }
        let tail_row = grad.entity_row_mut(triple.tail, dim);
        for (a, b) in tail_row.iter_mut().zip(&partials.d_tail) {
            *a += weight * b;
        }
        for (row, d_rel) in &partials.d_relation {
            let rel_row = grad.relation_row_mut(*row, width.min(d_rel.len()));
            for (a, b) in rel_row.iter_mut().zip(d_rel) {
                *a += weight * b;
            }
        }
        Ok(())
    };

    for (i, &pos) in positives.iter().enumerate() {
        let p_pos = score_unchecked(emb, pos.head, pos.relation, pos.tail);
        let negs = &negatives[i * k..(i + 1) * k];
        match model.loss {
            LossKind::Margin => {
                for &neg in negs {
                    let p_neg = score_unchecked(emb, neg.head, neg.relation, neg.tail);
                    let hinge = model.margin - p_pos + p_neg;
                    if hinge > 0.0 {
                        loss += inv_k * hinge;
                        // d loss / d p(pos) = -inv_k; d loss / d p(neg) = inv_k
                        accumulate(&mut grad, pos, -inv_k)?;
                        accumulate(&mut grad, neg, inv_k)?;
                    }
                }
            }
            LossKind::Softplus => {
                loss += softplus(-p_pos);
                accumulate(&mut grad, pos, -sigmoid(-p_pos))?;
                for &neg in negs {
                    let p_neg = score_unchecked(emb, neg.head, neg.relation, neg.tail);
                    loss += inv_k * softplus(p_neg);
                    accumulate(&mut grad, neg, inv_k * sigmoid(p_neg))?;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at positive ({}, {}, {})",
                pos.head, pos.relation, pos.tail
            )));
        }
    }
    if !grad.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs_per_snapshot: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Evaluate valid MRR every this many epochs (0 disables early stopping).
    #[serde(default)]
    pub eval_every: usize,
    /// Stop after this many non-improving evaluations.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    512
}
fn default_patience() -> usize {
    3
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_per_snapshot: default_epochs(),
            batch_size: default_batch(),
            eval_every: 0,
            patience: default_patience(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EpochStats {
    /// Mean base loss per positive.
    pub mean_loss: f64,
    /// Mean summed penalty value per batch.
    pub mean_penalty: f64,
    /// Distinct rows updated this epoch.
    pub rows_touched: usize,
}

/// Per-epoch knobs beyond the static [`TrainConfig`].
#[derive(Default)]
pub struct EpochOptions<'a> {
    pub penalties: &'a [&'a dyn Penalty],
    pub mask: Option<&'a UpdateMask>,
    /// Mix this many triples from the pool into every minibatch.
    pub replay: Option<(&'a [Triple], usize)>,
    /// Feed `triples` in the given order instead of shuffling (curriculum
    /// ordering).
    pub keep_order: bool,
}

/// One pass over `triples` in minibatches (shuffled unless `keep_order`).
/// Each step optimizes the base loss plus every penalty term; penalties see
/// the current store and contribute their own sparse gradients.
/// Deterministic given `rng`.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &ScoreModel,
    emb: &mut EmbeddingStore,
    triples: &[Triple],
    filter: &FilterIndex,
    cfg: &TrainConfig,
    opts: &EpochOptions<'_>,
    state: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if triples.is_empty() {
        return Err(Error::Contract(
            "train_epoch needs at least one triple".into(),
        ));
    }
    let mask = opts.mask;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    if !opts.keep_order {
        order.shuffle(rng);
    }
    let mut touched = std::collections::HashSet::new();
    let mut loss_sum = 0.0;
    let mut n_positives = 0usize;
    let mut penalty_sum = 0.0;
    let mut n_batches = 0usize;
    let vocab_size = emb.n_entities();
    for chunk in order.chunks(cfg.batch_size.max(1)) {
        let mut positives: Vec<Triple> = chunk.iter().map(|&i| triples[i]).collect();
        if let Some((pool, m)) = opts.replay {
            let take = m.min(pool.len());
            if take > 0 {
                let picks = rand::seq::index::sample(rng, pool.len(), take);
                positives.extend(picks.iter().map(|i| pool[i]));
            }
        }
        n_positives += positives.len();
        let mut negatives = Vec::with_capacity(positives.len() * model.negatives);
        for &pos in &positives {
            negatives.extend(negative_sample(
                pos,
                vocab_size,
                model.negatives,
                filter,
                rng,
            )?);
        }
        let (loss, mut grad) = grad_minibatch(model, emb, &positives, &negatives)?;
        loss_sum += loss;
        for penalty in opts.penalties.iter().filter(|p| !p.has_prox()) {
            let (value, pgrad) = penalty.eval(emb)?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite {} penalty",
                    penalty.name()
                )));
            }
            penalty_sum += value;
            grad.add_scaled(&pgrad, 1.0);
        }
        for &e in grad.entity.keys() {
            touched.insert((0u8, e));
        }
        for &r in grad.relation.keys() {
            touched.insert((1u8, r));
        }
        apply_update(emb, &grad, state, model.learning_rate, mask);
        for penalty in opts.penalties.iter().filter(|p| p.has_prox()) {
            let value = penalty
                .prox_step(emb, model.learning_rate, mask)
                .expect("has_prox implies a prox step")?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite {} penalty",
                    penalty.name()
                )));
            }
            penalty_sum += value;
        }
        n_batches += 1;
    }
    if model.renormalize && emb.kind().is_translational() {
        for e in 0..emb.n_entities() as u32 {
            let row_frozen = mask.is_some_and(|m| {
                m.entity_row_frozen(e)
                    || m.dim_scope_entity_rows
                        .get(e as usize)
                        .copied()
                        .unwrap_or(false)
            });
            if !row_frozen {
                super::l2_normalize(emb.entity_mut(e));
            }
        }
    }
    Ok(EpochStats {
        mean_loss: loss_sum / n_positives.max(1) as f64,
        mean_penalty: penalty_sum / n_batches.max(1) as f64,
        rows_touched: touched.len(),
    })
}
