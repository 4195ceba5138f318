//! Snapshot-by-snapshot training with pluggable forgetting mitigation.

mod ordering;
mod penalties;
mod replay;

pub use ordering::{order_triples, order_triples_layered};
pub use penalties::{
    ewc_fisher_diag, AlignPenalty, FisherWeights, ReconstructionPenalty, RegPenalty, RegWeights,
};
pub use replay::ReservoirBuffer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_testset, PolicyKind};
use crate::kg::{FilterIndex, SnapshotSequence, Triple};
use crate::models::{
    expand_store, init_embeddings, train_epoch, transfer_init_new_entities, EmbeddingStore,
    EpochOptions, EpochStats, InitScheme, OptimizerState, Penalty, Projection, ScoreModel,
    TrainConfig, UpdateMask,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseStrategy {
    /// Continue from the previous checkpoint on each new delta.
    #[default]
    Finetune,
    /// Train from scratch on the cumulative training set at every snapshot.
    Retrain,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezePolicy {
    #[default]
    Never,
    /// Old rows never move again.
    Always,
    /// Old rows are frozen for the first k epochs of each snapshot, then
    /// released for joint refinement.
    FirstKEpochs(usize),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub buffer_size: usize,
    /// Replay triples mixed into every minibatch.
    pub sample_per_batch: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    /// Dimensions of old rows that never change.
    pub frozen_dims: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiKind {
    L2,
    L1,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecMode {
    /// ẽ averages h + r over incoming and t - r over outgoing triples.
    TranseStructural,
    /// ẽ averages neighbor entity rows; r̃ averages t - h.
    NeighborMean,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegWeighting {
    Uniform,
    /// w(id) = number of old + new training triples containing the id.
    TripleFrequency,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltySpec {
    Reg {
        weighting: RegWeighting,
        psi: PsiKind,
        lambda: f64,
    },
    Rec {
        mode: RecMode,
        lambda: f64,
    },
    Align {
        lambda: f64,
    },
    /// Regularization with diagonal-Fisher weights recomputed at each
    /// snapshot boundary from the previous snapshot's training triples.
    Ewc {
        lambda: f64,
        fisher_samples: usize,
    },
}

impl PenaltySpec {
    fn lambda(&self) -> f64 {
        match self {
            PenaltySpec::Reg { lambda, .. }
            | PenaltySpec::Rec { lambda, .. }
            | PenaltySpec::Align { lambda }
            | PenaltySpec::Ewc { lambda, .. } => *lambda,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewEntityInit {
    #[default]
    Random,
    /// Place new entities at the mean of their known neighbors composed
    /// through the relation offset.
    NeighborMean,
}

/// Which mitigation techniques run on top of the base strategy.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default)]
    pub base: BaseStrategy,
    #[serde(default)]
    pub replay: Option<ReplayConfig>,
    /// Feed each delta in BFS-proximity order instead of shuffling.
    #[serde(default)]
    pub ordering: bool,
    #[serde(default)]
    pub freeze_old: FreezePolicy,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub penalties: Vec<PenaltySpec>,
    /// Per-snapshot embedding dimension (zero-pad expansion); must be
    /// non-decreasing with one entry per snapshot.
    #[serde(default)]
    pub dim_schedule: Option<Vec<usize>>,
    #[serde(default)]
    pub new_entity_init: NewEntityInit,
}

impl StrategyConfig {
    pub fn finetune() -> Self {
        StrategyConfig::default()
    }

    pub fn retrain() -> Self {
        StrategyConfig {
            base: BaseStrategy::Retrain,
            ..StrategyConfig::default()
        }
    }

    pub fn validate(&self, n_snapshots: usize) -> Result<()> {
        for p in &self.penalties {
            if p.lambda() < 0.0 {
                return Err(Error::Config("penalty lambda must be nonnegative".into()));
            }
        }
        if self.base == BaseStrategy::Retrain {
            let plain = !self.ordering
                && self.replay.is_none()
                && self.freeze_old == FreezePolicy::Never
                && self.mask.is_none()
                && self.penalties.is_empty()
                && self.dim_schedule.is_none()
                && self.new_entity_init == NewEntityInit::Random;
            if !plain {
                return Err(Error::Config(
                    "retrain excludes every other strategy option".into(),
                ));
            }
        }
        if let Some(schedule) = &self.dim_schedule {
            if schedule.len() != n_snapshots {
                return Err(Error::Config(format!(
                    "dim_schedule has {} entries for {} snapshots",
                    schedule.len(),
                    n_snapshots
                )));
            }
            if schedule.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config("dim_schedule must be non-decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Per-snapshot training record.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SnapshotStats {
    pub epochs: Vec<EpochStats>,
    /// New entities of this snapshot that no training triple ever touched.
    pub untrained_new_entities: usize,
    /// Degenerate (near-zero-norm) rows skipped by the alignment penalty.
    pub align_degenerate_rows: usize,
    /// Epochs actually run (early stopping may cut the budget short).
    pub epochs_run: usize,
}

/// Everything a continual run leaves behind.
pub struct RunArtifacts {
    pub model: ScoreModel,
    /// Post-training store for each snapshot.
    pub checkpoints: Vec<EmbeddingStore>,
    pub stats: Vec<SnapshotStats>,
    pub replay_buffer: Option<ReservoirBuffer>,
}

impl RunArtifacts {
    pub fn checkpoint(&self, snapshot: usize) -> Result<&EmbeddingStore> {
        self.checkpoints
            .get(snapshot)
            .ok_or_else(|| Error::MissingArtifact(format!("no checkpoint for snapshot {snapshot}")))
    }
}

/// Derives independent per-snapshot seeds so retraining at snapshot i sees
/// the same stream regardless of what happened before.
fn snapshot_seed(master: u64, snapshot: usize, purpose: u64) -> u64 {
    // splitmix64 over (master, snapshot, purpose)
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(snapshot as u64 + 1))
        .wrapping_add(purpose.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Trains across the whole sequence under the given strategy.
///
/// Snapshot 0 trains from scratch on ΔT_0. Later snapshots expand the store
/// for the new vocabulary, optionally reorder the delta, and train on it
/// (plus replay samples) under the configured penalties, masks and freezes.
/// Retraining instead rebuilds from scratch on the cumulative training set
/// at every snapshot.
pub fn run_continual(
    seq: &SnapshotSequence,
    model: &ScoreModel,
    strat: &StrategyConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<RunArtifacts> {
    run_continual_observed(seq, model, strat, train_cfg, seed, &mut |_, _| Ok(()))
}

/// [`run_continual`] with a per-snapshot observer, called right after each
/// checkpoint is finished. Lets callers persist checkpoints as they
/// complete, so a numeric failure later in the run leaves everything
/// trained so far on disk.
pub fn run_continual_observed(
    seq: &SnapshotSequence,
    model: &ScoreModel,
    strat: &StrategyConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(usize, &EmbeddingStore) -> Result<()>,
) -> Result<RunArtifacts> {
    model.validate()?;
    strat.validate(seq.n_snapshots())?;
    if let Some(schedule) = &strat.dim_schedule {
        for d in schedule {
            if model.kind.requires_even_dim() && d % 2 != 0 {
                return Err(Error::Config("dim_schedule entries must be even".into()));
            }
        }
    }

    let n = seq.n_snapshots();
    let mut checkpoints: Vec<EmbeddingStore> = Vec::with_capacity(n);
    let mut stats: Vec<SnapshotStats> = Vec::with_capacity(n);
    let mut buffer = strat.replay.map(|r| ReservoirBuffer::new(r.buffer_size));

    for i in 0..n {
        let dim_i = strat
            .dim_schedule
            .as_ref()
            .map(|s| s[i])
            .unwrap_or(model.dim);
        let filter = FilterIndex::build(seq, i)?;
        let mut rng = ChaCha8Rng::seed_from_u64(snapshot_seed(seed, i, 1));

        let (mut emb, triples, snapshot_penalties) = if strat.base == BaseStrategy::Retrain {
            // From-scratch on T_i; canonical triple order makes the result
            // independent of how T_i was partitioned into deltas.
            let mut triples = seq.cumulative_train(i);
            triples.sort_unstable();
            let emb = init_embeddings(
                model.kind,
                seq.entity_count(i),
                seq.relation_count(i),
                dim_i,
                InitScheme::UniformXavier,
                snapshot_seed(seed, i, 0),
            );
            (emb, triples, Vec::new())
        } else if i == 0 {
            let emb = init_embeddings(
                model.kind,
                seq.entity_count(0),
                seq.relation_count(0),
                dim_i,
                InitScheme::UniformXavier,
                snapshot_seed(seed, 0, 0),
            );
            (emb, seq.snapshot(0).train.clone(), Vec::new())
        } else {
            let prev = &checkpoints[i - 1];
            let projection = if dim_i > prev.dim() {
                Projection::ZeroPadTo(dim_i)
            } else {
                Projection::None
            };
            let mut emb = expand_store(
                prev,
                seq.entity_count(i),
                seq.relation_count(i),
                InitScheme::UniformXavier,
                snapshot_seed(seed, i, 0),
                projection,
            )?;
            if strat.new_entity_init == NewEntityInit::NeighborMean {
                transfer_init_new_entities(
                    &mut emb,
                    &seq.snapshot(i).train,
                    seq.entity_count(i - 1) as u32,
                )?;
            }
            let delta = if strat.ordering {
                order_triples(&seq.snapshot(i).train, seq.entity_count(i - 1) as u32)
            } else {
                seq.snapshot(i).train.clone()
            };
            let penalties = build_penalties(strat, model, seq, i, prev, &emb, seed)?;
            (emb, delta, penalties)
        };

        if triples.is_empty() {
            return Err(Error::Contract(format!(
                "snapshot {i} has no training triples"
            )));
        }

        let old_entities = if i == 0 || strat.base == BaseStrategy::Retrain {
            0
        } else {
            seq.entity_count(i - 1)
        } as u32;
        let old_rel_rows = if i == 0 || strat.base == BaseStrategy::Retrain {
            0
        } else {
            (seq.relation_count(i - 1) * model.kind.relation_rows_per_relation()) as u32
        };

        let dim_mask = strat.mask.as_ref().map(|spec| {
            let mut dims = vec![false; emb.dim()];
            for &d in &spec.frozen_dims {
                if d < dims.len() {
                    dims[d] = true;
                }
            }
            UpdateMask::freeze_dims_below(&emb, dims, old_entities, old_rel_rows)
        });
        let freeze_mask = UpdateMask::freeze_rows_below(&emb, old_entities, old_rel_rows);

        let replay_pool: Option<Vec<Triple>> = match (&buffer, strat.replay) {
            (Some(buf), Some(cfg)) if !buf.is_empty() => {
                let _ = cfg;
                Some(buf.as_slice().to_vec())
            }
            _ => None,
        };

        let mut state = OptimizerState::new(model.optimizer, &emb);
        let mut snap_stats = SnapshotStats::default();
        let penalties_dyn: Vec<&dyn Penalty> =
            snapshot_penalties.iter().map(|p| p.as_penalty()).collect();
        let mut best_valid = f64::NEG_INFINITY;
        let mut bad_evals = 0usize;
        for epoch in 0..train_cfg.epochs_per_snapshot {
            let freeze_now = match strat.freeze_old {
                FreezePolicy::Never => false,
                FreezePolicy::Always => true,
                FreezePolicy::FirstKEpochs(k) => epoch < k,
            };
            let mask = merge_masks(freeze_now.then_some(&freeze_mask), dim_mask.as_ref(), &emb);
            let opts = EpochOptions {
                penalties: &penalties_dyn,
                mask: mask.as_ref(),
                replay: replay_pool.as_ref().map(|pool| {
                    (
                        pool.as_slice(),
                        strat.replay.map(|r| r.sample_per_batch).unwrap_or(0),
                    )
                }),
                keep_order: strat.ordering,
            };
            let epoch_stats = train_epoch(
                model, &mut emb, &triples, &filter, train_cfg, &opts, &mut state, &mut rng,
            )?;
            snap_stats.epochs.push(epoch_stats);
            snap_stats.epochs_run += 1;

            if train_cfg.eval_every > 0
                && (epoch + 1) % train_cfg.eval_every == 0
                && !seq.snapshot(i).valid.is_empty()
            {
                let metrics = evaluate_testset(
                    &emb,
                    &seq.snapshot(i).valid,
                    i,
                    seq,
                    i,
                    PolicyKind::Current,
                    &filter,
                )?;
                if metrics.mrr > best_valid + 1e-9 {
                    best_valid = metrics.mrr;
                    bad_evals = 0;
                } else {
                    bad_evals += 1;
                    if bad_evals >= train_cfg.patience {
                        break;
                    }
                }
            }
        }

        for p in &snapshot_penalties {
            if let BuiltPenalty::Align(a) = p {
                snap_stats.align_degenerate_rows = a.degenerate_rows();
            }
        }
        if i > 0 && strat.base == BaseStrategy::Finetune {
            let delta = seq.deltas(i)?;
            let mut touched = vec![false; delta.new_entities.len()];
            for t in &seq.snapshot(i).train {
                for e in [t.head, t.tail] {
                    if delta.new_entities.contains(&e) {
                        touched[(e - delta.new_entities.start) as usize] = true;
                    }
                }
            }
            snap_stats.untrained_new_entities = touched.iter().filter(|&&t| !t).count();
        }

        if let Some(buf) = &mut buffer {
            let mut brng = ChaCha8Rng::seed_from_u64(snapshot_seed(seed, i, 2));
            buf.update(&seq.snapshot(i).train, &mut brng);
        }
        observer(i, &emb)?;
        checkpoints.push(emb);
        stats.push(snap_stats);
    }

    Ok(RunArtifacts {
        model: model.clone(),
        checkpoints,
        stats,
        replay_buffer: buffer,
    })
}

/// A freeze mask and a dim mask can both be active in one epoch.
fn merge_masks(
    freeze: Option<&UpdateMask>,
    dims: Option<&UpdateMask>,
    emb: &EmbeddingStore,
) -> Option<UpdateMask> {
    match (freeze, dims) {
        (None, None) => None,
        (Some(f), None) => Some(f.clone()),
        (None, Some(d)) => Some(d.clone()),
        (Some(f), Some(d)) => {
            let _ = emb;
            let mut merged = d.clone();
            merged.frozen_entity_rows = f.frozen_entity_rows.clone();
            merged.frozen_relation_rows = f.frozen_relation_rows.clone();
            Some(merged)
        }
    }
}

/// Owner of the per-snapshot penalty instances.
enum BuiltPenalty {
    Reg(RegPenalty),
    Rec(ReconstructionPenalty),
    Align(AlignPenalty),
}

impl BuiltPenalty {
    fn as_penalty(&self) -> &dyn Penalty {
        match self {
            BuiltPenalty::Reg(p) => p,
            BuiltPenalty::Rec(p) => p,
            BuiltPenalty::Align(p) => p,
        }
    }
}

fn build_penalties(
    strat: &StrategyConfig,
    model: &ScoreModel,
    seq: &SnapshotSequence,
    snapshot: usize,
    prev_ckpt: &EmbeddingStore,
    now: &EmbeddingStore,
    seed: u64,
) -> Result<Vec<BuiltPenalty>> {
    let mut out = Vec::new();
    for spec in &strat.penalties {
        match spec {
            PenaltySpec::Reg {
                weighting,
                psi,
                lambda,
            } => {
                let weights = match weighting {
                    RegWeighting::Uniform => RegWeights::Uniform,
                    RegWeighting::TripleFrequency => RegWeights::triple_frequency(
                        seq.entity_count(snapshot),
                        seq.relation_count(snapshot),
                        seq.snapshots()[..=snapshot]
                            .iter()
                            .flat_map(|s| s.train.iter().copied()),
                    ),
                };
                out.push(BuiltPenalty::Reg(RegPenalty::new(
                    prev_ckpt, now, &weights, *psi, *lambda,
                )?));
            }
            PenaltySpec::Ewc {
                lambda,
                fisher_samples,
            } => {
                // Fisher at the anchor over the data that shaped it: the
                // previous snapshot's training triples.
                let prev_filter = FilterIndex::build(seq, snapshot - 1)?;
                let mut frng = ChaCha8Rng::seed_from_u64(snapshot_seed(seed, snapshot, 3));
                let fisher = ewc_fisher_diag(
                    model,
                    prev_ckpt,
                    &seq.snapshot(snapshot - 1).train,
                    *fisher_samples,
                    &prev_filter,
                    &mut frng,
                )?;
                out.push(BuiltPenalty::Reg(RegPenalty::new(
                    prev_ckpt,
                    now,
                    &RegWeights::Fisher(fisher),
                    PsiKind::L2,
                    *lambda,
                )?));
            }
            PenaltySpec::Rec { mode, lambda } => {
                out.push(BuiltPenalty::Rec(ReconstructionPenalty::new(
                    now,
                    &seq.snapshot(snapshot).train,
                    *mode,
                    *lambda,
                )?));
            }
            PenaltySpec::Align { lambda } => {
                out.push(BuiltPenalty::Align(AlignPenalty::new(prev_ckpt, *lambda)?));
            }
        }
    }
    Ok(out)
}
