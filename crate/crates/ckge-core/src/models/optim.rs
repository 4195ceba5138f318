//! Sparse row updates: SGD and Adagrad, with row- and dimension-level masks.

use serde::{Deserialize, Serialize};

use super::{EmbeddingStore, ModelKind, SparseGrad};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adagrad,
}

const ADAGRAD_EPS: f64 = 1e-10;

/// Per-coordinate Adagrad accumulators (unused for SGD).
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    entity_accum: Vec<f64>,
    relation_accum: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, emb: &EmbeddingStore) -> Self {
        let (e, r) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Adagrad => (
                emb.n_entities() * emb.dim(),
                emb.n_relation_rows() * emb.relation_width(),
            ),
        };
        OptimizerState {
            kind,
            entity_accum: vec![0.0; e],
            relation_accum: vec![0.0; r],
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }
}

/// Frozen coordinates. A coordinate is frozen when its whole row is frozen,
/// or when the row is dim-scoped and that dimension is in the frozen set.
/// Frozen coordinates are never written (bit-identical before/after),
/// including their optimizer state.
#[derive(Clone, Debug, Default)]
pub struct UpdateMask {
    pub frozen_entity_rows: Vec<bool>,
    pub frozen_relation_rows: Vec<bool>,
    /// Frozen dimension flags (entity dim domain; relation rows respect the
    /// prefix that fits their width).
    pub frozen_dims: Vec<bool>,
    /// Rows the dim-level freeze applies to.
    pub dim_scope_entity_rows: Vec<bool>,
    pub dim_scope_relation_rows: Vec<bool>,
}

impl UpdateMask {
    /// Freezes every entity row below `entity_cutoff` and every relation row
    /// below `relation_row_cutoff` — the old-parameter freeze.
    pub fn freeze_rows_below(
        emb: &EmbeddingStore,
        entity_cutoff: u32,
        relation_row_cutoff: u32,
    ) -> Self {
        UpdateMask {
            frozen_entity_rows: (0..emb.n_entities() as u32)
                .map(|e| e < entity_cutoff)
                .collect(),
            frozen_relation_rows: (0..emb.n_relation_rows() as u32)
                .map(|r| r < relation_row_cutoff)
                .collect(),
            ..UpdateMask::default()
        }
    }

    /// Freezes everything.
    pub fn freeze_all(emb: &EmbeddingStore) -> Self {
        UpdateMask {
            frozen_entity_rows: vec![true; emb.n_entities()],
            frozen_relation_rows: vec![true; emb.n_relation_rows()],
            ..UpdateMask::default()
        }
    }

    /// Dim-level freeze over the rows below the cutoffs.
    pub fn freeze_dims_below(
        emb: &EmbeddingStore,
        frozen_dims: Vec<bool>,
        entity_cutoff: u32,
        relation_row_cutoff: u32,
    ) -> Self {
        UpdateMask {
            frozen_dims,
            dim_scope_entity_rows: (0..emb.n_entities() as u32)
                .map(|e| e < entity_cutoff)
                .collect(),
            dim_scope_relation_rows: (0..emb.n_relation_rows() as u32)
                .map(|r| r < relation_row_cutoff)
                .collect(),
            ..UpdateMask::default()
        }
    }

    pub fn entity_row_frozen(&self, row: u32) -> bool {
        self.frozen_entity_rows
            .get(row as usize)
            .copied()
            .unwrap_or(false)
    }

    pub fn relation_row_frozen(&self, row: u32) -> bool {
        self.frozen_relation_rows
            .get(row as usize)
            .copied()
            .unwrap_or(false)
    }

    /// Coordinate-level checks for penalty proximal steps.
    pub fn entity_coord_frozen_pub(&self, row: u32, dim: usize) -> bool {
        self.entity_coord_frozen(row, dim)
    }

    pub fn relation_coord_frozen_pub(&self, row: u32, dim: usize) -> bool {
        self.relation_coord_frozen(row, dim)
    }

    fn entity_coord_frozen(&self, row: u32, dim: usize) -> bool {
        self.entity_row_frozen(row)
            || (self
                .dim_scope_entity_rows
                .get(row as usize)
                .copied()
                .unwrap_or(false)
                && self.frozen_dims.get(dim).copied().unwrap_or(false))
    }

    fn relation_coord_frozen(&self, row: u32, dim: usize) -> bool {
        self.relation_row_frozen(row)
            || (self
                .dim_scope_relation_rows
                .get(row as usize)
                .copied()
                .unwrap_or(false)
                && self.frozen_dims.get(dim).copied().unwrap_or(false))
    }
}

/// One optimizer step over the touched rows. Masked coordinates keep their
/// exact bits. RotatE relation rows are wrapped back into [-π, π) after the
/// step (a no-op for already-in-range phases).
pub fn apply_update(
    emb: &mut EmbeddingStore,
    grad: &SparseGrad,
    state: &mut OptimizerState,
    lr: f64,
    mask: Option<&UpdateMask>,
) {
    let dim = emb.dim();
    let width = emb.relation_width();
    let wrap_phases = emb.kind() == ModelKind::RotatE;
    for (&id, g) in &grad.entity {
        if mask.is_some_and(|m| m.entity_row_frozen(id)) {
            continue;
        }
        let base = id as usize * dim;
        for k in 0..dim {
            if mask.is_some_and(|m| m.entity_coord_frozen(id, k)) {
                continue;
            }
            step_coord(
                &mut emb.entities[base + k],
                g[k],
                state.kind,
                &mut state.entity_accum,
                base + k,
                lr,
            );
        }
    }
    for (&row, g) in &grad.relation {
        if mask.is_some_and(|m| m.relation_row_frozen(row)) {
            continue;
        }
        let base = row as usize * width;
        let mut any = false;
        for k in 0..width {
            if mask.is_some_and(|m| m.relation_coord_frozen(row, k)) {
                continue;
            }
            step_coord(
                &mut emb.relations[base + k],
                g[k],
                state.kind,
                &mut state.relation_accum,
                base + k,
                lr,
            );
            any = true;
        }
        if wrap_phases && any {
            for k in 0..width {
                if mask.is_some_and(|m| m.relation_coord_frozen(row, k)) {
                    continue;
                }
                let v = &mut emb.relations[base + k];
                if !(-std::f64::consts::PI..std::f64::consts::PI).contains(v) {
                    let two_pi = 2.0 * std::f64::consts::PI;
                    *v -= two_pi * ((*v + std::f64::consts::PI) / two_pi).floor();
                }
            }
        }
    }
}

fn step_coord(
    value: &mut f64,
    g: f64,
    kind: OptimizerKind,
    accum: &mut [f64],
    idx: usize,
    lr: f64,
) {
    match kind {
        OptimizerKind::Sgd => *value -= lr * g,
        OptimizerKind::Adagrad => {
            accum[idx] += g * g;
            *value -= lr * g / (accum[idx].sqrt() + ADAGRAD_EPS);
        }
    }
}
