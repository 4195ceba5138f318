//! Embedding storage, scoring models, and the base training loop.

mod checkpoint;
mod optim;
mod sampling;
mod scoring;
mod train;

pub use checkpoint::{
    read_checkpoint, read_manifest, write_checkpoint, write_manifest, CheckpointManifest,
};
pub use optim::{apply_update, OptimizerKind, OptimizerState, UpdateMask};
pub use sampling::negative_sample;
pub(crate) use scoring::score_unchecked;
pub use scoring::{score, score_all_heads, score_all_tails, score_gradients};
pub use train::{
    grad_minibatch, train_epoch, EpochOptions, EpochStats, LossKind, Penalty, TrainConfig,
};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scoring function family. All kinds score higher-is-more-plausible.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "transe-l1")]
    TransEL1,
    #[serde(rename = "transe-l2")]
    TransEL2,
    #[serde(rename = "transh")]
    TransH,
    #[serde(rename = "distmult")]
    DistMult,
    #[serde(rename = "complex")]
    ComplEx,
    #[serde(rename = "rotate")]
    RotatE,
}

pub const ALL_MODEL_KINDS: [ModelKind; 6] = [
    ModelKind::TransEL1,
    ModelKind::TransEL2,
    ModelKind::TransH,
    ModelKind::DistMult,
    ModelKind::ComplEx,
    ModelKind::RotatE,
];

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::TransEL1 => "transe-l1",
            ModelKind::TransEL2 => "transe-l2",
            ModelKind::TransH => "transh",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE => "rotate",
        }
    }

    /// TransH keeps two rows per relation: the hyperplane normal and the
    /// translation vector.
    pub fn relation_rows_per_relation(&self) -> usize {
        match self {
            ModelKind::TransH => 2,
            _ => 1,
        }
    }

    /// RotatE relation rows hold one phase per complex dimension.
    pub fn relation_width(&self, dim: usize) -> usize {
        match self {
            ModelKind::RotatE => dim / 2,
            _ => dim,
        }
    }

    /// Complex-valued kinds store (real, imaginary) halves in each entity row.
    pub fn requires_even_dim(&self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::RotatE)
    }

    pub fn is_translational(&self) -> bool {
        matches!(
            self,
            ModelKind::TransEL1 | ModelKind::TransEL2 | ModelKind::TransH
        )
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_MODEL_KINDS
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Scoring model plus its training hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub kind: ModelKind,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    /// Margin γ for the ranking loss.
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    /// Negatives per positive (k).
    #[serde(default = "defaults::negatives")]
    pub negatives: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub loss: LossKind,
    /// Re-normalize entity rows to unit L2 after each epoch (TransE family).
    #[serde(default)]
    pub renormalize: bool,
}

mod defaults {
    pub fn dim() -> usize {
        200
    }
    pub fn margin() -> f64 {
        2.0
    }
    pub fn negatives() -> usize {
        10
    }
    pub fn learning_rate() -> f64 {
        0.05
    }
}

impl ScoreModel {
    pub fn new(kind: ModelKind, dim: usize) -> Self {
        ScoreModel {
            kind,
            dim,
            margin: defaults::margin(),
            negatives: defaults::negatives(),
            learning_rate: defaults::learning_rate(),
            optimizer: OptimizerKind::Sgd,
            loss: LossKind::Margin,
            renormalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.kind.requires_even_dim() && !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{} requires an even dimension, got {}",
                self.kind.as_str(),
                self.dim
            )));
        }
        if self.loss == LossKind::Margin && self.margin <= 0.0 {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("negatives must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    UniformXavier,
    Normal,
}

/// Dense entity and relation matrices for one model kind.
///
/// Entity rows are `dim` wide. Relation storage is model-dependent: TransH
/// keeps two rows per relation and RotatE rows are `dim/2` phases in
/// [-π, π); everything else is one `dim`-wide row per relation.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    kind: ModelKind,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingStore {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn relation_width(&self) -> usize {
        self.kind.relation_width(self.dim)
    }

    pub fn n_relation_rows(&self) -> usize {
        self.n_relations * self.kind.relation_rows_per_relation()
    }

    pub fn entity(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.entities[id as usize * d..(id as usize + 1) * d]
    }

    pub fn entity_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.entities[id as usize * d..(id as usize + 1) * d]
    }

    /// Raw relation row (TransH: row 2r is the normal, 2r+1 the translation).
    pub fn relation_row(&self, row: u32) -> &[f64] {
        let w = self.relation_width();
        &self.relations[row as usize * w..(row as usize + 1) * w]
    }

    pub fn relation_row_mut(&mut self, row: u32) -> &mut [f64] {
        let w = self.relation_width();
        &mut self.relations[row as usize * w..(row as usize + 1) * w]
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relations
    }

    pub fn all_finite(&self) -> bool {
        self.entities
            .iter()
            .chain(self.relations.iter())
            .all(|v| v.is_finite())
    }

    fn from_raw(
        kind: ModelKind,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(entities.len(), n_entities * dim);
        debug_assert_eq!(
            relations.len(),
            n_relations * kind.relation_rows_per_relation() * kind.relation_width(dim)
        );
        EmbeddingStore {
            kind,
            dim,
            n_entities,
            n_relations,
            entities,
            relations,
        }
    }
}

fn l2_normalize(row: &mut [f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for v in row {
            *v /= norm;
        }
    }
}

fn fill_rows(
    out: &mut Vec<f64>,
    rows: usize,
    width: usize,
    scheme: InitScheme,
    rng: &mut ChaCha8Rng,
    width_for_scale: usize,
) {
    match scheme {
        InitScheme::UniformXavier => {
            let bound = (6.0 / width_for_scale as f64).sqrt();
            for _ in 0..rows * width {
                out.push(rng.gen::<f64>() * 2.0 * bound - bound);
            }
        }
        InitScheme::Normal => {
            let std = (1.0 / width_for_scale as f64).sqrt();
            // Box-Muller keeps us off extra dependencies and is fully
            // deterministic given the stream.
            for _ in 0..rows * width {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                out.push(z * std);
            }
        }
    }
}

fn fill_phases(out: &mut Vec<f64>, rows: usize, width: usize, rng: &mut ChaCha8Rng) {
    use std::f64::consts::PI;
    for _ in 0..rows * width {
        out.push(rng.gen::<f64>() * 2.0 * PI - PI);
    }
}

/// Freshly initialized store. Deterministic given the seed. TransE-family
/// entity rows are L2-normalized after init; RotatE relation rows are drawn
/// as phases in [-π, π).
pub fn init_embeddings(
    kind: ModelKind,
    n_entities: usize,
    n_relations: usize,
    dim: usize,
    scheme: InitScheme,
    seed: u64,
) -> EmbeddingStore {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = Vec::with_capacity(n_entities * dim);
    fill_rows(&mut entities, n_entities, dim, scheme, &mut rng, dim);
    let rel_rows = n_relations * kind.relation_rows_per_relation();
    let rel_width = kind.relation_width(dim);
    let mut relations = Vec::with_capacity(rel_rows * rel_width);
    if kind == ModelKind::RotatE {
        fill_phases(&mut relations, rel_rows, rel_width, &mut rng);
    } else {
        fill_rows(&mut relations, rel_rows, rel_width, scheme, &mut rng, dim);
    }
    let mut store =
        EmbeddingStore::from_raw(kind, dim, n_entities, n_relations, entities, relations);
    if kind.is_translational() {
        for e in 0..n_entities as u32 {
            l2_normalize(store.entity_mut(e));
        }
    }
    store
}

/// How [`expand_store`] treats the embedding dimension.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Projection {
    /// Keep `dim`; old rows are preserved bit-exactly.
    None,
    /// Grow to the given dimension, zero-padding old rows. Padded entries
    /// contribute nothing to any score, so pre-existing scores survive.
    ZeroPadTo(usize),
}

/// Grows the store to `new_n_entities`/`new_n_relations`, initializing new
/// rows with `scheme` under a fresh stream seeded by `seed`.
pub fn expand_store(
    emb: &EmbeddingStore,
    new_n_entities: usize,
    new_n_relations: usize,
    scheme: InitScheme,
    seed: u64,
    projection: Projection,
) -> Result<EmbeddingStore> {
    use rand::SeedableRng;
    if new_n_entities < emb.n_entities || new_n_relations < emb.n_relations {
        return Err(Error::Contract(format!(
            "expand_store cannot shrink: {}x{} -> {}x{}",
            emb.n_entities, emb.n_relations, new_n_entities, new_n_relations
        )));
    }
    let new_dim = match projection {
        Projection::None => emb.dim,
        Projection::ZeroPadTo(d) => {
            if d < emb.dim {
                return Err(Error::Contract(format!(
                    "zero-pad target dimension {d} is below current {}",
                    emb.dim
                )));
            }
            if emb.kind.requires_even_dim() && d % 2 != 0 {
                return Err(Error::Config(format!(
                    "{} requires an even dimension, got {d}",
                    emb.kind.as_str()
                )));
            }
            d
        }
    };
    let kind = emb.kind;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Old entity rows (zero-padded when the dimension grows), then new rows.
    let mut entities = Vec::with_capacity(new_n_entities * new_dim);
    for e in 0..emb.n_entities as u32 {
        entities.extend_from_slice(emb.entity(e));
        entities.extend(std::iter::repeat_n(0.0, new_dim - emb.dim));
    }
    let n_new_e = new_n_entities - emb.n_entities;
    fill_rows(&mut entities, n_new_e, new_dim, scheme, &mut rng, new_dim);

    let rows_per = kind.relation_rows_per_relation();
    let old_width = kind.relation_width(emb.dim);
    let new_width = kind.relation_width(new_dim);
    let mut relations = Vec::with_capacity(new_n_relations * rows_per * new_width);
    for row in 0..emb.n_relation_rows() as u32 {
        relations.extend_from_slice(emb.relation_row(row));
        relations.extend(std::iter::repeat_n(0.0, new_width - old_width));
    }
    let n_new_rel_rows = (new_n_relations - emb.n_relations) * rows_per;
    if kind == ModelKind::RotatE {
        fill_phases(&mut relations, n_new_rel_rows, new_width, &mut rng);
    } else {
        fill_rows(
            &mut relations,
            n_new_rel_rows,
            new_width,
            scheme,
            &mut rng,
            new_dim,
        );
    }

    let mut store = EmbeddingStore::from_raw(
        kind,
        new_dim,
        new_n_entities,
        new_n_relations,
        entities,
        relations,
    );
    if kind.is_translational() {
        for e in emb.n_entities as u32..new_n_entities as u32 {
            l2_normalize(store.entity_mut(e));
        }
    }
    Ok(store)
}

/// New-entity initializer that places each new entity at the mean of its
/// first-hop known neighbors composed through the relation offset:
/// `t - r` when the new entity heads a triple, `h + r` when it tails one.
/// Entities without any triple into the known set keep their random rows.
/// Only meaningful for kinds whose relation rows share the entity geometry.
pub fn transfer_init_new_entities(
    emb: &mut EmbeddingStore,
    triples: &[crate::kg::Triple],
    first_new_entity: u32,
) -> Result<usize> {
    if emb.kind.relation_width(emb.dim) != emb.dim || emb.kind.relation_rows_per_relation() != 1 {
        return Err(Error::Config(format!(
            "neighbor-mean transfer init is not defined for {}",
            emb.kind.as_str()
        )));
    }
    let d = emb.dim;
    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for t in triples {
        let head_new = t.head >= first_new_entity;
        let tail_new = t.tail >= first_new_entity;
        // Compose only through known endpoints.
        if head_new && !tail_new {
            let entry = sums.entry(t.head).or_insert_with(|| (vec![0.0; d], 0));
            let tail = emb.entity(t.tail).to_vec();
            let rel = emb.relation_row(t.relation).to_vec();
            for k in 0..d {
                entry.0[k] += tail[k] - rel[k];
            }
            entry.1 += 1;
        } else if tail_new && !head_new {
            let entry = sums.entry(t.tail).or_insert_with(|| (vec![0.0; d], 0));
            let head = emb.entity(t.head).to_vec();
            let rel = emb.relation_row(t.relation).to_vec();
            for k in 0..d {
                entry.0[k] += head[k] + rel[k];
            }
            entry.1 += 1;
        }
    }
    let transferred = sums.len();
    for (e, (sum, count)) in sums {
        let row = emb.entity_mut(e);
        for k in 0..d {
            row[k] = sum[k] / count as f64;
        }
        if emb.kind.is_translational() {
            l2_normalize(emb.entity_mut(e));
        }
    }
    Ok(transferred)
}

/// Sparse per-row gradients: rows never touched by a minibatch are absent.
/// Relation entries are keyed by raw relation row index.
#[derive(Clone, Debug, Default)]
pub struct SparseGrad {
    pub entity: BTreeMap<u32, Vec<f64>>,
    pub relation: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrad {
    pub fn entity_row_mut(&mut self, id: u32, dim: usize) -> &mut Vec<f64> {
        self.entity.entry(id).or_insert_with(|| vec![0.0; dim])
    }

    pub fn relation_row_mut(&mut self, row: u32, width: usize) -> &mut Vec<f64> {
        self.relation.entry(row).or_insert_with(|| vec![0.0; width])
    }

    /// self += other * scale.
    pub fn add_scaled(&mut self, other: &SparseGrad, scale: f64) {
        for (&id, grad) in &other.entity {
            let row = self.entity_row_mut(id, grad.len());
            for (a, b) in row.iter_mut().zip(grad) {
                *a += b * scale;
            }
        }
        for (&id, grad) in &other.relation {
            let row = self.relation_row_mut(id, grad.len());
            for (a, b) in row.iter_mut().zip(grad) {
                *a += b * scale;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entity.is_empty() && self.relation.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.entity.len() + self.relation.len()
    }

    pub fn all_finite(&self) -> bool {
        self.entity
            .values()
            .chain(self.relation.values())
            .all(|row| row.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_reference_settings() {
        // Embedding dimension defaults to 200 when a config omits it.
        let model: ScoreModel = serde_json::from_str(r#"{ "kind": "transe-l2" }"#).unwrap();
        assert_eq!(model.dim, 200);
        assert_eq!(model.negatives, 10);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_embeddings(ModelKind::DistMult, 3, 1, 4, InitScheme::UniformXavier, 7);
        let b = init_embeddings(ModelKind::DistMult, 3, 1, 4, InitScheme::UniformXavier, 7);
        assert_eq!(a.entity_matrix(), b.entity_matrix());
        assert_eq!(a.relation_matrix(), b.relation_matrix());
        let c = init_embeddings(ModelKind::DistMult, 3, 1, 4, InitScheme::UniformXavier, 8);
        assert_ne!(a.entity_matrix(), c.entity_matrix());
    }

    #[test]
    fn xavier_bounds_hold_empirically() {
        // 10^5 samples stay within ±sqrt(6/d) and come close to the bound.
        let d = 10;
        let emb = init_embeddings(
            ModelKind::DistMult,
            10_000,
            0,
            d,
            InitScheme::UniformXavier,
            3,
        );
        let bound = (6.0f64 / d as f64).sqrt();
        let mut max_abs = 0.0f64;
        for &v in emb.entity_matrix() {
            assert!(v.abs() <= bound);
            max_abs = max_abs.max(v.abs());
        }
        assert!(
            max_abs > 0.99 * bound,
            "max |v| = {max_abs}, bound = {bound}"
        );
    }

    #[test]
    fn transe_entity_rows_unit_norm_after_init() {
        let emb = init_embeddings(ModelKind::TransEL2, 50, 3, 8, InitScheme::UniformXavier, 1);
        for e in 0..50u32 {
            let norm: f64 = emb.entity(e).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_relation_rows_are_phases() {
        let emb = init_embeddings(ModelKind::RotatE, 4, 5, 8, InitScheme::UniformXavier, 2);
        assert_eq!(emb.relation_width(), 4);
        for row in 0..emb.n_relation_rows() as u32 {
            for &v in emb.relation_row(row) {
                assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&v));
            }
        }
    }

    #[test]
    fn transh_has_two_rows_per_relation() {
        let emb = init_embeddings(ModelKind::TransH, 4, 5, 6, InitScheme::Normal, 2);
        assert_eq!(emb.n_relation_rows(), 10);
        assert_eq!(emb.relation_width(), 6);
    }

    #[test]
    fn expand_by_zero_rows_is_identity() {
        let emb = init_embeddings(ModelKind::ComplEx, 6, 2, 4, InitScheme::Normal, 5);
        let out = expand_store(&emb, 6, 2, InitScheme::Normal, 9, Projection::None).unwrap();
        assert_eq!(emb, out);
    }

    #[test]
    fn expand_preserves_old_rows_exactly() {
        let emb = init_embeddings(ModelKind::TransH, 5, 2, 6, InitScheme::UniformXavier, 5);
        let out =
            expand_store(&emb, 9, 3, InitScheme::UniformXavier, 11, Projection::None).unwrap();
        assert_eq!(out.n_entities(), 9);
        assert_eq!(out.n_relation_rows(), 6);
        for e in 0..5u32 {
            assert_eq!(emb.entity(e), out.entity(e));
        }
        for r in 0..4u32 {
            assert_eq!(emb.relation_row(r), out.relation_row(r));
        }
    }

    #[test]
    fn shrink_is_rejected() {
        let emb = init_embeddings(ModelKind::DistMult, 5, 2, 4, InitScheme::Normal, 5);
        assert!(expand_store(&emb, 4, 2, InitScheme::Normal, 1, Projection::None).is_err());
        assert!(expand_store(&emb, 5, 2, InitScheme::Normal, 1, Projection::ZeroPadTo(2)).is_err());
    }
}
