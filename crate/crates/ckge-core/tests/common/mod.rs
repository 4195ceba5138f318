//! Shared fixtures: learnable layered toy graphs and quick configs.

#![allow(dead_code)]

use ckge_core::kg::SnapshotSequence;
use ckge_core::models::{ModelKind, ScoreModel, TrainConfig};
use ckge_core::snapgen::{generate_snapshots, GrowthKind, GrowthScenario};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Layered permutation graph: `levels` entity levels of `per_level` nodes;
/// each boundary carries `perms` relations, each a seeded bijection onto the
/// next level. Functional, loop-free structure that translational models
/// embed well — which gives the toy benchmarks a real signal to forget.
pub fn layered_base(
    levels: usize,
    per_level: usize,
    perms: usize,
    seed: u64,
) -> Vec<(String, String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for j in 0..levels - 1 {
        for p in 0..perms {
            let mut perm: Vec<usize> = (0..per_level).collect();
            perm.shuffle(&mut rng);
            for (x, &target) in perm.iter().enumerate() {
                out.push((
                    format!("n{j}_{x}"),
                    format!("r{j}_{p}"),
                    format!("n{}_{target}", j + 1),
                ));
            }
        }
    }
    out
}

pub fn growth_seq(
    kind: GrowthKind,
    levels: usize,
    per_level: usize,
    perms: usize,
    n_snapshots: usize,
    seed: u64,
) -> SnapshotSequence {
    let base = layered_base(levels, per_level, perms, seed ^ 0xabcd);
    let scenario = GrowthScenario {
        kind,
        n_snapshots,
        seed,
        test_fraction: 0.15,
        valid_fraction: 0.05,
    };
    generate_snapshots(&base, &scenario).expect("toy generation")
}

pub fn quick_model(kind: ModelKind, dim: usize) -> ScoreModel {
    let mut model = ScoreModel::new(kind, dim);
    model.learning_rate = 0.05;
    model.negatives = 4;
    model.margin = 1.0;
    // Margin losses on translational models are degenerate without the
    // norm constraint: scaling satisfies the margin with no structure.
    model.renormalize = true;
    model
}

pub fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs_per_snapshot: epochs,
        batch_size: 64,
        eval_every: 0,
        patience: 3,
    }
}
