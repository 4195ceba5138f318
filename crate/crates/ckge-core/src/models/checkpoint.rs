//! Binary checkpoint format.
//!
//! Little-endian layout: magic `CKGE`, version u32, model kind u32,
//! n_entities u64, n_relations u64, dim u64, then the entity matrix
//! (row-major f64) followed by the relation matrix. A JSON manifest sidecar
//! carries the snapshot index, vocab sizes, and hyperparameters.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EmbeddingStore, ScoreModel, ALL_MODEL_KINDS};

const MAGIC: &[u8; 4] = b"CKGE";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub snapshot: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub dim: usize,
    pub model: ScoreModel,
}

pub fn write_checkpoint(emb: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut buf =
        Vec::with_capacity(32 + 8 * (emb.entity_matrix().len() + emb.relation_matrix().len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let kind_idx = ALL_MODEL_KINDS
        .iter()
        .position(|k| *k == emb.kind())
        .unwrap() as u32;
    buf.extend_from_slice(&kind_idx.to_le_bytes());
    buf.extend_from_slice(&(emb.n_entities() as u64).to_le_bytes());
    buf.extend_from_slice(&(emb.n_relations() as u64).to_le_bytes());
    buf.extend_from_slice(&(emb.dim() as u64).to_le_bytes());
    for v in emb.entity_matrix().iter().chain(emb.relation_matrix()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<EmbeddingStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 36 || &bytes[..4] != MAGIC {
        return Err(fail("not a CKGE checkpoint"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(fail("unsupported checkpoint version"));
    }
    let kind = *ALL_MODEL_KINDS
        .get(u32_at(8) as usize)
        .ok_or_else(|| fail("unknown model kind"))?;
    let n_entities = u64_at(12) as usize;
    let n_relations = u64_at(20) as usize;
    let dim = u64_at(28) as usize;
    let n_entity_vals = n_entities * dim;
    let n_rel_vals = n_relations * kind.relation_rows_per_relation() * kind.relation_width(dim);
    let expected = 36 + 8 * (n_entity_vals + n_rel_vals);
    if bytes.len() != expected {
        return Err(fail(&format!(
            "checkpoint size mismatch: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut values = bytes[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let entities: Vec<f64> = values.by_ref().take(n_entity_vals).collect();
    let relations: Vec<f64> = values.collect();
    let store = EmbeddingStore::from_raw(kind, dim, n_entities, n_relations, entities, relations);
    if !store.all_finite() {
        return Err(fail("checkpoint contains non-finite values"));
    }
    Ok(store)
}

pub fn write_manifest(manifest: &CheckpointManifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_embeddings, InitScheme, ModelKind};

    #[test]
    fn round_trip_bit_exact_for_every_kind() {
        let tmp = tempfile::tempdir().unwrap();
        for (i, kind) in ALL_MODEL_KINDS.iter().enumerate() {
            let emb = init_embeddings(*kind, 7, 3, 6, InitScheme::Normal, i as u64);
            let path = tmp.path().join(format!("ckpt_{i}.bin"));
            write_checkpoint(&emb, &path).unwrap();
            let back = read_checkpoint(&path).unwrap();
            assert_eq!(emb, back);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let emb = init_embeddings(ModelKind::DistMult, 4, 2, 4, InitScheme::Normal, 1);
        let path = tmp.path().join("ckpt.bin");
        write_checkpoint(&emb, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = CheckpointManifest {
            snapshot: 2,
            n_entities: 100,
            n_relations: 7,
            dim: 16,
            model: ScoreModel::new(ModelKind::TransEL2, 16),
        };
        let path = tmp.path().join("m.json");
        write_manifest(&manifest, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.snapshot, 2);
        assert_eq!(back.n_entities, 100);
        assert_eq!(back.model.kind, ModelKind::TransEL2);
    }
}
