//! Checkpoint files.
//!
//! Per table: a binary file of `u64 n, u64 d` followed by n×d little-endian
//! f32 rows. A text metadata file records the model kind, dimensions,
//! margin, and vocabulary file paths. All integers little-endian.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};

pub const ENTITY_TABLE_FILE: &str = "entities.bin";
pub const RELATION_TABLE_FILE: &str = "relations.bin";
pub const META_FILE: &str = "checkpoint.meta";
pub const ENTITY_VOCAB_FILE: &str = "entity_names.txt";
pub const RELATION_VOCAB_FILE: &str = "relation_names.txt";

pub fn write_table(path: &Path, n: usize, d: usize, rows: &[f32]) -> Result<()> {
    if rows.len() != n * d {
        return Err(Error::ShapeMismatch(format!(
            "table data {} != {n}x{d}",
            rows.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&(d as u64).to_le_bytes())?;
        for x in rows {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let n = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() != n * d * 4 {
        return Err(Error::Checkpoint(format!(
            "{}: {} payload bytes for {n}x{d} table",
            path.display(),
            raw.len()
        )));
    }
    let rows = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((n, d, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub model: ModelKind,
    pub dim: usize,
    pub gamma: Option<f32>,
    pub rotate_unsquared: bool,
    pub entity_vocab: PathBuf,
    pub relation_vocab: PathBuf,
}

impl CheckpointMeta {
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.model, self.dim)?;
        cfg.gamma = self.gamma;
        cfg.rotate_unsquared = self.rotate_unsquared;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("model = {}\n", self.model.name()));
        out.push_str(&format!("dim = {}\n", self.dim));
        if let Some(g) = self.gamma {
            out.push_str(&format!("gamma = {g}\n"));
        }
        if self.rotate_unsquared {
            out.push_str("rotate_unsquared = true\n");
        }
        out.push_str(&format!(
            "entity_vocab = {}\n",
            self.entity_vocab.display()
        ));
        out.push_str(&format!(
            "relation_vocab = {}\n",
            self.relation_vocab.display()
        ));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut model = None;
        let mut dim = None;
        let mut gamma = None;
        let mut rotate_unsquared = false;
        let mut entity_vocab = None;
        let mut relation_vocab = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Checkpoint(format!(
                    "{}: expected `key = value`, got {line:?}",
                    path.display()
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => {
                    model = Some(ModelKind::parse(value).ok_or_else(|| {
                        Error::Checkpoint(format!("unknown model kind {value:?}"))
                    })?)
                }
                "dim" => {
                    dim = Some(value.parse().map_err(|_| {
                        Error::Checkpoint(format!("bad dim {value:?}"))
                    })?)
                }
                "gamma" => {
                    gamma = Some(value.parse().map_err(|_| {
                        Error::Checkpoint(format!("bad gamma {value:?}"))
                    })?)
                }
                "rotate_unsquared" => rotate_unsquared = value == "true",
                "entity_vocab" => entity_vocab = Some(PathBuf::from(value)),
                "relation_vocab" => relation_vocab = Some(PathBuf::from(value)),
                _ => {} // tolerate extra keys
            }
        }
        Ok(Self {
            model: model
                .ok_or_else(|| Error::Checkpoint("metadata missing model".into()))?,
            dim: dim.ok_or_else(|| Error::Checkpoint("metadata missing dim".into()))?,
            gamma,
            rotate_unsquared,
            entity_vocab: entity_vocab
                .ok_or_else(|| Error::Checkpoint("metadata missing entity_vocab".into()))?,
            relation_vocab: relation_vocab
                .ok_or_else(|| Error::Checkpoint("metadata missing relation_vocab".into()))?,
        })
    }
}

/// Write tables + metadata + vocabularies under `dir`.
pub fn save_checkpoint(
    dir: &Path,
    cfg: &ModelConfig,
    vocab: &crate::graph::Vocab,
    entity_rows: &[f32],
    relation_rows: &[f32],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_ent = vocab.num_entities();
    let n_rel = vocab.num_relations();
    write_table(&dir.join(ENTITY_TABLE_FILE), n_ent, cfg.dim, entity_rows)?;
    write_table(
        &dir.join(RELATION_TABLE_FILE),
        n_rel,
        cfg.rel_dim(),
        relation_rows,
    )?;
    vocab.save(
        &dir.join(ENTITY_VOCAB_FILE),
        &dir.join(RELATION_VOCAB_FILE),
    )?;
    CheckpointMeta {
        model: cfg.kind,
        dim: cfg.dim,
        gamma: cfg.gamma,
        rotate_unsquared: cfg.rotate_unsquared,
        entity_vocab: PathBuf::from(ENTITY_VOCAB_FILE),
        relation_vocab: PathBuf::from(RELATION_VOCAB_FILE),
    }
    .write(&dir.join(META_FILE))
}

pub struct Checkpoint {
    pub config: ModelConfig,
    pub entity_rows: Vec<f32>,
    pub relation_rows: Vec<f32>,
    pub n_entities: usize,
    pub n_relations: usize,
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta = CheckpointMeta::read(&dir.join(META_FILE))?;
    let config = meta.model_config()?;
    let (n_ent, d_ent, entity_rows) = read_table(&dir.join(ENTITY_TABLE_FILE))?;
    let (n_rel, d_rel, relation_rows) = read_table(&dir.join(RELATION_TABLE_FILE))?;
    if d_ent != config.dim || d_rel != config.rel_dim() {
        return Err(Error::Checkpoint(format!(
            "table widths {d_ent}/{d_rel} do not match model {} (dim {})",
            config.kind.name(),
            config.dim
        )));
    }
    Ok(Checkpoint {
        config,
        entity_rows,
        relation_rows,
        n_entities: n_ent,
        n_relations: n_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_tsv;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let rows: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
        write_table(&path, 3, 4, &rows).unwrap();
        let (n, d, back) = read_table(&path).unwrap();
        assert_eq!((n, d), (3, 4));
        assert_eq!(back, rows);
    }

    #[test]
    fn truncated_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let rows: Vec<f32> = vec![0.0; 12];
        write_table(&path, 3, 4, &rows).unwrap();
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() - 3]).unwrap();
        assert!(read_table(&path).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"a r b\nb r c\n").unwrap();
        let (vocab, _) = load_tsv(f.path(), None).unwrap();
        let cfg = ModelConfig::new(ModelKind::TransEL1, 4).unwrap().with_gamma(2.0);
        let ents: Vec<f32> = (0..vocab.num_entities() * 4).map(|i| i as f32).collect();
        let rels: Vec<f32> = (0..vocab.num_relations() * 4).map(|i| -(i as f32)).collect();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &cfg, &vocab, &ents, &rels).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.config.kind, ModelKind::TransEL1);
        assert_eq!(ck.config.gamma, Some(2.0));
        assert_eq!(ck.entity_rows, ents);
        assert_eq!(ck.relation_rows, rels);
        assert_eq!(ck.n_entities, 3);
    }
}
