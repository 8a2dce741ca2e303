//! Triplet ingestion and the in-memory graph structure.
//!
//! A knowledge graph is a set of directed typed edges `(head, relation,
//! tail)`. This module builds dense id vocabularies from raw text files,
//! stores triplets in columnar arrays, and maintains head/tail adjacency
//! indexes so that existence queries and degree lookups stay cheap during
//! filtered evaluation and partitioning.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense, 0-based id vocabularies for entities and relations.
///
/// Ids are assigned by first appearance so ingestion is deterministic and
/// independent of locale or collation.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: HashMap<String, u64>,
    relation_ids: HashMap<String, u64>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<u64> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<u64> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: u64) -> Option<&str> {
        self.entity_names.get(id as usize).map(|s| s.as_str())
    }

    pub fn relation_name(&self, id: u64) -> Option<&str> {
        self.relation_names.get(id as usize).map(|s| s.as_str())
    }

    /// Id for `name`, inserting it at the next free id if unseen.
    pub fn intern_entity(&mut self, name: &str) -> u64 {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len() as u64;
        self.entity_names.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> u64 {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relation_names.len() as u64;
        self.relation_names.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        id
    }

    /// Persist as two text files, line `i` holding the name of id `i`.
    pub fn save(&self, entities_path: &Path, relations_path: &Path) -> Result<()> {
        let mut ents = String::new();
        for name in &self.entity_names {
            let _ = writeln!(ents, "{name}");
        }
        fs::write(entities_path, ents).map_err(|e| Error::io(entities_path, e))?;
        let mut rels = String::new();
        for name in &self.relation_names {
            let _ = writeln!(rels, "{name}");
        }
        fs::write(relations_path, rels).map_err(|e| Error::io(relations_path, e))?;
        Ok(())
    }

    pub fn load(entities_path: &Path, relations_path: &Path) -> Result<Self> {
        let mut vocab = Vocab::new();
        let ents = fs::read_to_string(entities_path).map_err(|e| Error::io(entities_path, e))?;
        for name in ents.lines() {
            vocab.intern_entity(name);
        }
        let rels = fs::read_to_string(relations_path).map_err(|e| Error::io(relations_path, e))?;
        for name in rels.lines() {
            vocab.intern_relation(name);
        }
        Ok(vocab)
    }
}

/// Columnar triplet storage with adjacency indexes.
///
/// `heads`, `rels`, `tails` are parallel arrays in file order. `by_head`
/// and `by_tail` map an entity id to the sorted list of triplet positions
/// where it appears on that side; both are built eagerly at load time
/// because filtered evaluation performs millions of existence queries.
/// Duplicate triplets are preserved: splits are taken as published.
#[derive(Debug, Clone, Default)]
pub struct TripletStore {
    pub heads: Vec<u64>,
    pub rels: Vec<u64>,
    pub tails: Vec<u64>,
    by_head: Vec<Vec<u32>>,
    by_tail: Vec<Vec<u32>>,
    rel_counts: Vec<u64>,
}

impl TripletStore {
    /// Build from parallel id arrays, indexing against the given vocab sizes.
    pub fn from_columns(
        heads: Vec<u64>,
        rels: Vec<u64>,
        tails: Vec<u64>,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        assert_eq!(heads.len(), rels.len());
        assert_eq!(heads.len(), tails.len());
        let mut by_head = vec![Vec::new(); num_entities];
        let mut by_tail = vec![Vec::new(); num_entities];
        let mut rel_counts = vec![0u64; num_relations];
        for (pos, ((&h, &r), &t)) in heads.iter().zip(&rels).zip(&tails).enumerate() {
            if h >= num_entities as u64 || t >= num_entities as u64 {
                return Err(Error::IdOutOfRange {
                    id: h.max(t),
                    bound: num_entities as u64,
                });
            }
            if r >= num_relations as u64 {
                return Err(Error::IdOutOfRange {
                    id: r,
                    bound: num_relations as u64,
                });
            }
            by_head[h as usize].push(pos as u32);
            by_tail[t as usize].push(pos as u32);
            rel_counts[r as usize] += 1;
        }
        Ok(Self {
            heads,
            rels,
            tails,
            by_head,
            by_tail,
            rel_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn triplet(&self, pos: usize) -> (u64, u64, u64) {
        (self.heads[pos], self.rels[pos], self.tails[pos])
    }

    pub fn num_entities(&self) -> usize {
        self.by_head.len()
    }

    pub fn num_relations(&self) -> usize {
        self.rel_counts.len()
    }

    /// Per-relation triplet frequency histogram; sums to `len()`.
    pub fn rel_counts(&self) -> &[u64] {
        &self.rel_counts
    }

    /// Positions where `e` appears as head, sorted ascending.
    pub fn positions_by_head(&self, e: u64) -> Result<&[u32]> {
        self.by_head
            .get(e as usize)
            .map(|v| v.as_slice())
            .ok_or(Error::IdOutOfRange {
                id: e,
                bound: self.by_head.len() as u64,
            })
    }

    /// Positions where `e` appears as tail, sorted ascending.
    pub fn positions_by_tail(&self, e: u64) -> Result<&[u32]> {
        self.by_tail
            .get(e as usize)
            .map(|v| v.as_slice())
            .ok_or(Error::IdOutOfRange {
                id: e,
                bound: self.by_tail.len() as u64,
            })
    }

    /// Whether `(h, r, t)` occurs in the store. Direction matters.
    ///
    /// Scans the head adjacency list, so cost is O(degree(h)).
    pub fn triplet_exists(&self, h: u64, r: u64, t: u64) -> Result<bool> {
        if t >= self.by_tail.len() as u64 {
            return Err(Error::IdOutOfRange {
                id: t,
                bound: self.by_tail.len() as u64,
            });
        }
        if r >= self.rel_counts.len() as u64 {
            return Err(Error::IdOutOfRange {
                id: r,
                bound: self.rel_counts.len() as u64,
            });
        }
        let positions = self.positions_by_head(h)?;
        Ok(positions
            .iter()
            .any(|&p| self.rels[p as usize] == r && self.tails[p as usize] == t))
    }

    /// Number of (position, side) incidences of `e`.
    pub fn entity_degree(&self, e: u64) -> Result<u64> {
        let h = self.positions_by_head(e)?.len() as u64;
        let t = self.positions_by_tail(e)?.len() as u64;
        Ok(h + t)
    }

    /// Serialize back to delimiter-separated text, one triplet per line,
    /// in stored order.
    pub fn to_tsv(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for pos in 0..self.len() {
            let (h, r, t) = self.triplet(pos);
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                vocab.entity_name(h).expect("head in vocab"),
                vocab.relation_name(r).expect("relation in vocab"),
                vocab.entity_name(t).expect("tail in vocab"),
            );
        }
        out
    }
}

/// Train/valid/test splits sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub vocab: Vocab,
    pub train: TripletStore,
    pub valid: TripletStore,
    pub test: TripletStore,
}

impl DatasetSplit {
    /// Load `train.txt`, `valid.txt`, `test.txt` from a directory, building
    /// one shared vocabulary (train names first, then valid, then test).
    pub fn load_dir(dir: &Path, delimiter: Option<char>) -> Result<Self> {
        let mut vocab = Vocab::new();
        let train_raw = read_triplet_file(&dir.join("train.txt"), delimiter, &mut vocab)?;
        if train_raw.0.is_empty() {
            return Err(Error::EmptyInput(format!(
                "{} has no training triplets",
                dir.display()
            )));
        }
        let valid_raw = read_triplet_file(&dir.join("valid.txt"), delimiter, &mut vocab)?;
        let test_raw = read_triplet_file(&dir.join("test.txt"), delimiter, &mut vocab)?;
        let ne = vocab.num_entities();
        let nr = vocab.num_relations();
        Ok(Self {
            vocab,
            train: TripletStore::from_columns(train_raw.0, train_raw.1, train_raw.2, ne, nr)?,
            valid: TripletStore::from_columns(valid_raw.0, valid_raw.1, valid_raw.2, ne, nr)?,
            test: TripletStore::from_columns(test_raw.0, test_raw.1, test_raw.2, ne, nr)?,
        })
    }

    /// Union of all three splits as one store (used for filtered ranking).
    pub fn all_triplets(&self) -> TripletStore {
        let mut heads = self.train.heads.clone();
        let mut rels = self.train.rels.clone();
        let mut tails = self.train.tails.clone();
        for s in [&self.valid, &self.test] {
            heads.extend_from_slice(&s.heads);
            rels.extend_from_slice(&s.rels);
            tails.extend_from_slice(&s.tails);
        }
        TripletStore::from_columns(
            heads,
            rels,
            tails,
            self.vocab.num_entities(),
            self.vocab.num_relations(),
        )
        .expect("splits already validated")
    }
}

/// Load one triplet file, building a fresh vocabulary in first-appearance
/// order. Row order equals file order; duplicates are kept.
///
/// `delimiter`: `Some(c)` splits each line on `c`; `None` splits on any
/// whitespace run, which handles both tab- and space-separated data.
pub fn load_tsv(path: &Path, delimiter: Option<char>) -> Result<(Vocab, TripletStore)> {
    let mut vocab = Vocab::new();
    let (heads, rels, tails) = read_triplet_file(path, delimiter, &mut vocab)?;
    if heads.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let ne = vocab.num_entities();
    let nr = vocab.num_relations();
    let store = TripletStore::from_columns(heads, rels, tails, ne, nr)?;
    Ok((vocab, store))
}

fn read_triplet_file(
    path: &Path,
    delimiter: Option<char>,
    vocab: &mut Vocab,
) -> Result<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut heads = Vec::new();
    let mut rels = Vec::new();
    let mut tails = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = match delimiter {
            Some(c) => line.trim_end_matches(['\r', '\n']).split(c).collect::<Vec<_>>(),
            None => line.split_whitespace().collect::<Vec<_>>(),
        };
        if delimiter.is_some() {
            fields.retain(|f| !f.is_empty());
        }
        if fields.len() != 3 {
            return Err(Error::MalformedLine {
                path: path.to_owned(),
                line: lineno + 1,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        heads.push(vocab.intern_entity(fields[0]));
        rels.push(vocab.intern_relation(fields[1]));
        tails.push(vocab.intern_entity(fields[2]));
    }
    Ok((heads, rels, tails))
}
