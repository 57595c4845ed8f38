//! Knowledge-graph data model and triple-file ingestion.
//!
//! Entities and relations get dense ids in first-appearance order. Every
//! triple `(h, r, t)` also yields an inverse edge `(t, r + |R|, h)` in the
//! adjacency index, so relation ids used for walking and scoring ("oriented"
//! ids) live in `0..2|R|`.

mod negative;
mod split;
mod task;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use negative::sample_negatives;
pub use split::{generate_unseen_splits, Split, SplitSpec};
pub use task::{make_task, FewShotTask, Orientation, QueryClass, TaskTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }

    pub fn touches(&self, e: EntityId) -> bool {
        self.head == e || self.tail == e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One adjacency entry: leaving the owning entity along `relation`
/// (an oriented id) reaches `neighbor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub relation: RelationId,
    pub neighbor: EntityId,
    pub direction: Direction,
}

/// String <-> dense id map in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(id) = self.index.get(name) {
            return *id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// An immutable multi-relational graph with a bidirectional adjacency index.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Dictionary,
    relations: Dictionary,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    adjacency: Vec<Vec<Edge>>,
    incident: Vec<Vec<u32>>,
    answers: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl KnowledgeGraph {
    /// Builds a graph over fixed dictionaries. Duplicate triples are dropped,
    /// keeping the first occurrence.
    pub fn from_parts(entities: Dictionary, relations: Dictionary, triples: Vec<Triple>) -> Self {
        let n = entities.len();
        let r = relations.len() as u32;
        let mut seen = HashSet::with_capacity(triples.len());
        let mut kept = Vec::with_capacity(triples.len());
        for t in triples {
            if seen.insert(t) {
                kept.push(t);
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        let mut answers: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        for (i, t) in kept.iter().enumerate() {
            let inv = RelationId(t.relation.0 + r);
            adjacency[t.head.idx()].push(Edge {
                relation: t.relation,
                neighbor: t.tail,
                direction: Direction::Forward,
            });
            adjacency[t.tail.idx()].push(Edge {
                relation: inv,
                neighbor: t.head,
                direction: Direction::Inverse,
            });
            incident[t.head.idx()].push(i as u32);
            if t.tail != t.head {
                incident[t.tail.idx()].push(i as u32);
            }
            answers.entry((t.head, t.relation)).or_default().push(t.tail);
            answers.entry((t.tail, inv)).or_default().push(t.head);
        }
        Self {
            entities,
            relations,
            triples: kept,
            triple_set: seen,
            adjacency,
            incident,
            answers,
        }
    }

    /// Builds a graph from string triples, interning names in order.
    pub fn from_named<'a, I>(rows: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut entities = Dictionary::default();
        let mut relations = Dictionary::default();
        let mut triples = Vec::new();
        for (h, r, t) in rows {
            let h = entities.intern(h);
            let r = relations.intern(r);
            let t = entities.intern(t);
            triples.push(Triple::new(h, r, t));
        }
        Self::from_parts(entities, relations, triples)
    }

    /// Same dictionaries, keeping only triples accepted by `keep`.
    pub fn restrict(&self, keep: impl Fn(&Triple) -> bool) -> Self {
        let triples = self.triples.iter().copied().filter(|t| keep(t)).collect();
        Self::from_parts(self.entities.clone(), self.relations.clone(), triples)
    }

    pub fn entities(&self) -> &Dictionary {
        &self.entities
    }

    pub fn relations(&self) -> &Dictionary {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of base relations `|R|`.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Number of oriented relation ids `2|R|`.
    pub fn num_oriented_relations(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn edges(&self, e: EntityId) -> &[Edge] {
        &self.adjacency[e.idx()]
    }

    /// Number of distinct triples touching `e` (self-loops count once).
    pub fn degree(&self, e: EntityId) -> usize {
        self.incident[e.idx()].len()
    }

    /// Triples touching `e`, in graph order.
    pub fn incident_triples(&self, e: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.incident[e.idx()]
            .iter()
            .map(|i| &self.triples[*i as usize])
    }

    /// Entities `x` with an oriented edge `(e, relation, x)`.
    pub fn answers(&self, e: EntityId, relation: RelationId) -> &[EntityId] {
        self.answers
            .get(&(e, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn inverse(&self, relation: RelationId) -> RelationId {
        let r = self.relations.len() as u32;
        if relation.0 < r {
            RelationId(relation.0 + r)
        } else {
            RelationId(relation.0 - r)
        }
    }

    pub fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.idx() < self.num_entities() {
            Ok(())
        } else {
            Err(Error::UnknownEntity {
                id: e.0,
                len: self.num_entities(),
            })
        }
    }

    /// Writes `head<TAB>relation<TAB>tail` lines using entity/relation names.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.head.0),
                self.relations.name(t.relation.0),
                self.entities.name(t.tail.0)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Parses one TSV triple file.
pub fn load_triples(path: &Path) -> Result<KnowledgeGraph> {
    load_triple_files(&[path])
}

/// Parses several TSV files into one graph with shared dictionaries (e.g.
/// a benchmark's train/valid/test files).
pub fn load_triple_files<P: AsRef<Path>>(paths: &[P]) -> Result<KnowledgeGraph> {
    let mut entities = Dictionary::default();
    let mut relations = Dictionary::default();
    let mut triples = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_err = |reason: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: reason.to_string(),
            };
            if fields.len() != 3 {
                return Err(parse_err(&format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(parse_err("empty field"));
            }
            let h = entities.intern(fields[0]);
            let r = relations.intern(fields[1]);
            let t = entities.intern(fields[2]);
            triples.push(Triple::new(h, r, t));
        }
    }
    if triples.is_empty() {
        let path = paths
            .first()
            .map(|p| p.as_ref().to_path_buf())
            .unwrap_or_default();
        return Err(Error::EmptyGraph(path));
    }
    Ok(KnowledgeGraph::from_parts(entities, relations, triples))
}
