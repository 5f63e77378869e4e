//! Neighbor sources feeding the adaptive frontier.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocRef, Interner, QueryRecord};
use crate::error::{Error, Result};
use crate::graph::{propagate, AffinityGraph, Propagated, PropagationConfig};

/// Produces a per-query view restricted to the query's candidate pool.
pub trait NeighborSource {
    fn local<'a>(&'a self, query: &QueryRecord, pool: &[DocRef]) -> Result<Box<dyn LocalNeighbors + 'a>>;
}

/// Neighbor lookups inside one pool. Results exclude the document itself,
/// are sorted by weight descending (ties by handle) and stay inside the pool.
pub trait LocalNeighbors {
    fn neighbors(&mut self, doc: DocRef, n: usize) -> Vec<(DocRef, f64)>;
}

impl LocalNeighbors for Propagated {
    fn neighbors(&mut self, doc: DocRef, n: usize) -> Vec<(DocRef, f64)> {
        Propagated::neighbors(self, doc, n)
    }
}

/// No graph: plain sliding window.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNeighbors;

struct Empty;

impl LocalNeighbors for Empty {
    fn neighbors(&mut self, _doc: DocRef, _n: usize) -> Vec<(DocRef, f64)> {
        Vec::new()
    }
}

impl NeighborSource for NoNeighbors {
    fn local<'a>(&'a self, _query: &QueryRecord, _pool: &[DocRef]) -> Result<Box<dyn LocalNeighbors + 'a>> {
        Ok(Box::new(Empty))
    }
}

/// Neighbors read from the L2G graph after pool-restricted propagation.
#[derive(Debug, Clone)]
pub struct L2gNeighbors<'g> {
    pub graph: &'g AffinityGraph,
    pub propagation: PropagationConfig,
}

impl NeighborSource for L2gNeighbors<'_> {
    fn local<'a>(&'a self, _query: &QueryRecord, pool: &[DocRef]) -> Result<Box<dyn LocalNeighbors + 'a>> {
        if !pool.iter().any(|d| self.graph.is_seen(*d)) {
            return Ok(Box::new(Empty));
        }
        Ok(Box::new(propagate(self.graph, pool, &self.propagation)?))
    }
}

/// Uniformly random neighbors from the pool, seeded per query.
#[derive(Debug, Clone, Copy)]
pub struct RandomNeighbors {
    pub seed: u64,
}

struct RandomLocal {
    pool: Vec<DocRef>,
    rng: ChaCha8Rng,
}

impl LocalNeighbors for RandomLocal {
    fn neighbors(&mut self, doc: DocRef, n: usize) -> Vec<(DocRef, f64)> {
        let others: Vec<DocRef> = self.pool.iter().copied().filter(|d| *d != doc).collect();
        let n = n.min(others.len());
        let mut out: Vec<(DocRef, f64)> = sample(&mut self.rng, others.len(), n)
            .into_iter()
            .map(|i| (others[i], self.rng.gen_range(f64::EPSILON..1.0)))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

impl NeighborSource for RandomNeighbors {
    fn local<'a>(&'a self, query: &QueryRecord, pool: &[DocRef]) -> Result<Box<dyn LocalNeighbors + 'a>> {
        Ok(Box::new(RandomLocal {
            pool: pool.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(query_seed(self.seed, &query.qid)),
        }))
    }
}

/// Stable mix of a base seed and a qid.
pub fn query_seed(seed: u64, qid: &str) -> u64 {
    qid.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A precomputed doc-doc affinity graph loaded from disk.
#[derive(Debug, Clone, Default)]
pub struct FileGraph {
    adjacency: HashMap<DocRef, Vec<(DocRef, f64)>>,
}

impl FileGraph {
    /// Reads a whitespace-separated edge list `docA docB weight`. Edges are
    /// symmetric; repeated pairs keep the larger weight.
    pub fn from_edge_list<R: BufRead>(reader: R, ids: &mut Interner) -> Result<Self> {
        let mut edges: HashMap<(DocRef, DocRef), f64> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            let [a, b, w] = fields[..] else {
                return Err(Error::parse(lineno, "expected `docA docB weight`"));
            };
            let w: f64 = w
                .parse()
                .ok()
                .filter(|w: &f64| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| Error::parse(lineno, format!("bad weight {w:?}")))?;
            let a = ids.intern(a).map_err(|e| Error::parse(lineno, e.to_string()))?;
            let b = ids.intern(b).map_err(|e| Error::parse(lineno, e.to_string()))?;
            if a == b || w == 0.0 {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            let slot = edges.entry(key).or_insert(w);
            *slot = slot.max(w);
        }
        Ok(Self::from_edges(edges))
    }

    /// Re-keys an L2G graph into `ids`, using IDF-weighted affinities.
    pub fn from_affinity_graph(graph: &AffinityGraph, ids: &mut Interner) -> Result<Self> {
        let src = graph.interner();
        let mut edges = HashMap::new();
        for (a, b, _) in graph.cells() {
            if a == b {
                continue;
            }
            let w = graph.weighted_affinity(a, b)?;
            let a = ids.intern(src.external_id(a)?)?;
            let b = ids.intern(src.external_id(b)?)?;
            edges.insert(if a < b { (a, b) } else { (b, a) }, w);
        }
        Ok(Self::from_edges(edges))
    }

    fn from_edges(edges: HashMap<(DocRef, DocRef), f64>) -> Self {
        let mut adjacency: HashMap<DocRef, Vec<(DocRef, f64)>> = HashMap::new();
        for ((a, b), w) in edges {
            adjacency.entry(a).or_default().push((b, w));
            adjacency.entry(b).or_default().push((a, w));
        }
        for list in adjacency.values_mut() {
            list.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        }
        Self { adjacency }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, a: DocRef, b: DocRef) -> f64 {
        self.adjacency
            .get(&a)
            .and_then(|l| l.iter().find(|(d, _)| *d == b))
            .map_or(0.0, |(_, w)| *w)
    }
}

struct FileLocal<'a> {
    graph: &'a FileGraph,
    pool: HashSet<DocRef>,
}

impl LocalNeighbors for FileLocal<'_> {
    fn neighbors(&mut self, doc: DocRef, n: usize) -> Vec<(DocRef, f64)> {
        self.graph
            .adjacency
            .get(&doc)
            .into_iter()
            .flatten()
            .filter(|(d, _)| self.pool.contains(d))
            .take(n)
            .copied()
            .collect()
    }
}

impl NeighborSource for FileGraph {
    fn local<'a>(&'a self, _query: &QueryRecord, pool: &[DocRef]) -> Result<Box<dyn LocalNeighbors + 'a>> {
        Ok(Box::new(FileLocal {
            graph: self,
            pool: pool.iter().copied().collect(),
        }))
    }
}
