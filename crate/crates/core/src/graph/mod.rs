//! The listwise-to-graph (L2G) affinity graph.
//!
//! Every ranked list of length `k` becomes a sparse score vector in which the
//! document at rank `r` weighs `k - r + 1`. The graph accumulates the Gram
//! matrix of those vectors, `raw(d, e) = sum_i a_i[d] * a_i[e]`, one rank-1
//! outer product per query. Only the upper triangle (diagonal included) is
//! stored and all weights are exact integers.
//!
//! Popularity de-biasing is applied lazily at read time: a document's
//! entries are divided by `ln(1 + df(d))` where `df` counts the ingested
//! queries that contained it, so the stored state never needs rescaling as
//! `df` grows.

mod format;
mod propagate;

use std::collections::{HashMap, HashSet};

use log::warn;

use crate::corpus::{DocRef, Interner, RankedList};
use crate::error::{Error, Result};

pub use format::{FORMAT_VERSION, MAGIC};
pub use propagate::{propagate, IdfWeighting, Propagated, PropagationConfig, MAX_HOPS};

/// Bytes charged per stored matrix cell (u32 column + u64 weight).
pub const ENTRY_BYTES: usize = 12;
/// Bytes charged per interned document (df counter, row header, id offset).
pub const DOC_BYTES: usize = 16;

/// Rank-derived weights of one ranked list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreVector {
    weights: HashMap<DocRef, u64>,
}

impl ScoreVector {
    pub fn weight(&self, doc: DocRef) -> u64 {
        self.weights.get(&doc).copied().unwrap_or(0)
    }

    pub fn support(&self) -> impl Iterator<Item = (DocRef, u64)> + '_ {
        self.weights.iter().map(|(d, w)| (*d, *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `[a]_d = k - rank(d) + 1` for every `d` in the list.
pub fn score_vector(list: &RankedList) -> Result<ScoreVector> {
    list.validate()?;
    let k = list.docs.len() as u64;
    let weights = list
        .docs
        .iter()
        .enumerate()
        .map(|(pos, d)| (*d, k - pos as u64))
        .collect();
    Ok(ScoreVector { weights })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Documents seen for the first time.
    pub new_docs: usize,
    /// Cell updates applied (upper triangle, diagonal included).
    pub touched_cells: usize,
    pub repeated_qid: bool,
}

/// Where the cell updates of a batch landed relative to the documents seen
/// before the batch started.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchReport {
    pub queries: usize,
    /// `|ΔD|`: documents first seen inside this batch.
    pub new_docs: usize,
    /// Updates to cells between two previously seen documents.
    pub old_old_cells: usize,
    /// Updates to cells pairing a previous document with a new one.
    pub old_new_cells: usize,
    /// Updates to cells between two new documents.
    pub new_new_cells: usize,
}

impl BatchReport {
    pub fn touched_cells(&self) -> usize {
        self.old_old_cells + self.old_new_cells + self.new_new_cells
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub doc_count: usize,
    /// Non-zero cells strictly above the diagonal.
    pub edge_count: usize,
    pub queries_ingested: u64,
    pub estimated_bytes: usize,
}

impl GraphStats {
    pub const CSV_HEADER: &'static str = "docs,edges,queries,bytes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.doc_count, self.edge_count, self.queries_ingested, self.estimated_bytes
        )
    }
}

/// Sparse symmetric co-occurrence accumulator over an ever-growing pool.
///
/// The graph owns the document [`Interner`]; ranked lists fed to it must use
/// handles from [`AffinityGraph::interner_mut`]. Mutation requires `&mut`, so
/// a reader holding `&AffinityGraph` (or a clone taken as a snapshot) never
/// observes a partially applied update.
#[derive(Debug, Clone, Default)]
pub struct AffinityGraph {
    ids: Interner,
    /// `rows[d]` holds the cells `(d, e)` with `e >= d`.
    rows: Vec<HashMap<u32, u64>>,
    df: Vec<u32>,
    queries: u64,
    seen_docs: usize,
    stored_cells: usize,
    ingested_qids: HashSet<String>,
}

impl AffinityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts an empty graph over an existing id space.
    pub fn with_interner(ids: Interner) -> Self {
        Self {
            ids,
            ..Self::default()
        }
    }

    pub fn interner(&self) -> &Interner {
        &self.ids
    }

    pub fn interner_mut(&mut self) -> &mut Interner {
        &mut self.ids
    }

    pub fn intern(&mut self, external_id: &str) -> Result<DocRef> {
        self.ids.intern(external_id)
    }

    pub fn queries_ingested(&self) -> u64 {
        self.queries
    }

    /// Number of distinct documents that occurred in an ingested list.
    pub fn doc_count(&self) -> usize {
        self.seen_docs
    }

    pub fn df(&self, doc: DocRef) -> u32 {
        self.df.get(doc.index()).copied().unwrap_or(0)
    }

    pub fn is_seen(&self, doc: DocRef) -> bool {
        self.df(doc) > 0
    }

    /// Accumulated `sum_i a_i[d] * a_i[e]`; symmetric in its arguments.
    pub fn raw(&self, d: DocRef, e: DocRef) -> u64 {
        let (lo, hi) = if d <= e { (d, e) } else { (e, d) };
        self.rows
            .get(lo.index())
            .and_then(|row| row.get(&hi.0))
            .copied()
            .unwrap_or(0)
    }

    /// Stored cells of `d`'s row with column `>= d`.
    pub(crate) fn upper_row(&self, d: DocRef) -> Option<&HashMap<u32, u64>> {
        self.rows.get(d.index())
    }

    /// Every non-zero cell `(d, e, weight)` with `d <= e`, sorted.
    pub fn cells(&self) -> Vec<(DocRef, DocRef, u64)> {
        let mut out = Vec::with_capacity(self.stored_cells);
        for (d, row) in self.rows.iter().enumerate() {
            let mut cols: Vec<_> = row.iter().map(|(e, w)| (*e, *w)).collect();
            cols.sort_unstable();
            out.extend(
                cols.into_iter()
                    .map(|(e, w)| (DocRef(d as u32), DocRef(e), w)),
            );
        }
        out
    }

    /// Adds one query's rank-1 update. Cost is `O(k^2)` in the list length
    /// and independent of the pool size.
    pub fn ingest(&mut self, list: &RankedList) -> Result<IngestReport> {
        self.check_list(list)?;
        let repeated_qid = !self.ingested_qids.insert(list.qid.clone());
        if repeated_qid {
            warn!("query {} ingested more than once", list.qid);
        }
        let new_docs = list.docs.iter().filter(|d| !self.is_seen(**d)).count();
        let touched_cells = self.apply(list, |_, _| {});
        Ok(IngestReport {
            new_docs,
            touched_cells,
            repeated_qid,
        })
    }

    /// Ingests a batch of lists, equivalent to ingesting them one by one.
    ///
    /// The whole batch is validated before any list is applied, so a failing
    /// batch leaves the graph unchanged.
    pub fn batch_update(&mut self, lists: &[RankedList]) -> Result<BatchReport> {
        for list in lists {
            self.check_list(list)?;
        }
        let old: Vec<bool> = (0..self.ids.len())
            .map(|i| self.is_seen(DocRef(i as u32)))
            .collect();
        let was_old = |d: DocRef| old.get(d.index()).copied().unwrap_or(false);

        let mut report = BatchReport {
            queries: lists.len(),
            ..BatchReport::default()
        };
        let mut new_docs = HashSet::new();
        for list in lists {
            if !self.ingested_qids.insert(list.qid.clone()) {
                warn!("query {} ingested more than once", list.qid);
            }
            for d in &list.docs {
                if !was_old(*d) {
                    new_docs.insert(*d);
                }
            }
            self.apply(list, |a, b| match (was_old(a), was_old(b)) {
                (true, true) => report.old_old_cells += 1,
                (false, false) => report.new_new_cells += 1,
                _ => report.old_new_cells += 1,
            });
        }
        report.new_docs = new_docs.len();
        Ok(report)
    }

    fn check_list(&self, list: &RankedList) -> Result<()> {
        list.validate()?;
        if let Some(d) = list.docs.iter().find(|d| d.index() >= self.ids.len()) {
            return Err(Error::NotFound(format!(
                "query {}: document {d} is not interned in this graph",
                list.qid
            )));
        }
        Ok(())
    }

    fn apply(&mut self, list: &RankedList, mut on_cell: impl FnMut(DocRef, DocRef)) -> usize {
        let n = self.ids.len();
        if self.rows.len() < n {
            self.rows.resize_with(n, HashMap::new);
            self.df.resize(n, 0);
        }
        let k = list.docs.len() as u64;
        let mut touched = 0;
        for (i, &d) in list.docs.iter().enumerate() {
            let wd = k - i as u64;
            let df = &mut self.df[d.index()];
            if *df == 0 {
                self.seen_docs += 1;
            }
            *df += 1;
            for (j, &e) in list.docs.iter().enumerate().skip(i) {
                let we = k - j as u64;
                let (lo, hi) = if d <= e { (d, e) } else { (e, d) };
                let cell = self.rows[lo.index()].entry(hi.0).or_insert(0);
                if *cell == 0 {
                    self.stored_cells += 1;
                }
                *cell += wd * we;
                on_cell(lo, hi);
                touched += 1;
            }
        }
        self.queries += 1;
        touched
    }

    /// `1 / ln(1 + df(d))`.
    pub fn idf_weight(&self, doc: DocRef) -> Result<f64> {
        self.idf_with(doc, IdfWeighting::Natural)
    }

    pub fn idf_with(&self, doc: DocRef, idf: IdfWeighting) -> Result<f64> {
        match self.df(doc) {
            0 => Err(Error::NotFound(format!("document {doc} has not been ingested"))),
            df => Ok(idf.weight(df)),
        }
    }

    /// `raw(d1, d2) * idf(d1) * idf(d2)`.
    pub fn weighted_affinity(&self, d1: DocRef, d2: DocRef) -> Result<f64> {
        self.weighted_affinity_with(d1, d2, IdfWeighting::Natural)
    }

    pub fn weighted_affinity_with(&self, d1: DocRef, d2: DocRef, idf: IdfWeighting) -> Result<f64> {
        let w1 = self.idf_with(d1, idf)?;
        let w2 = self.idf_with(d2, idf)?;
        // the idf product commutes exactly, so the result is symmetric
        Ok(self.raw(d1, d2) as f64 * (w1 * w2))
    }

    /// Top-`n` neighbors of `doc` inside `pool` under `cfg` propagation.
    pub fn neighbors(
        &self,
        doc: DocRef,
        n: usize,
        pool: &[DocRef],
        cfg: &PropagationConfig,
    ) -> Result<Vec<(DocRef, f64)>> {
        if !self.is_seen(doc) {
            return Err(Error::NotFound(format!("document {doc} has not been ingested")));
        }
        if !pool.contains(&doc) {
            return Err(Error::NotFound(format!("document {doc} is not in the pool")));
        }
        let local = propagate(self, pool, cfg)?;
        Ok(local.neighbors(doc, n))
    }

    /// Size summary. `estimated_bytes` is
    /// `ENTRY_BYTES * stored_cells + DOC_BYTES * interned_docs + id_bytes`,
    /// i.e. the sparse triangle plus the id maps and nothing else.
    pub fn stats(&self) -> GraphStats {
        GraphStats {
            doc_count: self.seen_docs,
            edge_count: self.stored_cells - self.diagonal_cells(),
            queries_ingested: self.queries,
            estimated_bytes: ENTRY_BYTES * self.stored_cells
                + DOC_BYTES * self.ids.len()
                + self.ids.id_bytes(),
        }
    }

    fn diagonal_cells(&self) -> usize {
        // every ingested doc has a strictly positive diagonal
        self.seen_docs
    }

    pub(crate) fn from_parts(
        ids: Interner,
        rows: Vec<HashMap<u32, u64>>,
        df: Vec<u32>,
        queries: u64,
    ) -> Self {
        let seen_docs = df.iter().filter(|&&n| n > 0).count();
        let stored_cells = rows.iter().map(HashMap::len).sum();
        Self {
            ids,
            rows,
            df,
            queries,
            seen_docs,
            stored_cells,
            ingested_qids: HashSet::new(),
        }
    }

    pub(crate) fn raw_rows(&self) -> &[HashMap<u32, u64>] {
        &self.rows
    }

    pub(crate) fn df_table(&self) -> &[u32] {
        &self.df
    }
}

/// Graph equality is over the persisted state: ids, cells, df and query count.
impl PartialEq for AffinityGraph {
    fn eq(&self, other: &Self) -> bool {
        let n = self.ids.len().max(other.ids.len());
        let padded = |g: &Self, i: usize| g.df.get(i).copied().unwrap_or(0);
        self.ids == other.ids
            && self.queries == other.queries
            && (0..n).all(|i| padded(self, i) == padded(other, i))
            && self.cells() == other.cells()
    }
}
