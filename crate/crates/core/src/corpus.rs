//! Document and query identity, plus reading and writing the standard TREC
//! exchange formats (run files and qrels).
//!
//! Documents are interned into dense [`DocRef`] handles so the graph and the
//! reranking harness can work on integers. The [`Interner`] is the only place
//! that knows the original string ids.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use log::warn;

use crate::error::{Error, Result};

/// Dense handle of an interned document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocRef(pub u32);

impl DocRef {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DocRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Bijective map between external document ids and contiguous handles.
///
/// Handles are assigned from 0 in first-seen order and never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    ids: Vec<String>,
    index: HashMap<String, DocRef>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, external_id: &str) -> Result<DocRef> {
        if external_id.is_empty() {
            return Err(Error::Input("document id must not be empty".into()));
        }
        if let Some(&doc) = self.index.get(external_id) {
            return Ok(doc);
        }
        let handle = u32::try_from(self.ids.len())
            .map_err(|_| Error::Input("too many distinct documents".into()))?;
        let doc = DocRef(handle);
        self.ids.push(external_id.to_owned());
        self.index.insert(external_id.to_owned(), doc);
        Ok(doc)
    }

    pub fn get(&self, external_id: &str) -> Option<DocRef> {
        self.index.get(external_id).copied()
    }

    pub fn resolve(&self, doc: DocRef) -> Option<&str> {
        self.ids.get(doc.index()).map(String::as_str)
    }

    /// Like [`resolve`](Self::resolve) but treats an unknown handle as an error.
    pub fn external_id(&self, doc: DocRef) -> Result<&str> {
        self.resolve(doc)
            .ok_or_else(|| Error::NotFound(format!("document handle {doc}")))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// External ids in handle order.
    pub fn ids(&self) -> impl ExactSizeIterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    /// Total bytes of the stored id strings.
    pub fn id_bytes(&self) -> usize {
        self.ids.iter().map(String::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub qid: String,
    pub text: Option<String>,
}

impl QueryRecord {
    pub fn new(qid: impl Into<String>) -> Self {
        Self {
            qid: qid.into(),
            text: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// One query's ordered candidate list, rank 1 first.
///
/// `scores`, when present, runs parallel to `docs` and carries the
/// first-stage (or synthetic) score of each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub qid: String,
    pub docs: Vec<DocRef>,
    pub tag: String,
    pub scores: Option<Vec<f64>>,
}

impl RankedList {
    /// Builds a list, rejecting empty or duplicated candidates.
    pub fn new(qid: impl Into<String>, docs: Vec<DocRef>, tag: impl Into<String>) -> Result<Self> {
        let list = Self {
            qid: qid.into(),
            docs,
            tag: tag.into(),
            scores: None,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.docs.len() {
            return Err(Error::Input(format!(
                "query {}: {} scores for {} documents",
                self.qid,
                scores.len(),
                self.docs.len()
            )));
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.docs.is_empty() {
            return Err(Error::Input(format!("query {}: empty ranked list", self.qid)));
        }
        let mut seen = HashSet::with_capacity(self.docs.len());
        for doc in &self.docs {
            if !seen.insert(*doc) {
                return Err(Error::Input(format!(
                    "query {}: duplicate document {doc}",
                    self.qid
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// The first `min(c, len)` entries as a new list.
    pub fn truncated(&self, c: usize) -> RankedList {
        let n = c.min(self.docs.len());
        RankedList {
            qid: self.qid.clone(),
            docs: self.docs[..n].to_vec(),
            tag: self.tag.clone(),
            scores: self.scores.as_ref().map(|s| s[..n].to_vec()),
        }
    }

    /// Score emitted for the entry at 0-based `position`.
    ///
    /// Falls back to `len - position` when the list carries no scores.
    pub fn score_at(&self, position: usize) -> f64 {
        match &self.scores {
            Some(scores) => scores[position],
            None => (self.docs.len() - position) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEntry {
    pub query: QueryRecord,
    pub list: RankedList,
}

/// Queries in processing order, each paired with its candidate list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryStream {
    entries: Vec<QueryEntry>,
}

impl QueryStream {
    pub fn new(entries: Vec<QueryEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for entry in &entries {
            if entry.query.qid != entry.list.qid {
                return Err(Error::Input(format!(
                    "query record {} paired with list for {}",
                    entry.query.qid, entry.list.qid
                )));
            }
            if !seen.insert(entry.query.qid.as_str()) {
                return Err(Error::Input(format!(
                    "query {} appears twice in stream",
                    entry.query.qid
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Wraps ranked lists, attaching query text from `texts` when available.
    pub fn from_lists(lists: Vec<RankedList>, texts: &HashMap<String, String>) -> Result<Self> {
        let entries = lists
            .into_iter()
            .map(|list| {
                let mut query = QueryRecord::new(list.qid.clone());
                query.text = texts.get(&list.qid).cloned();
                QueryEntry { query, list }
            })
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[QueryEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<QueryEntry> {
        self.entries
    }

    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.entries.iter().map(|e| &e.list)
    }

    /// Reorders the stream by entry indices; `order` must be a permutation.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.entries.len() {
            return Err(Error::Input("order is not a permutation of the stream".into()));
        }
        let mut used = vec![false; order.len()];
        let mut entries = Vec::with_capacity(order.len());
        for &i in order {
            if i >= used.len() || std::mem::replace(&mut used[i], true) {
                return Err(Error::Input("order is not a permutation of the stream".into()));
            }
            entries.push(self.entries[i].clone());
        }
        Ok(Self { entries })
    }
}

impl Deref for QueryStream {
    type Target = [QueryEntry];

    fn deref(&self) -> &[QueryEntry] {
        &self.entries
    }
}

/// Parses a TREC run (`qid Q0 docid rank score tag`, any whitespace).
///
/// Lists are returned in order of first appearance of their qid. A qid may
/// reappear in a later block as long as its ranks keep increasing.
pub fn parse_run_file<R: BufRead>(reader: R, ids: &mut Interner) -> Result<Vec<RankedList>> {
    struct Pending {
        list: RankedList,
        scores: Vec<f64>,
        last_rank: u64,
        members: HashSet<DocRef>,
    }

    let mut order: Vec<Pending> = Vec::new();
    let mut by_qid: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _q0, docid, rank, score, tag] = fields[..] else {
            return Err(Error::parse(
                lineno,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        };
        let rank: u64 = rank
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad score {score:?}")))?;
        let doc = ids
            .intern(docid)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;

        let slot = match by_qid.get(qid) {
            Some(&slot) => {
                let pending = &order[slot];
                if rank <= pending.last_rank {
                    return Err(Error::parse(
                        lineno,
                        format!(
                            "rank {rank} for query {qid} does not follow rank {}",
                            pending.last_rank
                        ),
                    ));
                }
                slot
            }
            None => {
                by_qid.insert(qid.to_owned(), order.len());
                order.push(Pending {
                    list: RankedList {
                        qid: qid.to_owned(),
                        docs: Vec::new(),
                        tag: tag.to_owned(),
                        scores: None,
                    },
                    scores: Vec::new(),
                    last_rank: 0,
                    members: HashSet::new(),
                });
                order.len() - 1
            }
        };
        let pending = &mut order[slot];
        if !pending.members.insert(doc) {
            return Err(Error::parse(
                lineno,
                format!("duplicate document {docid} for query {qid}"),
            ));
        }
        pending.list.docs.push(doc);
        pending.scores.push(score);
        pending.last_rank = rank;
    }

    Ok(order
        .into_iter()
        .map(|p| RankedList {
            scores: Some(p.scores),
            ..p.list
        })
        .collect())
}

/// Writes lists as `qid Q0 docid rank score tag`, single-space separated,
/// ranks from 1 and scores with six decimals.
///
/// `tag` overrides each list's own tag when given.
pub fn write_run_file<W: Write>(
    mut out: W,
    lists: &[RankedList],
    ids: &Interner,
    tag: Option<&str>,
) -> Result<()> {
    for list in lists {
        let tag = tag.unwrap_or(&list.tag);
        for (pos, doc) in list.docs.iter().enumerate() {
            let docid = ids.external_id(*doc)?;
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.qid,
                docid,
                pos + 1,
                list.score_at(pos),
                tag
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Graded relevance judgments keyed by `(qid, docid)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: HashMap<String, HashMap<String, u32>>,
    duplicates: usize,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment, returning the previous grade if one was replaced.
    pub fn insert(&mut self, qid: &str, docid: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(qid.to_owned())
            .or_default()
            .insert(docid.to_owned(), grade)
    }

    /// Grade of a pair; unjudged pairs are grade 0.
    pub fn grade(&self, qid: &str, docid: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|docs| docs.get(docid))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, qid: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Number of lines that overwrote an earlier judgment while parsing.
    pub fn duplicate_lines(&self) -> usize {
        self.duplicates
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Parses qrels lines `qid 0 docid grade`. Later duplicates win.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _iter, docid, grade] = fields[..] else {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad grade {grade:?}")))?;
        if grade < 0 {
            return Err(Error::parse(lineno, format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(lineno, format!("grade {grade} out of range")))?;
        if qrels.insert(qid, docid, grade).is_some() {
            qrels.duplicates += 1;
        }
    }
    if qrels.duplicates > 0 {
        warn!("qrels: {} duplicate judgments overwritten", qrels.duplicates);
    }
    Ok(qrels)
}

/// Parses an optional query-text file of `qid<TAB>text` lines.
pub fn parse_queries<R: BufRead>(reader: R) -> Result<HashMap<String, String>> {
    let mut texts = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((qid, text)) = line.split_once('\t') else {
            return Err(Error::parse(i + 1, "expected qid<TAB>text"));
        };
        texts.insert(qid.trim().to_owned(), text.trim().to_owned());
    }
    Ok(texts)
}

/// A cross-query overlap statistic over top-c pools, in percent.
pub trait OverlapStatistic {
    fn percent(&self, pools: &[&[DocRef]]) -> f64;
}

/// Share of candidate occurrences that also appear in at least one other
/// query's pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct SharedOccurrence;

impl OverlapStatistic for SharedOccurrence {
    fn percent(&self, pools: &[&[DocRef]]) -> f64 {
        let mut counts: HashMap<DocRef, usize> = HashMap::new();
        let mut total = 0usize;
        for pool in pools {
            total += pool.len();
            for doc in *pool {
                *counts.entry(*doc).or_default() += 1;
            }
        }
        if total == 0 {
            return 0.0;
        }
        let shared: usize = counts.values().filter(|&&n| n >= 2).sum();
        100.0 * shared as f64 / total as f64
    }
}

/// Top-c overlap of a set of queries under the default statistic.
pub fn topc_overlap<'a, I>(lists: I, c: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a RankedList>,
{
    topc_overlap_with(lists, c, &SharedOccurrence)
}

pub fn topc_overlap_with<'a, I, S>(lists: I, c: usize, stat: &S) -> Result<f64>
where
    I: IntoIterator<Item = &'a RankedList>,
    S: OverlapStatistic + ?Sized,
{
    if c == 0 {
        return Err(Error::Input("pool size c must be positive".into()));
    }
    let pools: Vec<&[DocRef]> = lists
        .into_iter()
        .map(|l| &l.docs[..c.min(l.docs.len())])
        .collect();
    if pools.is_empty() {
        return Err(Error::Input("overlap of an empty stream is undefined".into()));
    }
    Ok(stat.percent(&pools))
}
