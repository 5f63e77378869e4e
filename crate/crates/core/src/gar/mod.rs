//! Sliding-window reranking and its graph-adaptive variant at a fixed
//! reranker-call budget.
//!
//! Windows move top-down. The first window is the head of the first-stage
//! pool. Every later window holds the `w - s` documents carried over from
//! the previous one plus `s` freshly drawn ones; after the reranker orders
//! it, the top `s` are committed to the final ranking and the rest carry
//! over. The plain sliding window draws strictly in first-stage order.
//!
//! The adaptive variant keeps a frontier of graph neighbors of the documents
//! the reranker placed on top and draws alternately from the frontier and
//! the first-stage residual. When the first window yields any frontier, its
//! top `s` are not committed yet: they go straight into the second window
//! against their neighbors, and the rest of the first window is queued ahead
//! of the residual. With no graph evidence the two variants coincide.
//!
//! All modes issue `ceil((n - w) / s) + 1` windows for a pool of `n`
//! documents (one window when `n <= w`).

mod neighbors;
mod stream;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{DocRef, Interner, QueryRecord, RankedList};
use crate::error::{Error, Result};
use crate::graph::PropagationConfig;
use crate::rerank::{check_permutation, Reranker, WindowRequest};

pub use neighbors::{
    query_seed, FileGraph, L2gNeighbors, LocalNeighbors, NeighborSource, NoNeighbors, RandomNeighbors,
};
pub use stream::{
    order_stream, run_sliding_parallel, run_stream, write_provenance, OrderPolicy, QueryRun,
    StreamRun,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sliding,
    GarL2g,
    GarFile,
    GarRandom,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Sliding, Mode::GarL2g, Mode::GarFile, Mode::GarRandom];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sliding => "sliding",
            Mode::GarL2g => "gar_l2g",
            Mode::GarFile => "gar_file",
            Mode::GarRandom => "gar_random",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sliding" => Ok(Mode::Sliding),
            "gar_l2g" | "l2g" => Ok(Mode::GarL2g),
            "gar_file" => Ok(Mode::GarFile),
            "gar_random" => Ok(Mode::GarRandom),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// How the `s` fresh slots of a window are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillPolicy {
    /// Frontier and first-stage residual take turns, frontier first.
    #[default]
    Alternate,
    /// Drain the frontier before touching the residual.
    FrontierFirst,
}

impl FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "alternate" => Ok(FillPolicy::Alternate),
            "frontier-first" => Ok(FillPolicy::FrontierFirst),
            _ => Err(Error::Config(format!("unknown fill policy {s:?}"))),
        }
    }
}

/// Direction of the plain sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlideDirection {
    /// From the head of the list towards the tail.
    #[default]
    TopDown,
    /// Classic tail-to-head pass; sliding mode only.
    BottomUp,
}

impl FromStr for SlideDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "top-down" => Ok(SlideDirection::TopDown),
            "bottom-up" => Ok(SlideDirection::BottomUp),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarConfig {
    pub window: usize,
    pub step: usize,
    pub pool_size: usize,
    pub mode: Mode,
    pub propagation: PropagationConfig,
    /// Neighbors pushed to the frontier per expanded document.
    pub neighbors_per_doc: usize,
    pub seed: u64,
    pub fill: FillPolicy,
    pub direction: SlideDirection,
}

impl Default for GarConfig {
    fn default() -> Self {
        Self {
            window: 20,
            step: 10,
            pool_size: 100,
            mode: Mode::Sliding,
            propagation: PropagationConfig::default(),
            neighbors_per_doc: 10,
            seed: 0,
            fill: FillPolicy::default(),
            direction: SlideDirection::default(),
        }
    }
}

impl GarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.step == 0 || self.pool_size == 0 {
            return Err(Error::Config("window, step and pool size must be positive".into()));
        }
        if self.step > self.window {
            return Err(Error::Config(format!(
                "step {} exceeds window {}",
                self.step, self.window
            )));
        }
        if self.neighbors_per_doc == 0 {
            return Err(Error::Config("neighbors per document must be positive".into()));
        }
        if self.direction == SlideDirection::BottomUp && self.mode != Mode::Sliding {
            return Err(Error::Config("bottom-up windows are only defined for sliding mode".into()));
        }
        self.propagation.validate()
    }

    /// Window calls for a pool of `n` documents.
    pub fn budget_for(&self, n: usize) -> usize {
        budget(n, self.window, self.step)
    }
}

/// `ceil((n - w) / s) + 1`, or 1 when the pool fits in one window.
pub fn budget(n: usize, window: usize, step: usize) -> usize {
    if n <= window {
        1
    } else {
        (n - window).div_ceil(step) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    FirstStage,
    GraphFrontier,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::FirstStage => "first_stage",
            Provenance::GraphFrontier => "graph_frontier",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    /// Final order with synthetic scores `c - r + 1`.
    pub ranking: RankedList,
    pub window_calls: usize,
    /// Parallel to `ranking.docs`.
    pub provenance: Vec<Provenance>,
}

/// Plain sliding window over `pool` (already truncated to `c`).
pub fn sliding_window(
    query: &QueryRecord,
    pool: &RankedList,
    reranker: &mut dyn Reranker,
    ids: &Interner,
    cfg: &GarConfig,
) -> Result<RerankResult> {
    cfg.validate()?;
    match cfg.direction {
        SlideDirection::TopDown => run_windows(query, pool, &NoNeighbors, reranker, ids, cfg),
        SlideDirection::BottomUp => bottom_up(query, pool, reranker, ids, cfg),
    }
}

/// Graph-adaptive reranking; `source` supplies neighbors for `cfg.mode`.
pub fn gar_rerank(
    query: &QueryRecord,
    pool: &RankedList,
    source: &dyn NeighborSource,
    reranker: &mut dyn Reranker,
    ids: &Interner,
    cfg: &GarConfig,
) -> Result<RerankResult> {
    cfg.validate()?;
    if cfg.direction != SlideDirection::TopDown {
        return Err(Error::Config("adaptive reranking slides top-down".into()));
    }
    run_windows(query, pool, source, reranker, ids, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrontierEntry {
    key: f64,
    doc: DocRef,
}

impl Eq for FrontierEntry {}

impl Ord for FrontierEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on key, then smaller handle first
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.doc.cmp(&self.doc))
    }
}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-priority frontier with lazy deletion; duplicate pushes keep the
/// larger key.
#[derive(Default)]
struct Frontier {
    heap: BinaryHeap<FrontierEntry>,
    best: HashMap<DocRef, f64>,
}

impl Frontier {
    fn push(&mut self, doc: DocRef, key: f64) {
        let slot = self.best.entry(doc).or_insert(f64::NEG_INFINITY);
        if key > *slot {
            *slot = key;
            self.heap.push(FrontierEntry { key, doc });
        }
    }

    fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    fn pop(&mut self, taken: &HashSet<DocRef>) -> Option<DocRef> {
        while let Some(FrontierEntry { key, doc }) = self.heap.pop() {
            if taken.contains(&doc) || self.best.get(&doc) != Some(&key) {
                continue;
            }
            self.best.remove(&doc);
            return Some(doc);
        }
        None
    }
}

struct Draw<'a> {
    first_stage: &'a [DocRef],
    cursor: usize,
    taken: HashSet<DocRef>,
    /// Already windowed docs drawn again before the first-stage cursor.
    requeued: VecDeque<DocRef>,
    frontier: Frontier,
    provenance: HashMap<DocRef, Provenance>,
}

impl Draw<'_> {
    fn next_residual(&mut self) -> Option<DocRef> {
        if let Some(d) = self.requeued.pop_front() {
            return Some(d);
        }
        while let Some(&d) = self.first_stage.get(self.cursor) {
            self.cursor += 1;
            if self.taken.insert(d) {
                self.provenance.insert(d, Provenance::FirstStage);
                return Some(d);
            }
        }
        None
    }

    fn fill_residual(&mut self, slots: usize, out: &mut Vec<DocRef>) {
        for _ in 0..slots {
            match self.next_residual() {
                Some(d) => out.push(d),
                None => break,
            }
        }
    }

    fn next_frontier(&mut self) -> Option<DocRef> {
        let d = self.frontier.pop(&self.taken)?;
        self.taken.insert(d);
        self.provenance.insert(d, Provenance::GraphFrontier);
        Some(d)
    }

    fn fill(&mut self, slots: usize, policy: FillPolicy, out: &mut Vec<DocRef>) {
        let mut frontier_turn = true;
        for _ in 0..slots {
            let first = if frontier_turn || policy == FillPolicy::FrontierFirst {
                self.next_frontier().or_else(|| self.next_residual())
            } else {
                self.next_residual().or_else(|| self.next_frontier())
            };
            match first {
                Some(d) => out.push(d),
                None => break,
            }
            frontier_turn = !frontier_turn;
        }
    }

    fn expand(&mut self, seeds: &[DocRef], local: &mut dyn LocalNeighbors, per_doc: usize, expanded: &mut HashSet<DocRef>) {
        for &seed in seeds {
            if !expanded.insert(seed) {
                continue;
            }
            for (d, w) in local.neighbors(seed, per_doc) {
                if !self.taken.contains(&d) {
                    self.frontier.push(d, w);
                }
            }
        }
    }
}

fn run_windows(
    query: &QueryRecord,
    pool: &RankedList,
    source: &dyn NeighborSource,
    reranker: &mut dyn Reranker,
    ids: &Interner,
    cfg: &GarConfig,
) -> Result<RerankResult> {
    let docs = &pool.docs[..pool.docs.len().min(cfg.pool_size)];
    if docs.is_empty() {
        return Err(Error::Input(format!("query {}: empty pool", query.qid)));
    }
    let windows = budget(docs.len(), cfg.window, cfg.step);
    let mut local = source.local(query, docs)?;

    let mut draw = Draw {
        first_stage: docs,
        cursor: 0,
        taken: HashSet::with_capacity(docs.len()),
        requeued: VecDeque::new(),
        frontier: Frontier::default(),
        provenance: HashMap::with_capacity(docs.len()),
    };
    let mut expanded = HashSet::new();
    let mut committed: Vec<DocRef> = Vec::with_capacity(docs.len());

    let mut window: Vec<DocRef> = Vec::with_capacity(cfg.window);
    draw.fill_residual(cfg.window, &mut window);

    for call in 0..windows {
        let ordered = reranker.rerank(&WindowRequest {
            query,
            docs: &window,
            ids,
        })?;
        check_permutation(&window, &ordered)
            .map_err(|e| Error::Reranker(format!("{} reranker: {e}", reranker.name())))?;

        if call + 1 == windows {
            committed.extend(ordered);
            break;
        }
        let split = cfg.step.min(ordered.len());
        let (top, rest) = ordered.split_at(split);
        draw.expand(top, local.as_mut(), cfg.neighbors_per_doc, &mut expanded);

        if call == 0 && !draw.frontier.is_empty() {
            // Leaders of the first window meet their own graph neighbors
            // before anything is committed; the rest go back to the queue.
            draw.requeued.extend(rest.iter().copied());
            window = top.to_vec();
            draw.fill(cfg.window - window.len(), cfg.fill, &mut window);
        } else {
            committed.extend_from_slice(top);
            window = rest.to_vec();
            draw.fill(cfg.step, cfg.fill, &mut window);
        }
    }

    // Anything never windowed follows in first-stage order.
    while let Some(d) = draw.next_residual() {
        committed.push(d);
    }

    let provenance = committed
        .iter()
        .map(|d| draw.provenance.get(d).copied().unwrap_or(Provenance::FirstStage))
        .collect();
    Ok(RerankResult {
        ranking: scored(query, pool, committed, cfg)?,
        window_calls: windows,
        provenance,
    })
}

fn bottom_up(
    query: &QueryRecord,
    pool: &RankedList,
    reranker: &mut dyn Reranker,
    ids: &Interner,
    cfg: &GarConfig,
) -> Result<RerankResult> {
    let mut working = pool.docs[..pool.docs.len().min(cfg.pool_size)].to_vec();
    if working.is_empty() {
        return Err(Error::Input(format!("query {}: empty pool", query.qid)));
    }
    let n = working.len();
    let windows = budget(n, cfg.window, cfg.step);
    let mut end = n;
    for _ in 0..windows {
        let start = end.saturating_sub(cfg.window);
        let ordered = reranker.rerank(&WindowRequest {
            query,
            docs: &working[start..end],
            ids,
        })?;
        check_permutation(&working[start..end], &ordered)?;
        working[start..end].copy_from_slice(&ordered);
        end = end.saturating_sub(cfg.step).max(cfg.window.min(n));
    }
    let provenance = vec![Provenance::FirstStage; n];
    Ok(RerankResult {
        ranking: scored(query, pool, working, cfg)?,
        window_calls: windows,
        provenance,
    })
}

fn scored(query: &QueryRecord, pool: &RankedList, docs: Vec<DocRef>, cfg: &GarConfig) -> Result<RankedList> {
    let c = cfg.pool_size.max(docs.len());
    let scores = (0..docs.len()).map(|r| (c - r) as f64).collect();
    RankedList::new(query.qid.clone(), docs, pool.tag.clone())?.with_scores(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Qrels;
    use crate::graph::AffinityGraph;
    use crate::rerank::{IdentityReranker, OracleConfig, OracleReranker};

    fn pool(n: usize) -> (Interner, RankedList) {
        let mut ids = Interner::new();
        let docs = (0..n).map(|i| ids.intern(&format!("d{i}")).unwrap()).collect();
        (ids, RankedList::new("q", docs, "bm25").unwrap())
    }

    #[test]
    fn budget_formula() {
        assert_eq!(budget(100, 20, 10), 9);
        assert_eq!(budget(1000, 20, 10), 99);
        assert_eq!(budget(20, 20, 10), 1);
        assert_eq!(budget(5, 20, 10), 1);
        assert_eq!(budget(21, 20, 10), 2);
        assert_eq!(budget(30, 20, 10), 2);
        assert_eq!(budget(31, 20, 10), 3);
    }

    #[test]
    fn sliding_counts_and_identity() {
        let (ids, list) = pool(100);
        let q = QueryRecord::new("q");
        let mut r = IdentityReranker::new();
        let cfg = GarConfig::default();
        let out = sliding_window(&q, &list, &mut r, &ids, &cfg).unwrap();
        assert_eq!(out.window_calls, 9);
        assert_eq!(r.calls(), 9);
        assert_eq!(out.ranking.docs, list.docs);
        assert_eq!(out.ranking.score_at(0), 100.0);
        assert_eq!(out.ranking.score_at(99), 1.0);

        let (ids, list) = pool(1000);
        let cfg = GarConfig {
            pool_size: 1000,
            ..GarConfig::default()
        };
        let out = sliding_window(&q, &list, &mut IdentityReranker::new(), &ids, &cfg).unwrap();
        assert_eq!(out.window_calls, 99);
        assert_eq!(out.ranking.docs, list.docs);
    }

    #[test]
    fn bottom_up_budget_and_identity() {
        let (ids, list) = pool(100);
        let q = QueryRecord::new("q");
        let cfg = GarConfig {
            direction: SlideDirection::BottomUp,
            ..GarConfig::default()
        };
        let mut r = IdentityReranker::new();
        let out = sliding_window(&q, &list, &mut r, &ids, &cfg).unwrap();
        assert_eq!(out.window_calls, 9);
        assert_eq!(r.calls(), 9);
        assert_eq!(out.ranking.docs, list.docs);
    }

    #[test]
    fn bottom_up_lifts_deep_relevant_doc() {
        let (ids, list) = pool(100);
        let mut qrels = Qrels::new();
        qrels.insert("q", "d95", 1);
        let q = QueryRecord::new("q");
        let mut oracle = OracleReranker::new(OracleConfig {
            qrels: qrels.clone(),
            noise_swaps: 0,
            seed: 0,
        });
        let cfg = GarConfig {
            direction: SlideDirection::BottomUp,
            ..GarConfig::default()
        };
        let out = sliding_window(&q, &list, &mut oracle, &ids, &cfg).unwrap();
        assert_eq!(ids.resolve(out.ranking.docs[0]), Some("d95"));

        // top-down commits ten documents per window before d95 is drawn
        let mut oracle = OracleReranker::new(OracleConfig {
            qrels,
            noise_swaps: 0,
            seed: 0,
        });
        let out = sliding_window(&q, &list, &mut oracle, &ids, &GarConfig::default()).unwrap();
        let pos = out
            .ranking
            .docs
            .iter()
            .position(|d| ids.resolve(*d) == Some("d95"))
            .unwrap();
        assert_eq!(pos, 80);
    }

    #[test]
    fn config_validation() {
        let bad = GarConfig {
            step: 30,
            ..GarConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = GarConfig {
            mode: Mode::GarL2g,
            direction: SlideDirection::BottomUp,
            ..GarConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!("gar-l2g".parse::<Mode>().is_ok());
        assert!("nope".parse::<Mode>().is_err());
    }

    #[test]
    fn empty_graph_matches_sliding() {
        let (ids, list) = pool(57);
        let graph = AffinityGraph::with_interner(ids.clone());
        let q = QueryRecord::new("q");
        let cfg = GarConfig {
            mode: Mode::GarL2g,
            ..GarConfig::default()
        };
        let src = L2gNeighbors {
            graph: &graph,
            propagation: cfg.propagation.clone(),
        };
        let mut qrels = Qrels::new();
        for i in (0..57).step_by(7) {
            qrels.insert("q", &format!("d{i}"), 1);
        }
        let make = || {
            OracleReranker::new(OracleConfig {
                qrels: qrels.clone(),
                noise_swaps: 1,
                seed: 9,
            })
        };
        let gar = gar_rerank(&q, &list, &src, &mut make(), &ids, &cfg).unwrap();
        let slide = sliding_window(&q, &list, &mut make(), &ids, &cfg).unwrap();
        assert_eq!(gar, slide);
        assert!(gar.provenance.iter().all(|p| *p == Provenance::FirstStage));
    }

    #[test]
    fn held_leaders_meet_their_neighbors() {
        // d0 links to d50 in a file graph. The first window is d0..d19; its
        // leaders d0..d9 are held and meet d50 in the second window.
        let (mut ids, list) = pool(60);
        let fg = FileGraph::from_edge_list("d0 d50 1.0\n".as_bytes(), &mut ids).unwrap();
        let q = QueryRecord::new("q");
        let cfg = GarConfig {
            mode: Mode::GarFile,
            fill: FillPolicy::FrontierFirst,
            ..GarConfig::default()
        };
        let d = |i: usize| ids.get(&format!("d{i}")).unwrap();

        struct Spy(Vec<Vec<DocRef>>);
        impl Reranker for Spy {
            fn rerank(&mut self, r: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
                self.0.push(r.docs.to_vec());
                Ok(r.docs.to_vec())
            }
            fn calls(&self) -> u64 {
                self.0.len() as u64
            }
            fn name(&self) -> &str {
                "spy"
            }
        }

        let mut spy = Spy(Vec::new());
        let out = gar_rerank(&q, &list, &fg, &mut spy, &ids, &cfg).unwrap();
        assert_eq!(spy.0.len(), budget(60, 20, 10));
        assert_eq!(spy.0[0], (0..20).map(d).collect::<Vec<_>>());
        let second: Vec<DocRef> = (0..10).map(d).chain([d(50)]).chain((10..19).map(d)).collect();
        assert_eq!(spy.0[1], second);
        // identity keeps the leaders on top; d50 follows them
        assert_eq!(out.ranking.docs[..11], second[..11]);
        assert_eq!(out.provenance[10], Provenance::GraphFrontier);

        let mut sorted = out.ranking.docs.clone();
        sorted.sort();
        let mut expected = list.docs.clone();
        expected.sort();
        assert_eq!(sorted, expected);

        // a reranker that prefers d50 lifts it to the top, which a plain
        // top-down slide cannot do
        let mut qrels = Qrels::new();
        qrels.insert("q", "d50", 1);
        let oracle = || {
            OracleReranker::new(OracleConfig {
                qrels: qrels.clone(),
                noise_swaps: 0,
                seed: 0,
            })
        };
        let gar = gar_rerank(&q, &list, &fg, &mut oracle(), &ids, &cfg).unwrap();
        assert_eq!(gar.ranking.docs[0], d(50));
        let slide = sliding_window(&q, &list, &mut oracle(), &ids, &cfg).unwrap();
        assert_eq!(slide.ranking.docs.iter().position(|x| *x == d(50)), Some(40));
    }

    #[test]
    fn bad_reranker_output_is_rejected() {
        struct Dropper;
        impl Reranker for Dropper {
            fn rerank(&mut self, r: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
                Ok(r.docs[1..].to_vec())
            }
            fn calls(&self) -> u64 {
                0
            }
            fn name(&self) -> &str {
                "dropper"
            }
        }
        let (ids, list) = pool(30);
        let q = QueryRecord::new("q");
        let err = sliding_window(&q, &list, &mut Dropper, &ids, &GarConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Reranker(_)));
    }
}
