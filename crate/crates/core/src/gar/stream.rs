//! Running a query stream through the reranker with L2G feedback, and
//! reordering streams for order-perturbation studies.

use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{gar_rerank, sliding_window, FileGraph, GarConfig, L2gNeighbors, Mode, RandomNeighbors, RerankResult};
use crate::corpus::{DocRef, Interner, QueryRecord, QueryStream, RankedList};
use crate::error::{Error, Result};
use crate::graph::AffinityGraph;
use crate::rerank::Reranker;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRun {
    pub qid: String,
    pub result: RerankResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamRun {
    pub queries: Vec<QueryRun>,
    pub total_calls: usize,
}

impl StreamRun {
    pub fn rankings(&self) -> Vec<RankedList> {
        self.queries.iter().map(|q| q.result.ranking.clone()).collect()
    }
}

fn wrap(qid: &str, e: Error) -> Error {
    Error::Query {
        qid: qid.to_owned(),
        source: Box::new(e),
    }
}

/// Reranks each query in stream order with the current graph, then ingests
/// the produced ranking (no extra reranker calls).
///
/// The stream's handles must come from `graph`'s interner. `file_graph` is
/// required for [`Mode::GarFile`].
pub fn run_stream(
    stream: &QueryStream,
    cfg: &GarConfig,
    reranker: &mut dyn Reranker,
    graph: &mut AffinityGraph,
    file_graph: Option<&FileGraph>,
) -> Result<StreamRun> {
    cfg.validate()?;
    if cfg.mode == Mode::GarFile && file_graph.is_none() {
        return Err(Error::Config("gar_file mode needs a loaded affinity graph".into()));
    }
    let random = RandomNeighbors { seed: cfg.seed };
    let mut run = StreamRun::default();
    for entry in stream.iter() {
        let qid = entry.query.qid.as_str();
        let pool = entry.list.truncated(cfg.pool_size);
        let result = {
            let ids = graph.interner();
            match cfg.mode {
                Mode::Sliding => sliding_window(&entry.query, &pool, reranker, ids, cfg),
                Mode::GarL2g => {
                    let src = L2gNeighbors {
                        graph,
                        propagation: cfg.propagation.clone(),
                    };
                    gar_rerank(&entry.query, &pool, &src, reranker, ids, cfg)
                }
                Mode::GarFile => {
                    let src = file_graph.expect("checked above");
                    gar_rerank(&entry.query, &pool, src, reranker, ids, cfg)
                }
                Mode::GarRandom => gar_rerank(&entry.query, &pool, &random, reranker, ids, cfg),
            }
        }
        .map_err(|e| wrap(qid, e))?;
        graph
            .ingest(&result.ranking)
            .map_err(|e| wrap(qid, e))?;
        run.total_calls += result.window_calls;
        run.queries.push(QueryRun {
            qid: qid.to_owned(),
            result,
        });
    }
    Ok(run)
}

/// Sliding-mode stream run with queries spread over `threads` workers.
///
/// Each query gets its own reranker from `make`. Results are ingested into
/// `graph` afterwards in stream order, so the final graph matches the
/// sequential run. Adaptive modes depend on the order of graph feedback and
/// are rejected.
pub fn run_sliding_parallel<F>(
    stream: &QueryStream,
    cfg: &GarConfig,
    make: F,
    graph: &mut AffinityGraph,
    threads: usize,
) -> Result<StreamRun>
where
    F: Fn(&QueryRecord) -> Result<Box<dyn Reranker + Send>> + Sync,
{
    cfg.validate()?;
    if cfg.mode != Mode::Sliding {
        return Err(Error::Config(format!(
            "parallel execution is only allowed in sliding mode, not {}",
            cfg.mode
        )));
    }
    let entries = stream.entries();
    let slots: Vec<Mutex<Option<Result<RerankResult>>>> =
        entries.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let ids: &Interner = graph.interner();
    thread::scope(|scope| {
        for _ in 0..threads.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let pool = entry.list.truncated(cfg.pool_size);
                let out = make(&entry.query).and_then(|mut r| {
                    sliding_window(&entry.query, &pool, r.as_mut(), ids, cfg)
                });
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut run = StreamRun::default();
    for (entry, slot) in entries.iter().zip(slots) {
        let qid = &entry.query.qid;
        let result = slot
            .into_inner()
            .unwrap()
            .expect("every slot is filled")
            .map_err(|e| wrap(qid, e))?;
        graph.ingest(&result.ranking).map_err(|e| wrap(qid, e))?;
        run.total_calls += result.window_calls;
        run.queries.push(QueryRun {
            qid: qid.clone(),
            result,
        });
    }
    Ok(run)
}

/// CSV `qid,docid,rank,source`.
pub fn write_provenance<W: Write>(mut out: W, run: &StreamRun, ids: &Interner) -> Result<()> {
    writeln!(out, "qid,docid,rank,source")?;
    for q in &run.queries {
        for (pos, (doc, src)) in q
            .result
            .ranking
            .docs
            .iter()
            .zip(&q.result.provenance)
            .enumerate()
        {
            writeln!(out, "{},{},{},{}", q.qid, ids.external_id(*doc)?, pos + 1, src.as_str())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    #[default]
    Dataset,
    MaxOverlap,
    MinOverlap,
}

impl FromStr for OrderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "dataset" => Ok(OrderPolicy::Dataset),
            "max-overlap" => Ok(OrderPolicy::MaxOverlap),
            "min-overlap" => Ok(OrderPolicy::MinOverlap),
            _ => Err(Error::Config(format!("unknown order policy {s:?}"))),
        }
    }
}

/// Reorders a stream by greedy top-`c` pool overlap.
///
/// The greedy orders start from the pair with the largest (smallest)
/// intersection, then repeatedly append the query whose pool overlaps the
/// union of everything placed so far the most (least). Ties go to the
/// lexicographically smaller qid.
pub fn order_stream(stream: &QueryStream, policy: OrderPolicy, c: usize) -> Result<QueryStream> {
    if stream.is_empty() {
        return Err(Error::Input("cannot order an empty stream".into()));
    }
    if c == 0 {
        return Err(Error::Input("pool size c must be positive".into()));
    }
    let n = stream.len();
    if policy == OrderPolicy::Dataset || n == 1 {
        return Ok(stream.clone());
    }
    let maximize = policy == OrderPolicy::MaxOverlap;
    let pools: Vec<HashSet<DocRef>> = stream
        .iter()
        .map(|e| e.list.docs.iter().take(c).copied().collect())
        .collect();
    let qid = |i: usize| stream[i].query.qid.as_str();
    // is (score, tie) strictly better than the incumbent?
    let better = |score: usize, tie: (&str, &str), best: Option<(usize, (&str, &str))>| match best {
        None => true,
        Some((b, bt)) => {
            if score != b {
                (score > b) == maximize
            } else {
                tie < bt
            }
        }
    };

    let mut best_pair: Option<(usize, (&str, &str))> = None;
    let mut pair = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if qid(i) <= qid(j) { (i, j) } else { (j, i) };
            let shared = pools[a].intersection(&pools[b]).count();
            if better(shared, (qid(a), qid(b)), best_pair) {
                best_pair = Some((shared, (qid(a), qid(b))));
                pair = (a, b);
            }
        }
    }

    let mut order = vec![pair.0, pair.1];
    let mut placed = vec![false; n];
    placed[pair.0] = true;
    placed[pair.1] = true;
    let mut union: HashSet<DocRef> = pools[pair.0].union(&pools[pair.1]).copied().collect();
    while order.len() < n {
        let mut best: Option<(usize, (&str, &str))> = None;
        let mut pick = 0;
        for i in (0..n).filter(|i| !placed[*i]) {
            let shared = pools[i].intersection(&union).count();
            if better(shared, (qid(i), ""), best) {
                best = Some((shared, (qid(i), "")));
                pick = i;
            }
        }
        placed[pick] = true;
        order.push(pick);
        union.extend(pools[pick].iter().copied());
    }
    stream.reordered(&order)
}
