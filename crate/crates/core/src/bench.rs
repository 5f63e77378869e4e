//! Per-query cost measurements for streaming graph maintenance.

use std::fmt::Write as _;
use std::time::Instant;

use crate::corpus::{QueryStream, RankedList};
use crate::error::{Error, Result};
use crate::graph::{propagate, AffinityGraph, BatchReport, PropagationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Candidate pool size `c`; lists are truncated to it before ingestion.
    pub pool_size: usize,
    pub propagation: PropagationConfig,
    /// Neighbors requested per committed document.
    pub neighbors_per_doc: usize,
    /// How many top documents of each list get a neighbor lookup.
    pub committed: usize,
    /// Leading queries left out of the summary.
    pub warmup: usize,
    /// Whole-stream repetitions; per-query timings are the median across them.
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pool_size: 100,
            propagation: PropagationConfig::default(),
            neighbors_per_doc: 10,
            committed: 10,
            warmup: 3,
            repetitions: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::Config("pool size must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        self.propagation.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub query_index: usize,
    pub qid: String,
    pub ingest_seconds: f64,
    pub propagate_seconds: f64,
    pub neighbors_seconds: f64,
    /// Estimated graph footprint after this query.
    pub graph_bytes: usize,
    pub pool_size: usize,
    pub new_docs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseSummary {
    pub median: f64,
    pub mean: f64,
    pub p95: f64,
}

impl PhaseSummary {
    /// Nearest-rank percentiles; all zero for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            median: median(&v),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p95: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchSummary {
    /// Records after warm-up.
    pub measured: usize,
    pub ingest: PhaseSummary,
    pub propagate: PhaseSummary,
    pub neighbors: PhaseSummary,
    /// Largest footprint over all records, warm-up included.
    pub peak_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchRun {
    pub records: Vec<BenchRecord>,
    pub summary: BenchSummary,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    median(values)
}

/// Feeds `stream` into a copy of `start` one query at a time. For each
/// query it times ingestion of the top-`c` list, propagation over that pool,
/// and neighbor lookups for the list's top `committed` documents.
///
/// Handles in `stream` must come from `start`'s interner.
pub fn bench_stream(stream: &QueryStream, start: &AffinityGraph, cfg: &BenchConfig) -> Result<BenchRun> {
    cfg.validate()?;
    let n = stream.len();
    let mut timings = vec![[Vec::new(), Vec::new(), Vec::new()]; n];
    let mut records = Vec::with_capacity(n);

    for rep in 0..cfg.repetitions {
        let mut graph = start.clone();
        for (i, entry) in stream.iter().enumerate() {
            let pool = entry.list.truncated(cfg.pool_size);

            let t = Instant::now();
            let report = graph.ingest(&pool)?;
            let ingest = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let prop = propagate(&graph, &pool.docs, &cfg.propagation)?;
            let propagate_s = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let mut found = 0usize;
            for doc in pool.docs.iter().take(cfg.committed) {
                found += prop.neighbors(*doc, cfg.neighbors_per_doc).len();
            }
            std::hint::black_box(found);
            let neighbors_s = t.elapsed().as_secs_f64();

            let slot = &mut timings[i];
            slot[0].push(ingest);
            slot[1].push(propagate_s);
            slot[2].push(neighbors_s);
            if rep == 0 {
                records.push(BenchRecord {
                    query_index: i,
                    qid: entry.query.qid.clone(),
                    ingest_seconds: 0.0,
                    propagate_seconds: 0.0,
                    neighbors_seconds: 0.0,
                    graph_bytes: graph.stats().estimated_bytes,
                    pool_size: pool.len(),
                    new_docs: report.new_docs,
                });
            }
        }
    }
    for (record, slot) in records.iter_mut().zip(&mut timings) {
        record.ingest_seconds = median_of(&mut slot[0]);
        record.propagate_seconds = median_of(&mut slot[1]);
        record.neighbors_seconds = median_of(&mut slot[2]);
    }

    let summary = summarize(&records, cfg.warmup);
    Ok(BenchRun { records, summary })
}

pub fn summarize(records: &[BenchRecord], warmup: usize) -> BenchSummary {
    let measured = records.get(warmup..).unwrap_or(&[]);
    let phase = |f: fn(&BenchRecord) -> f64| PhaseSummary::of(&measured.iter().map(f).collect::<Vec<_>>());
    BenchSummary {
        measured: measured.len(),
        ingest: phase(|r| r.ingest_seconds),
        propagate: phase(|r| r.propagate_seconds),
        neighbors: phase(|r| r.neighbors_seconds),
        peak_bytes: records.iter().map(|r| r.graph_bytes).max().unwrap_or(0),
    }
}

pub const BENCH_CSV_HEADER: &str = "q,ingest_s,prop_s,nbr_s,bytes,pool,new_docs";

/// Per-query CSV followed by `#`-prefixed summary lines. With no records
/// only the header is written.
pub fn report_bench(run: &BenchRun) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    if run.records.is_empty() {
        return out;
    }
    for r in &run.records {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{},{},{}",
            r.query_index, r.ingest_seconds, r.propagate_seconds, r.neighbors_seconds, r.graph_bytes, r.pool_size, r.new_docs
        );
    }
    let s = &run.summary;
    let _ = writeln!(out, "# measured,{}", s.measured);
    for (name, p) in [("ingest_s", s.ingest), ("prop_s", s.propagate), ("nbr_s", s.neighbors)] {
        let _ = writeln!(out, "# {name},median={:.9},mean={:.9},p95={:.9}", p.median, p.mean, p.p95);
    }
    let _ = writeln!(out, "# peak_bytes,{}", s.peak_bytes);
    out
}

/// Least-squares line through ingest time against query index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Seconds per query.
    pub slope: f64,
    pub intercept: f64,
    pub median: f64,
    /// Slope over 100 queries as a fraction of the median ingest time.
    pub relative_per_100: f64,
}

/// Fits ingest seconds after `warmup`. `None` with fewer than two points or a
/// zero median.
pub fn ingest_slope(records: &[BenchRecord], warmup: usize) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = records
        .get(warmup..)?
        .iter()
        .map(|r| (r.query_index as f64, r.ingest_seconds))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let median = median_of(&mut pts.iter().map(|p| p.1).collect::<Vec<_>>());
    if median <= 0.0 {
        return None;
    }
    Some(SlopeFit {
        slope,
        intercept: my - slope * mx,
        median,
        relative_per_100: slope * 100.0 / median,
    })
}

/// Median wall time of applying `batch` to fresh copies of `base`.
pub fn time_batch(base: &AffinityGraph, batch: &[RankedList], repetitions: usize) -> Result<(f64, BatchReport)> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be positive".into()));
    }
    let mut times = Vec::with_capacity(repetitions);
    let mut report = BatchReport::default();
    for _ in 0..repetitions {
        let mut g = base.clone();
        let t = Instant::now();
        report = g.batch_update(batch)?;
        times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(&g);
    }
    Ok((median_of(&mut times), report))
}
