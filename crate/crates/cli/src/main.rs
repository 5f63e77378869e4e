//! `l2g`: build affinity graphs from run files, rerank query streams,
//! evaluate, benchmark and inspect.

mod failure;
mod settings;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use l2g_core::bench::{bench_stream, ingest_slope, report_bench, BenchConfig};
use l2g_core::corpus::{parse_qrels, parse_queries, parse_run_file, topc_overlap, write_run_file};
use l2g_core::eval::{compare_runs, evaluate_run, percent, EvalReport, Gain};
use l2g_core::gar::{
    order_stream, query_seed, run_sliding_parallel, run_stream, write_provenance, FileGraph, FillPolicy,
    OrderPolicy, SlideDirection,
};
use l2g_core::graph::{GraphStats, MAGIC};
use l2g_core::rerank::{
    ExternalReranker, IdentityReranker, OracleConfig, OracleReranker, RandomReranker, DEFAULT_EXTERNAL_TIMEOUT,
};
use l2g_core::{AffinityGraph, GarConfig, Interner, Mode, PropagationConfig, Qrels, QueryStream, RankedList, Reranker};

use failure::Failure;
use settings::Defaults;

#[derive(Parser)]
#[command(name = "l2g", version, about = "Listwise-to-graph affinity graphs and graph-adaptive reranking")]
struct Cli {
    /// `key=value` defaults file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest run files into a binary affinity graph.
    BuildGraph(BuildArgs),
    /// Rerank a query stream and write the resulting run.
    Rerank(RerankArgs),
    /// Score runs with nDCG@k.
    Eval(EvalArgs),
    /// Time per-query graph maintenance over a stream.
    Bench(BenchArgs),
    /// Summarize a run file or a graph file.
    Stats(StatsArgs),
}

/// Window and graph parameters; unset values fall back to the config file.
#[derive(Args, Default)]
struct Window {
    /// Window size w.
    #[arg(long)]
    window: Option<usize>,
    /// Step s (documents committed per window).
    #[arg(long)]
    step: Option<usize>,
    /// Candidate pool size c.
    #[arg(long)]
    pool: Option<usize>,
    /// Propagation hops (1..=3).
    #[arg(long)]
    hops: Option<u8>,
    /// Graph neighbors per expanded document (b).
    #[arg(long, alias = "b")]
    neighbors: Option<usize>,
}

#[derive(Args)]
struct BuildArgs {
    /// Run file to ingest; repeat for several, ingested in order.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// Start from this graph instead of an empty one.
    #[arg(long)]
    append: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerankArgs {
    /// First-stage run.
    #[arg(long)]
    run: PathBuf,
    /// sliding | gar_l2g | gar_file | gar_random
    #[arg(long)]
    mode: Option<String>,
    /// identity | oracle | noisy:<swaps> | random | external:<command>
    #[arg(long)]
    reranker: Option<String>,
    /// Judgments for the oracle rerankers.
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// gar_file: edge list or binary graph. Other modes: binary warm start.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Query texts, `qid<TAB>text`.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// dataset | max-overlap | min-overlap
    #[arg(long)]
    order: Option<String>,
    #[command(flatten)]
    window: Window,
    #[arg(long)]
    seed: Option<u64>,
    /// alternate | frontier-first
    #[arg(long)]
    fill: Option<String>,
    /// top-down | bottom-up (sliding only)
    #[arg(long)]
    direction: Option<String>,
    /// Worker threads; sliding mode only.
    #[arg(long)]
    parallel: Option<usize>,
    /// Seconds to wait for each external reranker reply.
    #[arg(long)]
    timeout: Option<f64>,
    /// Output run file.
    #[arg(long)]
    out: PathBuf,
    /// Run tag written to the output (defaults to `l2g-<mode>`).
    #[arg(long)]
    tag: Option<String>,
    /// Per-document provenance CSV.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Save the graph after the stream has been ingested.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run file to score; repeat to compare several.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Cutoff.
    #[arg(long)]
    k: Option<usize>,
    /// exponential | linear
    #[arg(long)]
    gain: Option<String>,
    /// Dataset column name in the comparison CSV (defaults to the qrels file stem).
    #[arg(long)]
    dataset: Option<String>,
    /// Comparison CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query TSV (single run only).
    #[arg(long)]
    per_query: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    window: Window,
    /// Leading queries excluded from the summary.
    #[arg(long)]
    warmup: Option<usize>,
    /// Whole-stream repetitions; timings are per-query medians.
    #[arg(long)]
    repetitions: Option<usize>,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "input")]
struct StatsInput {
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: StatsInput,
    /// Pool size c for the overlap statistic.
    #[arg(long)]
    pool: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let defaults = match &cli.config {
        Some(path) => Defaults::load(path)?,
        None => Defaults::default(),
    };
    match cli.command {
        Command::BuildGraph(a) => build_graph(a),
        Command::Rerank(a) => rerank(a, &defaults),
        Command::Eval(a) => eval(a, &defaults),
        Command::Bench(a) => bench(a, &defaults),
        Command::Stats(a) => stats(a, &defaults),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::from(e).with_path(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::from(e).with_path(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| Failure::from(e).with_path(path))
}

fn read_run(path: &Path, ids: &mut Interner) -> Result<Vec<RankedList>, Failure> {
    parse_run_file(open(path)?, ids).map_err(|e| Failure::in_file(path, e))
}

fn read_qrels(path: &Path) -> Result<Qrels, Failure> {
    parse_qrels(open(path)?).map_err(|e| Failure::in_file(path, e))
}

fn load_graph(path: &Path) -> Result<AffinityGraph, Failure> {
    AffinityGraph::load(open(path)?).map_err(|e| Failure::in_file(path, e))
}

fn save_graph(graph: &AffinityGraph, path: &Path) -> Result<(), Failure> {
    graph.save(create(path)?).map_err(|e| Failure::in_file(path, e))
}

fn parsed<T: FromStr<Err = l2g_core::Error>>(text: &str) -> Result<T, Failure> {
    text.parse().map_err(Failure::from)
}

fn print_stats(stats: &GraphStats) {
    println!("{}", GraphStats::CSV_HEADER);
    println!("{}", stats.csv_row());
}

fn build_graph(a: BuildArgs) -> Result<(), Failure> {
    let mut graph = match &a.append {
        Some(path) => load_graph(path)?,
        None => AffinityGraph::new(),
    };
    for path in &a.runs {
        let lists = read_run(path, graph.interner_mut())?;
        for list in &lists {
            graph.ingest(list).map_err(|e| Failure::in_file(path, e))?;
        }
        log::info!("{}: {} lists ingested", path.display(), lists.len());
    }
    save_graph(&graph, &a.out)?;
    print_stats(&graph.stats());
    Ok(())
}

/// Parsed `--reranker` value.
#[derive(Debug, Clone, PartialEq)]
enum RerankerSpec {
    Identity,
    Oracle { swaps: usize },
    Random,
    External(String),
}

impl RerankerSpec {
    fn parse(text: &str) -> Result<Self, Failure> {
        let spec = match text.split_once(':') {
            None if text == "identity" => Self::Identity,
            None if text == "oracle" => Self::Oracle { swaps: 0 },
            None if text == "random" => Self::Random,
            Some(("noisy", n)) => Self::Oracle {
                swaps: n
                    .parse()
                    .map_err(|_| Failure::config(format!("noisy reranker needs a swap count, got {n:?}")))?,
            },
            Some(("external", cmd)) if !cmd.trim().is_empty() => Self::External(cmd.to_owned()),
            _ => return Err(Failure::config(format!("unknown reranker {text:?}"))),
        };
        Ok(spec)
    }

    fn needs_qrels(&self) -> bool {
        matches!(self, Self::Oracle { .. })
    }

    fn build(&self, qrels: Option<&Qrels>, seed: u64, timeout: Duration) -> l2g_core::Result<Box<dyn Reranker + Send>> {
        Ok(match self {
            Self::Identity => Box::new(IdentityReranker::new()),
            Self::Oracle { swaps } => Box::new(OracleReranker::new(OracleConfig {
                qrels: qrels.cloned().unwrap_or_default(),
                noise_swaps: *swaps,
                seed,
            })),
            Self::Random => Box::new(RandomReranker::new(seed)),
            Self::External(cmd) => Box::new(ExternalReranker::spawn_shell(cmd, timeout)?),
        })
    }
}

fn gar_config(w: &Window, d: &Defaults, mode: Mode, seed: u64) -> Result<GarConfig, Failure> {
    let base = GarConfig::default();
    let hops = d.pick(w.hops, "hops", base.propagation.hops)?;
    Ok(GarConfig {
        window: d.pick(w.window, "window", base.window)?,
        step: d.pick(w.step, "step", base.step)?,
        pool_size: d.pick(w.pool, "pool", base.pool_size)?,
        mode,
        propagation: PropagationConfig::with_hops(hops),
        neighbors_per_doc: d.pick(w.neighbors, "neighbors", base.neighbors_per_doc)?,
        seed,
        ..base
    })
}

fn rerank(a: RerankArgs, d: &Defaults) -> Result<(), Failure> {
    // Everything that can be checked without reading inputs is checked first.
    let mode: Mode = parsed(&d.pick_opt(a.mode.clone(), "mode").unwrap_or_else(|| "sliding".into()))?;
    let seed = d.pick(a.seed, "seed", 0u64)?;
    let mut cfg = gar_config(&a.window, d, mode, seed)?;
    if let Some(fill) = d.pick_opt(a.fill.clone(), "fill") {
        cfg.fill = parsed::<FillPolicy>(&fill)?;
    }
    if let Some(dir) = &a.direction {
        cfg.direction = parsed::<SlideDirection>(dir)?;
    }
    cfg.validate()?;
    let order: OrderPolicy = parsed(&d.pick_opt(a.order.clone(), "order").unwrap_or_else(|| "dataset".into()))?;
    let spec = RerankerSpec::parse(&d.pick_opt(a.reranker.clone(), "reranker").unwrap_or_else(|| "identity".into()))?;
    let qrels_path = a.qrels.clone().or_else(|| d.raw("qrels").map(PathBuf::from));
    if spec.needs_qrels() && qrels_path.is_none() {
        return Err(Failure::config("the oracle and noisy rerankers need --qrels"));
    }
    if mode == Mode::GarFile && a.graph.is_none() {
        return Err(Failure::config("gar_file mode needs --graph"));
    }
    let parallel = d.pick(a.parallel, "parallel", 1usize)?;
    if parallel == 0 {
        return Err(Failure::config("--parallel must be at least 1"));
    }
    if parallel > 1 && mode != Mode::Sliding {
        return Err(Failure::config(format!("--parallel is only allowed in sliding mode, not {mode}")));
    }
    let timeout = match d.pick_opt(a.timeout.map(|t| t.to_string()), "timeout") {
        Some(t) => match t.parse::<f64>() {
            Ok(secs) if secs > 0.0 && secs.is_finite() => Duration::from_secs_f64(secs),
            _ => return Err(Failure::config(format!("timeout must be a positive number of seconds, got {t:?}"))),
        },
        None => DEFAULT_EXTERNAL_TIMEOUT,
    };

    let qrels = qrels_path.as_deref().map(read_qrels).transpose()?;
    let mut graph = AffinityGraph::new();
    let mut file_graph = None;
    if let Some(path) = &a.graph {
        if mode == Mode::GarFile {
            file_graph = Some(read_file_graph(path, graph.interner_mut())?);
        } else {
            graph = load_graph(path)?;
        }
    }
    let lists = read_run(&a.run, graph.interner_mut())?;
    if let Some(empty) = lists.iter().find(|l| l.is_empty()) {
        return Err(Failure::in_file(&a.run, l2g_core::Error::Input(format!("query {} has no documents", empty.qid))));
    }
    let texts = match &a.queries {
        Some(path) => parse_queries(open(path)?).map_err(|e| Failure::in_file(path, e))?,
        None => HashMap::new(),
    };
    let stream = QueryStream::from_lists(lists, &texts)?;
    let stream = order_stream(&stream, order, cfg.pool_size)?;

    let result = if parallel > 1 {
        let qrels = qrels.as_ref();
        let make = |q: &l2g_core::QueryRecord| spec.build(qrels, query_seed(seed, &q.qid), timeout);
        run_sliding_parallel(&stream, &cfg, make, &mut graph, parallel)
    } else {
        let mut reranker = spec.build(qrels.as_ref(), seed, timeout)?;
        run_stream(&stream, &cfg, reranker.as_mut(), &mut graph, file_graph.as_ref())
    }?;

    let tag = a.tag.clone().unwrap_or_else(|| format!("l2g-{mode}"));
    write_run_file(create(&a.out)?, &result.rankings(), graph.interner(), Some(&tag))
        .map_err(|e| Failure::in_file(&a.out, e))?;
    if let Some(path) = &a.provenance {
        write_provenance(create(path)?, &result, graph.interner()).map_err(|e| Failure::in_file(path, e))?;
    }
    if let Some(path) = &a.graph_out {
        save_graph(&graph, path)?;
    }

    let n = result.queries.len();
    let first = result.queries.first().map(|q| q.result.window_calls);
    let uniform = result.queries.iter().all(|q| Some(q.result.window_calls) == first);
    match first {
        Some(per) if uniform => println!("window calls: {} over {n} queries ({per} per query)", result.total_calls),
        _ => println!("window calls: {} over {n} queries", result.total_calls),
    }
    Ok(())
}

/// Binary graph files are recognized by their magic bytes; anything else is
/// read as a `docA docB weight` edge list.
fn read_file_graph(path: &Path, ids: &mut Interner) -> Result<FileGraph, Failure> {
    let mut head = Vec::with_capacity(MAGIC.len());
    open(path)?
        .take(MAGIC.len() as u64)
        .read_to_end(&mut head)
        .map_err(|e| Failure::from(e).with_path(path))?;
    if head == MAGIC {
        let graph = load_graph(path)?;
        FileGraph::from_affinity_graph(&graph, ids).map_err(|e| Failure::in_file(path, e))
    } else {
        FileGraph::from_edge_list(open(path)?, ids).map_err(|e| Failure::in_file(path, e))
    }
}

fn parse_gain(text: &str) -> Result<Gain, Failure> {
    match text {
        "exponential" | "exp" => Ok(Gain::Exponential),
        "linear" | "lin" => Ok(Gain::Linear),
        _ => Err(Failure::config(format!("unknown gain {text:?}"))),
    }
}

fn eval(a: EvalArgs, d: &Defaults) -> Result<(), Failure> {
    let qrels_path = a
        .qrels
        .clone()
        .or_else(|| d.raw("qrels").map(PathBuf::from))
        .ok_or_else(|| Failure::config("eval needs --qrels"))?;
    let k = d.pick(a.k, "k", 10usize)?;
    if k == 0 {
        return Err(Failure::config("--k must be at least 1"));
    }
    let gain = parse_gain(&d.pick_opt(a.gain.clone(), "gain").unwrap_or_else(|| "exponential".into()))?;
    if a.per_query.is_some() && a.runs.len() != 1 {
        return Err(Failure::config("--per-query takes a single --run"));
    }
    let dataset = a.dataset.clone().unwrap_or_else(|| stem(&qrels_path));

    let qrels = read_qrels(&qrels_path)?;
    let mut methods: Vec<(String, Vec<(String, EvalReport)>)> = Vec::new();
    let mut any_skipped_all = false;
    for path in &a.runs {
        let mut ids = Interner::new();
        let lists = read_run(path, &mut ids)?;
        let report = evaluate_run(&lists, &ids, &qrels, k, gain)?;
        let name = stem(path);
        if a.runs.len() > 1 {
            println!("# {name}");
        }
        for (qid, v) in &report.per_query {
            println!("{qid}\t{v:.4}");
        }
        if report.all_skipped() {
            any_skipped_all = true;
            println!("nDCG@{k}\tn/a (no query has relevant judgments; {} skipped)", report.skipped);
            log::warn!("{}: none of the run's queries are judged in {}", path.display(), qrels_path.display());
        } else {
            println!("nDCG@{k}\t{} ({} scored, {} skipped)", percent(report.mean), report.per_query.len(), report.skipped);
        }
        if let Some(out) = &a.per_query {
            report.write_tsv(create(out)?).map_err(|e| Failure::in_file(out, e))?;
        }
        methods.push((name, vec![(dataset.clone(), report)]));
    }
    if let Some(out) = &a.out {
        write_text(out, &compare_runs(&methods)?)?;
    }
    if any_skipped_all {
        eprintln!("warning: no overlap between run qids and judged qids");
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn bench(a: BenchArgs, d: &Defaults) -> Result<(), Failure> {
    let base = BenchConfig::default();
    let w = &a.window;
    let cfg = BenchConfig {
        pool_size: d.pick(w.pool, "pool", base.pool_size)?,
        propagation: PropagationConfig::with_hops(d.pick(w.hops, "hops", base.propagation.hops)?),
        neighbors_per_doc: d.pick(w.neighbors, "neighbors", base.neighbors_per_doc)?,
        committed: d.pick(w.step, "step", base.committed)?,
        warmup: d.pick(a.warmup, "warmup", base.warmup)?,
        repetitions: d.pick(a.repetitions, "repetitions", base.repetitions)?,
    };
    cfg.validate()?;

    let mut graph = AffinityGraph::new();
    let lists = read_run(&a.run, graph.interner_mut())?;
    let stream = QueryStream::from_lists(lists, &HashMap::new())?;
    let run = bench_stream(&stream, &graph, &cfg)?;

    let mut csv = report_bench(&run);
    let verdict = match ingest_slope(&run.records, cfg.warmup) {
        Some(fit) => {
            let pct = 100.0 * fit.relative_per_100;
            let label = if fit.relative_per_100 <= 0.05 { "flat" } else { "rising" };
            csv.push_str(&format!("# ingest_slope_pct_per_100,{pct:.3},{label}\n"));
            format!("ingest slope: {pct:+.2}% of median per 100 queries ({label})")
        }
        None => "ingest slope: not enough measured queries".to_owned(),
    };
    match &a.out {
        Some(path) => write_text(path, &csv)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
        }
    }
    eprintln!(
        "{} queries measured, median ingest {:.6}s, peak {} bytes",
        run.summary.measured, run.summary.ingest.median, run.summary.peak_bytes
    );
    eprintln!("{verdict}");
    Ok(())
}

fn stats(a: StatsArgs, d: &Defaults) -> Result<(), Failure> {
    if let Some(path) = &a.input.graph {
        print_stats(&load_graph(path)?.stats());
        return Ok(());
    }
    let path = a.input.run.as_ref().expect("clap requires --run or --graph");
    let c = d.pick(a.pool, "pool", 100usize)?;
    if c == 0 {
        return Err(Failure::config("--pool must be positive"));
    }
    let mut ids = Interner::new();
    let lists = read_run(path, &mut ids)?;
    let distinct = {
        let mut seen = std::collections::HashSet::new();
        lists.iter().flat_map(|l| &l.docs).filter(|doc| seen.insert(**doc)).count()
    };
    let overlap = topc_overlap(&lists, c)?;
    println!("Query count: {}", lists.len());
    println!("Distinct docs: {distinct}");
    println!("Top-{c} overlap (%): {overlap:.1}");
    Ok(())
}
