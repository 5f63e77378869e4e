//! Seeded synthetic collections for tests and benchmarks.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocRef, Interner, Qrels, QueryEntry, QueryRecord, QueryStream, RankedList};
use crate::error::{Error, Result};

/// `queries` lists of `k` distinct documents drawn uniformly from a
/// vocabulary `doc0..doc{vocab-1}`.
pub fn random_lists(ids: &mut Interner, queries: usize, k: usize, vocab: usize, seed: u64) -> Result<Vec<RankedList>> {
    if k == 0 || k > vocab {
        return Err(Error::Config(format!("cannot draw {k} distinct docs from {vocab}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<DocRef> = (0..vocab)
        .map(|i| ids.intern(&format!("doc{i}")))
        .collect::<Result<_>>()?;
    (0..queries)
        .map(|q| {
            let docs = sample(&mut rng, vocab.len(), k).into_iter().map(|i| vocab[i]).collect();
            RankedList::new(format!("q{q}"), docs, "synthetic")
        })
        .collect()
}

/// Lists of `k` documents where `fresh` are new each query and the rest are
/// drawn from documents already seen (`doc` names are unique per stream).
pub fn growing_lists(
    ids: &mut Interner,
    queries: usize,
    k: usize,
    fresh: usize,
    seed: u64,
) -> Result<Vec<RankedList>> {
    if k == 0 || fresh > k {
        return Err(Error::Config("growing lists need 0 < k and fresh <= k".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: Vec<DocRef> = Vec::new();
    let mut out = Vec::with_capacity(queries);
    for q in 0..queries {
        let old = (k - fresh).min(seen.len());
        let mut docs: Vec<DocRef> = sample(&mut rng, seen.len(), old).into_iter().map(|i| seen[i]).collect();
        for _ in 0..k - old {
            let d = ids.intern(&format!("g{}", seen.len()))?;
            seen.push(d);
            docs.push(d);
        }
        docs.shuffle(&mut rng);
        out.push(RankedList::new(format!("q{q}"), docs, "synthetic")?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredConfig {
    pub clusters: usize,
    pub docs_per_cluster: usize,
    pub queries: usize,
    /// Documents of a cluster that are relevant to every query on it.
    pub relevant_per_cluster: usize,
    /// Share of relevant documents placed below the head.
    pub deep_fraction: f64,
    /// First-stage head length (relevant docs not pushed deep land here).
    pub head: usize,
    pub pool: usize,
    /// Distractors come from clusters within this ring distance of the
    /// query's cluster; `None` draws them from the whole corpus.
    pub spread: Option<usize>,
    /// Extra unclustered documents that only ever appear as distractors.
    pub background: usize,
    pub seed: u64,
}

impl Default for ClusteredConfig {
    fn default() -> Self {
        Self {
            clusters: 20,
            docs_per_cluster: 20,
            queries: 60,
            relevant_per_cluster: 10,
            deep_fraction: 0.3,
            head: 20,
            pool: 100,
            spread: None,
            background: 600,
            seed: 7,
        }
    }
}

/// A generated collection: first-stage run, judgments and document ids.
#[derive(Debug, Clone)]
pub struct SyntheticCollection {
    pub ids: Interner,
    pub stream: QueryStream,
    pub qrels: Qrels,
}

/// Topical clusters of documents. Query `i` targets cluster
/// `i % clusters`, so related queries recur through the stream and share
/// their relevant documents. Each first-stage pool holds the cluster's
/// relevant documents (a `deep_fraction` of them placed past the head) plus
/// distractors drawn from the rest of the corpus.
pub fn clustered(cfg: &ClusteredConfig) -> Result<SyntheticCollection> {
    let total = cfg.clusters * cfg.docs_per_cluster;
    let rel = cfg.relevant_per_cluster;
    let deep = (cfg.deep_fraction * rel as f64).round() as usize;
    if cfg.clusters == 0 || rel == 0 || rel > cfg.docs_per_cluster {
        return Err(Error::Config("need clusters and 0 < relevant <= docs per cluster".into()));
    }
    if !(0.0..=1.0).contains(&cfg.deep_fraction) || rel - deep > cfg.head || cfg.head >= cfg.pool || cfg.pool > total + cfg.background {
        return Err(Error::Config("pool layout does not fit the corpus".into()));
    }
    if deep > cfg.pool - cfg.head {
        return Err(Error::Config("pool tail too short for deep relevant docs".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ids = Interner::new();
    let docs: Vec<Vec<DocRef>> = (0..cfg.clusters)
        .map(|c| {
            (0..cfg.docs_per_cluster)
                .map(|j| ids.intern(&format!("c{c}_d{j}")))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let background: Vec<DocRef> = (0..cfg.background)
        .map(|j| ids.intern(&format!("bg{j}")))
        .collect::<Result<_>>()?;

    let mut qrels = Qrels::new();
    let mut entries = Vec::with_capacity(cfg.queries);
    for q in 0..cfg.queries {
        let c = q % cfg.clusters;
        let qid = format!("q{q}");
        let relevant = &docs[c][..rel];
        for d in relevant {
            qrels.insert(&qid, ids.external_id(*d)?, 1);
        }

        let mut slots: Vec<Option<DocRef>> = vec![None; cfg.pool];
        let mut shuffled = relevant.to_vec();
        shuffled.shuffle(&mut rng);
        let (deep_docs, head_docs) = shuffled.split_at(deep);
        for (pos, d) in sample(&mut rng, cfg.head, head_docs.len()).into_iter().zip(head_docs) {
            slots[pos] = Some(*d);
        }
        for (pos, d) in sample(&mut rng, cfg.pool - cfg.head, deep).into_iter().zip(deep_docs) {
            slots[cfg.head + pos] = Some(*d);
        }

        let others: Vec<DocRef> = docs
            .iter()
            .enumerate()
            .filter(|(k, _)| cfg.spread.map_or(true, |r| ring_distance(*k, c, cfg.clusters) <= r))
            .flat_map(|(k, cluster)| if k == c { &cluster[rel..] } else { &cluster[..] })
            .chain(&background)
            .copied()
            .collect();
        if others.len() < cfg.pool - rel {
            return Err(Error::Config("distractor neighborhood smaller than the pool".into()));
        }
        let mut fill = sample(&mut rng, others.len(), cfg.pool - rel).into_iter().map(|i| others[i]);
        for slot in slots.iter_mut().filter(|s| s.is_none()) {
            *slot = fill.next();
        }
        let list = RankedList::new(&qid, slots.into_iter().flatten().collect(), "first-stage")?;
        entries.push(QueryEntry {
            query: QueryRecord::new(qid),
            list,
        });
    }
    Ok(SyntheticCollection {
        ids,
        stream: QueryStream::new(entries)?,
        qrels,
    })
}

fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}
