//! nDCG@k scoring and method-by-dataset run comparisons.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::corpus::{Interner, Qrels, RankedList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// `2^r - 1`
    #[default]
    Exponential,
    /// `r`
    Linear,
}

impl Gain {
    pub fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => grade as f64,
        }
    }
}

/// nDCG@k of a ranking (external doc ids, best first) against one query's
/// judgments. The ideal ordering uses every judged document of the query.
///
/// Returns `Ok(None)` when the ideal DCG is zero (nothing relevant judged).
pub fn ndcg_at_k<'a, I>(
    ranking: I,
    judgments: Option<&HashMap<String, u32>>,
    k: usize,
    gain: Gain,
) -> Result<Option<f64>>
where
    I: IntoIterator<Item = &'a str>,
{
    if k == 0 {
        return Err(Error::Input("nDCG cutoff must be at least 1".into()));
    }
    let Some(judgments) = judgments else {
        return Ok(None);
    };
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();

    let mut ideal: Vec<u32> = judgments.values().copied().filter(|g| *g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| gain.of(*g) * discount(i))
        .sum();
    if idcg <= 0.0 {
        return Ok(None);
    }
    let dcg: f64 = ranking
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| gain.of(judgments.get(id).copied().unwrap_or(0)) * discount(i))
        .sum();
    Ok(Some(dcg / idcg))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_query: BTreeMap<String, f64>,
    /// Macro average over scored queries; 0 when nothing was scored.
    pub mean: f64,
    /// Queries without any relevant judgment.
    pub skipped: usize,
    pub k: usize,
}

impl EvalReport {
    /// True when no query could be scored (mean is then meaningless).
    pub fn all_skipped(&self) -> bool {
        self.per_query.is_empty()
    }

    /// Optional per-query TSV `qid\tndcg`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (qid, v) in &self.per_query {
            writeln!(out, "{qid}\t{v:.4}")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn evaluate_run(run: &[RankedList], ids: &Interner, qrels: &Qrels, k: usize, gain: Gain) -> Result<EvalReport> {
    let mut report = EvalReport {
        k,
        ..EvalReport::default()
    };
    for list in run {
        let names = list
            .docs
            .iter()
            .map(|d| ids.external_id(*d))
            .collect::<Result<Vec<_>>>()?;
        match ndcg_at_k(names, qrels.for_query(&list.qid), k, gain)? {
            Some(v) => {
                report.per_query.insert(list.qid.clone(), v);
            }
            None => report.skipped += 1,
        }
    }
    if !report.per_query.is_empty() {
        report.mean = report.per_query.values().sum::<f64>() / report.per_query.len() as f64;
    }
    Ok(report)
}

/// Renders `method,<dataset...>,avg` with means as percentages to one
/// decimal. Datasets missing for a method render as `-`.
pub fn compare_runs(methods: &[(String, Vec<(String, EvalReport)>)]) -> Result<String> {
    if methods.is_empty() {
        return Err(Error::Input("nothing to compare".into()));
    }
    let mut datasets: Vec<&str> = Vec::new();
    for (_, reports) in methods {
        for (ds, _) in reports {
            if !datasets.contains(&ds.as_str()) {
                datasets.push(ds);
            }
        }
    }
    let mut out = String::from("method");
    for ds in &datasets {
        out.push(',');
        out.push_str(ds);
    }
    out.push_str(",avg\n");
    for (method, reports) in methods {
        out.push_str(method);
        let mut sum = 0.0;
        for ds in &datasets {
            out.push(',');
            match reports.iter().find(|(d, _)| d == ds) {
                Some((_, r)) => {
                    out.push_str(&percent(r.mean));
                    sum += r.mean;
                }
                None => out.push('-'),
            }
        }
        out.push(',');
        if reports.len() == datasets.len() {
            out.push_str(&percent(sum / datasets.len() as f64));
        } else {
            out.push('-');
        }
        out.push('\n');
    }
    Ok(out)
}

/// `0.584 -> "58.4"`
pub fn percent(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}
