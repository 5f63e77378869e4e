//! Pool-restricted k-hop propagation.
//!
//! The weighted affinity is first restricted to the query's candidate pool,
//! each non-zero row is L1-normalized, and the normalized matrix is then
//! multiplied by itself once per extra hop with rows re-normalized after every
//! product. Zero rows stay zero.

use std::collections::HashMap;

use log::warn;

use super::AffinityGraph;
use crate::corpus::DocRef;
use crate::error::{Error, Result};

/// Upper bound on hops; longer walks drift towards the stationary
/// distribution and stop discriminating between documents.
pub const MAX_HOPS: u8 = 3;

/// How document frequency discounts a document's score vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IdfWeighting {
    Off,
    /// `1 / ln(1 + df)`.
    #[default]
    Natural,
    /// `1 / log_b(1 + df)`; any base rescales all weights uniformly.
    Base(f64),
}

impl IdfWeighting {
    pub fn weight(self, df: u32) -> f64 {
        let x = 1.0 + df as f64;
        match self {
            IdfWeighting::Off => 1.0,
            IdfWeighting::Natural => 1.0 / x.ln(),
            IdfWeighting::Base(b) => 1.0 / x.log(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    /// Number of hops, `1..=MAX_HOPS`.
    pub hops: u8,
    /// Keep self-affinity on the diagonal during the walk.
    pub include_diagonal: bool,
    pub idf: IdfWeighting,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            hops: MAX_HOPS,
            include_diagonal: true,
            idf: IdfWeighting::Natural,
        }
    }
}

impl PropagationConfig {
    pub fn with_hops(hops: u8) -> Self {
        Self {
            hops,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 || self.hops > MAX_HOPS {
            return Err(Error::Config(format!(
                "hops must be in 1..={MAX_HOPS}, got {}",
                self.hops
            )));
        }
        if let IdfWeighting::Base(b) = self.idf {
            if !(b > 0.0 && b != 1.0 && b.is_finite()) {
                return Err(Error::Config(format!("invalid logarithm base {b}")));
            }
        }
        Ok(())
    }
}

/// Sparse rows over local pool indices, columns ascending.
type Rows = Vec<Vec<(u32, f64)>>;

/// Propagated affinity over one query's pool.
#[derive(Debug, Clone)]
pub struct Propagated {
    pool: Vec<DocRef>,
    index: HashMap<DocRef, u32>,
    rows: Rows,
}

impl Propagated {
    /// Pool members that took part (seen, de-duplicated, input order).
    pub fn pool(&self) -> &[DocRef] {
        &self.pool
    }

    pub fn contains(&self, doc: DocRef) -> bool {
        self.index.contains_key(&doc)
    }

    pub fn get(&self, from: DocRef, to: DocRef) -> f64 {
        let (Some(&i), Some(&j)) = (self.index.get(&from), self.index.get(&to)) else {
            return 0.0;
        };
        let row = &self.rows[i as usize];
        row.binary_search_by_key(&j, |(c, _)| *c)
            .map(|p| row[p].1)
            .unwrap_or(0.0)
    }

    /// Non-zero entries of `doc`'s row as `(neighbor, weight)`.
    pub fn row(&self, doc: DocRef) -> impl Iterator<Item = (DocRef, f64)> + '_ {
        self.index
            .get(&doc)
            .map(|&i| self.rows[i as usize].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|(j, w)| (self.pool[*j as usize], *w))
    }

    /// Top-`n` members by propagated weight from `doc`, excluding `doc`
    /// itself and zero weights. Ties go to the smaller handle.
    pub fn neighbors(&self, doc: DocRef, n: usize) -> Vec<(DocRef, f64)> {
        let mut out: Vec<(DocRef, f64)> = self
            .row(doc)
            .filter(|(d, w)| *d != doc && *w > 0.0)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.truncate(n);
        out
    }

    /// Dense copy in pool order.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.pool.len();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for (j, w) in row {
                    dense[*j as usize] = *w;
                }
                dense
            })
            .collect()
    }
}

/// Builds `D^(k)` restricted to `pool`.
///
/// Unseen pool members are dropped with a warning; an empty input pool is an
/// error.
pub fn propagate(graph: &AffinityGraph, pool: &[DocRef], cfg: &PropagationConfig) -> Result<Propagated> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Input("propagation pool is empty".into()));
    }

    let mut members = Vec::with_capacity(pool.len());
    let mut index = HashMap::with_capacity(pool.len());
    let mut dropped = 0usize;
    for &d in pool {
        if !graph.is_seen(d) {
            dropped += 1;
            continue;
        }
        if !index.contains_key(&d) {
            index.insert(d, members.len() as u32);
            members.push(d);
        }
    }
    if dropped > 0 {
        warn!("propagation: {dropped} unseen pool documents dropped");
    }

    let idf: Vec<f64> = members
        .iter()
        .map(|d| cfg.idf.weight(graph.df(*d)))
        .collect();
    let mut rows: Rows = vec![Vec::new(); members.len()];
    for (i, &d) in members.iter().enumerate() {
        let Some(upper) = graph.upper_row(d) else {
            continue;
        };
        let mut visit = |e: u32, raw: u64| {
            let Some(&j) = index.get(&DocRef(e)) else {
                return;
            };
            // grouped so equal inputs give bit-identical weights in either row
            let w = raw as f64 * (idf[i] * idf[j as usize]);
            if j as usize == i {
                if cfg.include_diagonal {
                    rows[i].push((j, w));
                }
            } else {
                rows[i].push((j, w));
                rows[j as usize].push((i as u32, w));
            }
        };
        // walk whichever side is shorter
        if upper.len() <= members.len() {
            for (&e, &raw) in upper {
                visit(e, raw);
            }
        } else {
            for &e in &members {
                if e >= d {
                    if let Some(&raw) = upper.get(&e.0) {
                        visit(e.0, raw);
                    }
                }
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|(j, _)| *j);
        normalize(row);
    }

    let step = rows.clone();
    for _ in 1..cfg.hops {
        rows = multiply(&rows, &step);
        rows.iter_mut().for_each(|r| normalize(r));
    }

    Ok(Propagated {
        pool: members,
        index,
        rows,
    })
}

fn normalize(row: &mut [(u32, f64)]) {
    let sum: f64 = row.iter().map(|(_, w)| w.abs()).sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|(_, w)| *w /= sum);
    }
}

/// Sparse product `left * right` with a dense accumulator per row.
fn multiply(left: &Rows, right: &Rows) -> Rows {
    let n = right.len();
    let mut acc = vec![0.0f64; n];
    let mut mark = vec![false; n];
    let mut touched: Vec<u32> = Vec::new();
    left.iter()
        .map(|row| {
            for &(j, x) in row {
                for &(l, y) in &right[j as usize] {
                    if !mark[l as usize] {
                        mark[l as usize] = true;
                        touched.push(l);
                    }
                    acc[l as usize] += x * y;
                }
            }
            touched.sort_unstable();
            let out = touched
                .iter()
                .filter_map(|&l| {
                    let v = std::mem::take(&mut acc[l as usize]);
                    mark[l as usize] = false;
                    (v != 0.0).then_some((l, v))
                })
                .collect();
            touched.clear();
            out
        })
        .collect()
}
