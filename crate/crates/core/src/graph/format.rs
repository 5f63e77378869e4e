//! Versioned little-endian binary encoding of an [`AffinityGraph`].
//!
//! ```text
//! header    magic "L2GGRAPH" | version u32 | queries u64 | docs u64 | cells u64
//! id map    docs x (len u32 | utf-8 bytes | df u32), handle order
//! triangle  docs x (count u32 | count x (column u32 | weight u64)), columns
//!           ascending and >= the row handle
//! trailer   crc32 u32 over every preceding byte
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use super::AffinityGraph;
use crate::corpus::Interner;
use crate::error::{GraphFormatError, Result};

pub const MAGIC: &[u8; 8] = b"L2GGRAPH";
pub const FORMAT_VERSION: u32 = 1;

impl AffinityGraph {
    /// Writes the graph; byte-identical for equal graphs.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        let bytes = self.to_bytes();
        sink.write_all(&bytes)?;
        sink.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let ids = self.interner();
        let rows = self.raw_rows();
        let df = self.df_table();
        let cells: usize = rows.iter().map(HashMap::len).sum();

        let mut buf = Vec::with_capacity(32 + ids.id_bytes() + 8 * ids.len() + 12 * cells + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.queries_ingested().to_le_bytes());
        buf.extend_from_slice(&(ids.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(cells as u64).to_le_bytes());

        for (i, id) in ids.ids().enumerate() {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            buf.extend_from_slice(&df.get(i).copied().unwrap_or(0).to_le_bytes());
        }

        for i in 0..ids.len() {
            let mut row: Vec<(u32, u64)> = rows
                .get(i)
                .map(|r| r.iter().map(|(c, w)| (*c, *w)).collect())
                .unwrap_or_default();
            row.sort_unstable();
            buf.extend_from_slice(&(row.len() as u32).to_le_bytes());
            for (col, weight) in row {
                buf.extend_from_slice(&col.to_le_bytes());
                buf.extend_from_slice(&weight.to_le_bytes());
            }
        }

        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    /// Reads a graph written by [`save`](Self::save). Nothing is returned
    /// unless the whole file decodes and its checksum matches.
    pub fn load<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GraphFormatError> {
        let mut cur = Cursor { bytes, pos: 0 };

        let magic_len = MAGIC.len().min(bytes.len());
        if bytes[..magic_len] != MAGIC[..magic_len] {
            return Err(GraphFormatError::BadMagic);
        }
        cur.take(MAGIC.len())?;
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(GraphFormatError::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let queries = cur.u64()?;
        let docs = usize::try_from(cur.u64()?).map_err(|_| corrupt("doc count overflows"))?;
        let cells = cur.u64()?;
        if docs > u32::MAX as usize {
            return Err(corrupt("doc count exceeds handle space"));
        }

        let mut ids = Interner::new();
        let mut df = Vec::with_capacity(docs.min(cur.remaining() / 8));
        for handle in 0..docs {
            let len = cur.u32()? as usize;
            let raw = cur.take(len)?;
            let id = std::str::from_utf8(raw).map_err(|_| corrupt("document id is not utf-8"))?;
            let doc = ids
                .intern(id)
                .map_err(|_| corrupt("empty document id"))?;
            if doc.index() != handle {
                return Err(corrupt(format!("document id {id:?} repeated")));
            }
            df.push(cur.u32()?);
        }

        let mut rows = Vec::with_capacity(docs);
        let mut total = 0u64;
        for row_handle in 0..docs {
            let count = cur.u32()? as usize;
            let mut row = HashMap::with_capacity(count.min(cur.remaining() / 12));
            let mut prev: Option<u32> = None;
            for _ in 0..count {
                let col = cur.u32()?;
                let weight = cur.u64()?;
                if (col as usize) < row_handle || col as usize >= docs {
                    return Err(corrupt(format!("cell ({row_handle}, {col}) outside the upper triangle")));
                }
                if prev.is_some_and(|p| p >= col) {
                    return Err(corrupt(format!("row {row_handle} columns not ascending")));
                }
                if weight == 0 {
                    return Err(corrupt(format!("zero weight stored at ({row_handle}, {col})")));
                }
                prev = Some(col);
                row.insert(col, weight);
            }
            total += count as u64;
            rows.push(row);
        }
        if total != cells {
            return Err(corrupt(format!("header declares {cells} cells, found {total}")));
        }

        let body_end = cur.pos;
        let stored = cur.u32()?;
        if cur.remaining() != 0 {
            return Err(corrupt(format!("{} trailing bytes", cur.remaining())));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(GraphFormatError::ChecksumMismatch { stored, computed });
        }

        let seen_in_rows: HashSet<usize> = rows
            .iter()
            .enumerate()
            .filter(|(i, r)| r.contains_key(&(*i as u32)))
            .map(|(i, _)| i)
            .collect();
        if let Some(i) = (0..docs).find(|i| (df[*i] > 0) != seen_in_rows.contains(i)) {
            return Err(corrupt(format!("document {i}: df and diagonal disagree")));
        }

        Ok(AffinityGraph::from_parts(ids, rows, df, queries))
    }
}

fn corrupt(msg: impl Into<String>) -> GraphFormatError {
    GraphFormatError::Corrupt(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphFormatError> {
        if self.remaining() < n {
            return Err(GraphFormatError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, GraphFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, GraphFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
