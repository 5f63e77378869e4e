//! Listwise-to-graph (L2G) document affinity induction and graph-adaptive
//! sliding-window reranking.
//!
//! Ranked lists produced by a listwise reranker are folded into a sparse
//! co-occurrence graph ([`graph::AffinityGraph`]). The graph is then used to
//! steer which documents enter later reranking windows ([`gar`]).

pub mod bench;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gar;
pub mod graph;
pub mod rerank;
pub mod synthetic;

pub use corpus::{DocRef, Interner, Qrels, QueryRecord, QueryStream, RankedList};
pub use error::{Error, GraphFormatError, Result};
pub use gar::{gar_rerank, sliding_window, GarConfig, Mode};
pub use graph::{AffinityGraph, PropagationConfig};
pub use rerank::Reranker;
