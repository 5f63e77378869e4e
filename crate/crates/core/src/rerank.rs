//! Window-level listwise rerankers.
//!
//! A reranker receives one window of candidates and returns a permutation of
//! it, without scores. The adapters here stand in for LLM rerankers: an
//! identity baseline, a qrels-driven oracle with optional noise, a seeded
//! random shuffle, and a bridge to an external process speaking a
//! line-delimited JSON protocol.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocRef, Interner, Qrels, QueryRecord};
use crate::error::{Error, Result};

/// One window handed to a reranker.
#[derive(Debug, Clone, Copy)]
pub struct WindowRequest<'a> {
    pub query: &'a QueryRecord,
    pub docs: &'a [DocRef],
    /// Resolves handles to external ids for adapters that need them.
    pub ids: &'a Interner,
}

pub trait Reranker {
    /// Returns a permutation of `request.docs`.
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>>;

    /// Invocations so far.
    fn calls(&self) -> u64;

    fn name(&self) -> &str;
}

impl<R: Reranker + ?Sized> Reranker for Box<R> {
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
        (**self).rerank(request)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Checks that `output` is a permutation of `input`.
pub fn check_permutation(input: &[DocRef], output: &[DocRef]) -> Result<()> {
    if input.len() != output.len() {
        return Err(Error::Reranker(format!(
            "expected {} documents, got {}",
            input.len(),
            output.len()
        )));
    }
    let mut expected: HashMap<DocRef, usize> = HashMap::with_capacity(input.len());
    for d in input {
        *expected.entry(*d).or_default() += 1;
    }
    for d in output {
        match expected.get_mut(d) {
            Some(n) if *n > 0 => *n -= 1,
            _ => {
                return Err(Error::Reranker(format!(
                    "document {d} is not part of the window"
                )))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct IdentityReranker {
    calls: u64,
}

impl IdentityReranker {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Reranker for IdentityReranker {
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
        self.calls += 1;
        Ok(request.docs.to_vec())
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn name(&self) -> &str {
        "identity"
    }
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub qrels: Qrels,
    /// Random adjacent transpositions applied after sorting.
    pub noise_swaps: usize,
    pub seed: u64,
}

/// Sorts a window by relevance grade (stable, ungraded = 0), then applies
/// `noise_swaps` seeded adjacent swaps.
#[derive(Debug, Clone)]
pub struct OracleReranker {
    qrels: Qrels,
    noise_swaps: usize,
    rng: ChaCha8Rng,
    calls: u64,
}

impl OracleReranker {
    pub fn new(cfg: OracleConfig) -> Self {
        Self {
            qrels: cfg.qrels,
            noise_swaps: cfg.noise_swaps,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            calls: 0,
        }
    }
}

impl Reranker for OracleReranker {
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
        self.calls += 1;
        let qid = &request.query.qid;
        let mut graded: Vec<(u32, DocRef)> = request
            .docs
            .iter()
            .map(|d| {
                let grade = request
                    .ids
                    .resolve(*d)
                    .map_or(0, |id| self.qrels.grade(qid, id));
                (grade, *d)
            })
            .collect();
        graded.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out: Vec<DocRef> = graded.into_iter().map(|(_, d)| d).collect();
        if out.len() > 1 {
            for _ in 0..self.noise_swaps {
                let i = self.rng.gen_range(0..out.len() - 1);
                out.swap(i, i + 1);
            }
        }
        Ok(out)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[derive(Debug, Clone)]
pub struct RandomReranker {
    rng: ChaCha8Rng,
    calls: u64,
}

impl RandomReranker {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            calls: 0,
        }
    }
}

impl Reranker for RandomReranker {
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
        self.calls += 1;
        let mut out = request.docs.to_vec();
        out.shuffle(&mut self.rng);
        Ok(out)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn name(&self) -> &str {
        "random"
    }
}

/// Request line sent to an external reranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRequest {
    pub qid: String,
    pub query: Option<String>,
    pub docids: Vec<String>,
}

/// Response line expected back: a permutation of the request's `docids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResponse {
    pub docids: Vec<String>,
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(60);

/// Drives a child process over stdin/stdout, one JSON object per line and
/// exactly one response per request.
pub struct ExternalReranker {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    calls: u64,
}

impl ExternalReranker {
    /// Spawns `program args...`.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut cmd = Command::new(program);
        cmd.args(args);
        Self::from_command(cmd, format!("{program} {}", args.join(" ")), timeout)
    }

    /// Spawns a shell command line through `sh -c`.
    pub fn spawn_shell(command_line: &str, timeout: Duration) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command_line);
        Self::from_command(cmd, command_line.to_owned(), timeout)
    }

    fn from_command(mut cmd: Command, label: String, timeout: Duration) -> Result<Self> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Reranker(format!("cannot start {label:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Reranker("child stdout unavailable".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: label,
            child,
            stdin,
            lines: rx,
            timeout,
            calls: 0,
        })
    }

    fn exchange(&mut self, request: &ProtocolRequest) -> Result<ProtocolResponse> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Reranker("reranker stdin closed".into()))?;
        let mut line = serde_json::to_string(request)
            .map_err(|e| Error::Reranker(format!("cannot encode request: {e}")))?;
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Reranker(format!("write to {:?} failed: {e}", self.command)))?;

        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Reranker(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Reranker(format!(
                    "no response from {:?} within {:?}",
                    self.command, self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Reranker(format!(
                    "{:?} closed its output",
                    self.command
                )))
            }
        };
        serde_json::from_str(&reply)
            .map_err(|e| Error::Reranker(format!("malformed response {reply:?}: {e}")))
    }
}

impl Reranker for ExternalReranker {
    fn rerank(&mut self, request: &WindowRequest<'_>) -> Result<Vec<DocRef>> {
        self.calls += 1;
        let docids = request
            .docs
            .iter()
            .map(|d| request.ids.external_id(*d).map(str::to_owned))
            .collect::<Result<Vec<_>>>()?;
        let response = self.exchange(&ProtocolRequest {
            qid: request.query.qid.clone(),
            query: request.query.text.clone(),
            docids,
        })?;

        let window: HashMap<&str, DocRef> = request
            .docs
            .iter()
            .map(|d| (request.ids.resolve(*d).unwrap_or_default(), *d))
            .collect();
        let mut seen = HashSet::with_capacity(response.docids.len());
        let mut out = Vec::with_capacity(response.docids.len());
        for id in &response.docids {
            let doc = window.get(id.as_str()).ok_or_else(|| {
                Error::Reranker(format!("response contains unknown document {id:?}"))
            })?;
            if !seen.insert(*doc) {
                return Err(Error::Reranker(format!("response repeats document {id:?}")));
            }
            out.push(*doc);
        }
        check_permutation(request.docs, &out)?;
        Ok(out)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn name(&self) -> &str {
        "external"
    }
}

impl Drop for ExternalReranker {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved child exit on its own
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
