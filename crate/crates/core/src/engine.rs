//! Shared engine scaffolding: configuration, counters, the per-tuple
//! clock and the uniform facade over both path semantics.
//!
//! Per incoming tuple, the affected spanning trees are partitioned
//! across a worker pool and updated in parallel (one tree per worker);
//! a barrier completes before events are merged in (ts, source, target)
//! order, so output is identical for any thread count.

use std::sync::Arc;

use rayon::ThreadPool;
use thiserror::Error;

use crate::delta::TreeStats;
use crate::oracle::Semantics;
use crate::query::CompiledQuery;
use crate::rapq::ArbitraryEngine;
use crate::results::{ResultEvent, ResultSet};
use crate::rspq::SimpleEngine;
use crate::stream::{SnapshotGraph, StreamingGraphTuple, Timestamp, WindowConfig};
use crate::vocab::VertexId;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("out-of-order tuple: timestamp {ts} after {last}")]
    OutOfOrder { ts: Timestamp, last: Timestamp },
    #[error("per-tuple expansion budget of {budget} node extensions exceeded at timestamp {ts}")]
    BudgetExceeded { budget: u64, ts: Timestamp },
    #[error("failed to build worker pool: {0}")]
    ThreadPool(String),
}

/// Engine-level configuration beyond the compiled query.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub window: WindowConfig,
    /// Worker threads for per-tree parallelism; 0 picks the default.
    pub threads: usize,
    /// Per-tuple cap on node extensions in simple mode; None = unlimited.
    pub expansion_budget: Option<u64>,
}

impl EngineConfig {
    pub fn new(window: WindowConfig) -> Self {
        EngineConfig { window, threads: 0, expansion_budget: None }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_expansion_budget(mut self, budget: Option<u64>) -> Self {
        self.expansion_budget = budget;
        self
    }
}

/// Aggregate counters maintained across the run.
#[derive(Debug, Default, Clone)]
pub struct EngineCounters {
    /// Tuples whose label belongs to the query alphabet.
    pub tuples_processed: u64,
    /// Tuples discarded because their label cannot occur in any result.
    pub tuples_skipped: u64,
    pub deletions_processed: u64,
    /// Time spent in tree sweeps and snapshot expiry.
    pub expiry_nanos: u128,
    pub snapshot_edges_expired: u64,
    pub tree_nodes_expired: u64,
    pub conflicts_detected: u64,
    pub unmark_invocations: u64,
    /// Vertices at which a conflict was observed (desk-scale diagnostics).
    pub conflict_vertices: std::collections::BTreeSet<VertexId>,
}

/// Timestamp bookkeeping: monotonicity, new-timestamp sweeps and
/// slide-boundary crossings for physical snapshot expiry.
#[derive(Debug, Default, Clone)]
pub(crate) struct Clock {
    last_ts: Option<Timestamp>,
    last_block: Option<u64>,
}

pub(crate) struct Tick {
    /// Strictly later than every previously seen timestamp.
    pub new_timestamp: bool,
    /// ⌊τ/β⌋ advanced; physical window expiry is due.
    pub crossed_slide: bool,
}

impl Clock {
    pub fn tick(&mut self, ts: Timestamp, slide: Timestamp) -> Result<Tick, EngineError> {
        if let Some(last) = self.last_ts {
            if ts < last {
                return Err(EngineError::OutOfOrder { ts, last });
            }
        }
        let new_timestamp = self.last_ts != Some(ts);
        let block = ts / slide;
        let crossed_slide = self.last_block != Some(block);
        self.last_ts = Some(ts);
        self.last_block = Some(block);
        Ok(Tick { new_timestamp, crossed_slide })
    }
}

pub(crate) fn build_pool(threads: usize) -> Result<Option<Arc<ThreadPool>>, EngineError> {
    if threads == 1 {
        return Ok(None);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map(|p| Some(Arc::new(p)))
        .map_err(|e| EngineError::ThreadPool(e.to_string()))
}

/// A registered persistent query under either path semantics.
pub enum Engine {
    Arbitrary(ArbitraryEngine),
    Simple(SimpleEngine),
}

impl Engine {
    pub fn new(
        query: &CompiledQuery,
        semantics: Semantics,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        Ok(match semantics {
            Semantics::Arbitrary => Engine::Arbitrary(ArbitraryEngine::new(query, cfg)?),
            Semantics::Simple => Engine::Simple(SimpleEngine::new(query, cfg)?),
        })
    }

    pub fn semantics(&self) -> Semantics {
        match self {
            Engine::Arbitrary(_) => Semantics::Arbitrary,
            Engine::Simple(_) => Semantics::Simple,
        }
    }

    pub fn process(
        &mut self,
        tuple: &StreamingGraphTuple,
    ) -> Result<Vec<ResultEvent>, EngineError> {
        match self {
            Engine::Arbitrary(e) => e.process(tuple),
            Engine::Simple(e) => e.process(tuple),
        }
    }

    pub fn results(&self) -> &ResultSet {
        match self {
            Engine::Arbitrary(e) => e.results(),
            Engine::Simple(e) => e.results(),
        }
    }

    pub fn counters(&self) -> &EngineCounters {
        match self {
            Engine::Arbitrary(e) => e.counters(),
            Engine::Simple(e) => e.counters(),
        }
    }

    pub fn snapshot(&self) -> &SnapshotGraph {
        match self {
            Engine::Arbitrary(e) => e.snapshot(),
            Engine::Simple(e) => e.snapshot(),
        }
    }

    pub fn delta_stats(&self) -> Vec<TreeStats> {
        match self {
            Engine::Arbitrary(e) => e.delta().stats(),
            Engine::Simple(e) => e.delta().stats(),
        }
    }

    pub fn delta_size(&self) -> (usize, usize, usize) {
        let delta = match self {
            Engine::Arbitrary(e) => e.delta(),
            Engine::Simple(e) => e.delta(),
        };
        (delta.len(), delta.total_nodes(), delta.total_markings())
    }
}
