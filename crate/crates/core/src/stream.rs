//! Streaming graph tuples, window arithmetic and the snapshot graph.
//!
//! The snapshot graph holds the distinct edges currently buffered for
//! the window, keyed by (source, label, target) with the latest
//! insertion timestamp. Expiry is physical removal; validity of an edge
//! at time τ is always the eager predicate `ts > τ − |W|`, re-checked at
//! every use so lazy physical expiry never changes results.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::fasthash::FastMap;
use std::fmt;

use thiserror::Error;

use crate::vocab::{Label, VertexId, Vocab};

/// Event timestamp in abstract time units.
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert,
    Delete,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Insert => "+",
            Op::Delete => "-",
        })
    }
}

/// One timestamped labeled edge event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamingGraphTuple {
    pub ts: Timestamp,
    pub source: VertexId,
    pub target: VertexId,
    pub label: Label,
    pub op: Op,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed tuple: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: out-of-order timestamp {ts} after {last}")]
    OutOfOrder { line: usize, ts: Timestamp, last: Timestamp },
}

/// Sliding window parameters: size |W| and slide β, both in time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub window: Timestamp,
    pub slide: Timestamp,
}

impl WindowConfig {
    pub fn new(window: Timestamp, slide: Timestamp) -> Self {
        assert!(window > 0, "window size must be positive");
        assert!(slide > 0, "slide interval must be positive");
        if window < slide {
            log::warn!(
                "window size {window} is smaller than slide {slide}; results will gap"
            );
        }
        WindowConfig { window, slide }
    }

    /// Eager expiry threshold at time τ: an edge or node is valid iff its
    /// timestamp is strictly greater. `None` when nothing can expire yet.
    pub fn expiry_bound(&self, now: Timestamp) -> Option<Timestamp> {
        now.checked_sub(self.window)
    }
}

/// Whether a timestamp is valid at time τ under the eager window bound.
pub fn in_window(ts: Timestamp, bound: Option<Timestamp>) -> bool {
    bound.map_or(true, |b| ts > b)
}

/// Reported window interval (W^b, W^e] at time τ; the lower bound is
/// clamped to zero near the start of time.
pub fn window_bounds(now: Timestamp, cfg: &WindowConfig) -> (Timestamp, Timestamp) {
    let end = (now / cfg.slide) * cfg.slide;
    (end.saturating_sub(cfg.window), end)
}

/// Parse one wire-format line: `ts<TAB>source<TAB>label<TAB>target<TAB>op`
/// with the trailing op optional, defaulting to insert.
pub fn parse_tuple(
    line: &str,
    line_no: usize,
    vocab: &mut Vocab,
) -> Result<StreamingGraphTuple, StreamError> {
    let malformed =
        |message: &str| StreamError::Malformed { line: line_no, message: message.to_owned() };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(malformed(&format!("expected 4 or 5 tab-separated fields, got {}", fields.len())));
    }
    let ts: Timestamp =
        fields[0].parse().map_err(|_| malformed(&format!("bad timestamp {:?}", fields[0])))?;
    let (source, label, target) = (fields[1], fields[2], fields[3]);
    if source.is_empty() || target.is_empty() {
        return Err(malformed("empty vertex id"));
    }
    if label.is_empty() || label.chars().any(|c| c.is_whitespace()) {
        return Err(malformed("label must be non-empty without whitespace"));
    }
    let op = match fields.get(4).copied() {
        None | Some("+") => Op::Insert,
        Some("-") => Op::Delete,
        Some(other) => return Err(malformed(&format!("bad op {other:?}"))),
    };
    Ok(StreamingGraphTuple {
        ts,
        source: vocab.vertex(source),
        target: vocab.vertex(target),
        label: vocab.label(label),
        op,
    })
}

/// How to treat timestamp regressions in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    /// Reject the stream with an error.
    #[default]
    Strict,
    /// Skip the offending tuple with a warning.
    SkipWithWarning,
}

/// Line-oriented reader enforcing timestamp monotonicity.
#[derive(Debug)]
pub struct TupleReader {
    last_ts: Option<Timestamp>,
    line_no: usize,
    policy: OrderPolicy,
}

impl TupleReader {
    pub fn new(policy: OrderPolicy) -> Self {
        TupleReader { last_ts: None, line_no: 0, policy }
    }

    /// Parse the next line; `Ok(None)` for comments, blanks and tuples
    /// skipped by the ordering policy.
    pub fn read_line(
        &mut self,
        line: &str,
        vocab: &mut Vocab,
    ) -> Result<Option<StreamingGraphTuple>, StreamError> {
        self.line_no += 1;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() || line.starts_with('#') {
            return Ok(None);
        }
        let tuple = parse_tuple(line, self.line_no, vocab)?;
        if let Some(last) = self.last_ts {
            if tuple.ts < last {
                match self.policy {
                    OrderPolicy::Strict => {
                        return Err(StreamError::OutOfOrder {
                            line: self.line_no,
                            ts: tuple.ts,
                            last,
                        })
                    }
                    OrderPolicy::SkipWithWarning => {
                        log::warn!(
                            "line {}: skipping out-of-order tuple (ts {} after {})",
                            self.line_no,
                            tuple.ts,
                            last
                        );
                        return Ok(None);
                    }
                }
            }
        }
        self.last_ts = Some(tuple.ts);
        Ok(Some(tuple))
    }
}

/// Outcome of applying a tuple to the snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Inserted,
    Refreshed,
    Deleted,
    DeleteMissed,
}

type AdjMap = FastMap<VertexId, BTreeMap<VertexId, Timestamp>>;

#[derive(Debug, Default, Clone)]
struct LabelAdjacency {
    forward: AdjMap,
    backward: AdjMap,
}

/// Label-indexed adjacency of the current window contents.
///
/// One writer at a time; reads and writes are never interleaved within
/// the processing of a single tuple. Expiry is driven by a journal of
/// insertion events in timestamp order; entries superseded by a refresh
/// or an explicit delete are skipped when popped.
#[derive(Debug, Default, Clone)]
pub struct SnapshotGraph {
    by_label: Vec<LabelAdjacency>,
    journal: VecDeque<(Timestamp, Label, VertexId, VertexId)>,
    edge_count: usize,
}

impl SnapshotGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn adj_mut(&mut self, label: Label) -> &mut LabelAdjacency {
        let idx = label.index();
        if idx >= self.by_label.len() {
            self.by_label.resize_with(idx + 1, LabelAdjacency::default);
        }
        &mut self.by_label[idx]
    }

    fn adj(&self, label: Label) -> Option<&LabelAdjacency> {
        self.by_label.get(label.index())
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Vertices with at least one incident edge. Computed by scanning
    /// the adjacency; intended for reporting, not per-tuple use.
    pub fn vertex_count(&self) -> usize {
        let mut seen: HashSet<VertexId> = HashSet::new();
        for adj in &self.by_label {
            for (&u, targets) in &adj.forward {
                if !targets.is_empty() {
                    seen.insert(u);
                    seen.extend(targets.keys().copied());
                }
            }
        }
        seen.len()
    }

    pub fn edge_timestamp(&self, source: VertexId, label: Label, target: VertexId) -> Option<Timestamp> {
        self.adj(label)?.forward.get(&source)?.get(&target).copied()
    }

    /// Out-edges of `source` with `label`, in target order.
    pub fn out_edges(
        &self,
        source: VertexId,
        label: Label,
    ) -> impl Iterator<Item = (VertexId, Timestamp)> + '_ {
        self.adj(label)
            .and_then(|adj| adj.forward.get(&source))
            .into_iter()
            .flat_map(|m| m.iter().map(|(&v, &ts)| (v, ts)))
    }

    /// In-edges of `target` with `label`, in source order.
    pub fn in_edges(
        &self,
        target: VertexId,
        label: Label,
    ) -> impl Iterator<Item = (VertexId, Timestamp)> + '_ {
        self.adj(label)
            .and_then(|adj| adj.backward.get(&target))
            .into_iter()
            .flat_map(|m| m.iter().map(|(&u, &ts)| (u, ts)))
    }

    /// Every edge currently buffered, (source, label, target, ts).
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, Label, VertexId, Timestamp)> + '_ {
        self.by_label.iter().enumerate().flat_map(|(idx, adj)| {
            let label = Label(idx as u32);
            adj.forward.iter().flat_map(move |(&u, targets)| {
                targets.iter().map(move |(&v, &ts)| (u, label, v, ts))
            })
        })
    }

    /// Apply one tuple: inserts upsert the edge with the larger
    /// timestamp; deletes remove the edge entirely.
    pub fn apply(&mut self, t: &StreamingGraphTuple) -> ApplyOutcome {
        match t.op {
            Op::Insert => self.upsert(t.source, t.label, t.target, t.ts),
            Op::Delete => self.remove(t.source, t.label, t.target),
        }
    }

    fn upsert(&mut self, u: VertexId, l: Label, v: VertexId, ts: Timestamp) -> ApplyOutcome {
        let adj = self.adj_mut(l);
        let outcome = match adj.forward.entry(u).or_default().entry(v) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let new = (*e.get()).max(ts);
                *e.get_mut() = new;
                adj.backward.entry(v).or_default().insert(u, new);
                ApplyOutcome::Refreshed
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(ts);
                adj.backward.entry(v).or_default().insert(u, ts);
                self.edge_count += 1;
                ApplyOutcome::Inserted
            }
        };
        self.journal.push_back((ts, l, u, v));
        outcome
    }

    fn unlink(&mut self, u: VertexId, l: Label, v: VertexId) -> Option<Timestamp> {
        let adj = self.by_label.get_mut(l.index())?;
        let targets = adj.forward.get_mut(&u)?;
        let ts = targets.remove(&v)?;
        if targets.is_empty() {
            adj.forward.remove(&u);
        }
        if let Some(sources) = adj.backward.get_mut(&v) {
            sources.remove(&u);
            if sources.is_empty() {
                adj.backward.remove(&v);
            }
        }
        self.edge_count -= 1;
        Some(ts)
    }

    fn remove(&mut self, u: VertexId, l: Label, v: VertexId) -> ApplyOutcome {
        match self.unlink(u, l, v) {
            Some(_) => ApplyOutcome::Deleted,
            None => {
                log::warn!("delete of absent edge ({u}, {l}, {v}); ignored");
                ApplyOutcome::DeleteMissed
            }
        }
    }

    /// Physically remove every edge with `ts <= bound`; returns the
    /// number removed. Journal entries superseded by refreshes or
    /// deletes are skipped.
    pub fn expire_edges(&mut self, bound: Option<Timestamp>) -> usize {
        let Some(bound) = bound else { return 0 };
        let mut removed = 0;
        while let Some(&(ts, l, u, v)) = self.journal.front() {
            if ts > bound {
                break;
            }
            self.journal.pop_front();
            if self.edge_timestamp(u, l, v) == Some(ts) {
                self.unlink(u, l, v);
                removed += 1;
            }
        }
        removed
    }

    /// Test-only audit: forward and backward adjacency must mirror each
    /// other, the journal must cover every live edge at its current
    /// timestamp, and the edge count must agree.
    pub fn audit_mirror(&self) -> Result<(), String> {
        let mut live = BTreeSet::new();
        for (idx, adj) in self.by_label.iter().enumerate() {
            let l = Label(idx as u32);
            for (&u, targets) in &adj.forward {
                for (&v, &ts) in targets {
                    live.insert((ts, l, u, v));
                    match adj.backward.get(&v).and_then(|m| m.get(&u)) {
                        Some(&back) if back == ts => {}
                        other => {
                            return Err(format!(
                                "edge ({u},{l},{v}) ts {ts} not mirrored: {other:?}"
                            ))
                        }
                    }
                }
            }
            for (&v, sources) in &adj.backward {
                for (&u, &ts) in sources {
                    if adj.forward.get(&u).and_then(|m| m.get(&v)) != Some(&ts) {
                        return Err(format!("backward edge ({u},{l},{v}) ts {ts} unmatched"));
                    }
                }
            }
        }
        let journaled: BTreeSet<_> = self.journal.iter().copied().collect();
        if let Some(missing) = live.difference(&journaled).next() {
            return Err(format!("live edge {missing:?} missing from the journal"));
        }
        if live.len() != self.edge_count {
            return Err("edge count drifted".to_owned());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(
        vocab: &mut Vocab,
        ts: Timestamp,
        source: &str,
        label: &str,
        target: &str,
        op: Op,
    ) -> StreamingGraphTuple {
        StreamingGraphTuple {
            ts,
            source: vocab.vertex(source),
            target: vocab.vertex(target),
            label: vocab.label(label),
            op,
        }
    }

    #[test]
    fn parse_five_field_line() {
        let mut vocab = Vocab::new();
        let t = parse_tuple("13\tx\tfollows\ty\t+", 1, &mut vocab).unwrap();
        assert_eq!(t.ts, 13);
        assert_eq!(vocab.vertex_name(t.source), "x");
        assert_eq!(vocab.label_name(t.label), "follows");
        assert_eq!(vocab.vertex_name(t.target), "y");
        assert_eq!(t.op, Op::Insert);
    }

    #[test]
    fn parse_four_field_line_defaults_insert() {
        let mut vocab = Vocab::new();
        let t = parse_tuple("4\ty\tmentions\tu", 1, &mut vocab).unwrap();
        assert_eq!(t.ts, 4);
        assert_eq!(t.op, Op::Insert);
    }

    #[test]
    fn parse_three_fields_is_malformed() {
        let mut vocab = Vocab::new();
        let err = parse_tuple("5\tx\tfollows", 3, &mut vocab).unwrap_err();
        assert!(matches!(err, StreamError::Malformed { line: 3, .. }));
    }

    #[test]
    fn window_bounds_examples() {
        assert_eq!(window_bounds(18, &WindowConfig::new(15, 1)), (3, 18));
        assert_eq!(window_bounds(19, &WindowConfig::new(15, 5)), (0, 15));
        assert_eq!(window_bounds(0, &WindowConfig::new(15, 1)), (0, 0));
    }

    #[test]
    fn upsert_keeps_latest_timestamp() {
        let mut vocab = Vocab::new();
        let mut g = SnapshotGraph::new();
        g.apply(&tuple(&mut vocab, 4, "y", "mentions", "u", Op::Insert));
        g.apply(&tuple(&mut vocab, 9, "y", "mentions", "u", Op::Insert));
        assert_eq!(g.edge_count(), 1);
        let y = vocab.vertex("y");
        let u = vocab.vertex("u");
        let m = vocab.label("mentions");
        assert_eq!(g.edge_timestamp(y, m, u), Some(9));
        g.audit_mirror().unwrap();
    }

    #[test]
    fn delete_removes_both_directions() {
        let mut vocab = Vocab::new();
        let mut g = SnapshotGraph::new();
        g.apply(&tuple(&mut vocab, 4, "y", "mentions", "u", Op::Insert));
        g.apply(&tuple(&mut vocab, 5, "y", "mentions", "u", Op::Delete));
        let y = vocab.vertex("y");
        let u = vocab.vertex("u");
        let m = vocab.label("mentions");
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.out_edges(y, m).count(), 0);
        assert_eq!(g.in_edges(u, m).count(), 0);
        g.audit_mirror().unwrap();
    }

    #[test]
    fn delete_of_absent_edge_is_noop() {
        let mut vocab = Vocab::new();
        let mut g = SnapshotGraph::new();
        let out = g.apply(&tuple(&mut vocab, 5, "a", "q", "b", Op::Delete));
        assert_eq!(out, ApplyOutcome::DeleteMissed);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn expiry_boundary_is_inclusive() {
        let mut vocab = Vocab::new();
        let mut g = SnapshotGraph::new();
        g.apply(&tuple(&mut vocab, 4, "a", "l", "b", Op::Insert));
        g.apply(&tuple(&mut vocab, 10, "b", "l", "c", Op::Insert));
        g.apply(&tuple(&mut vocab, 14, "c", "l", "d", Op::Insert));
        let cfg = WindowConfig::new(15, 1);
        let removed = g.expire_edges(cfg.expiry_bound(19));
        assert_eq!(removed, 1);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.expire_edges(cfg.expiry_bound(19)), 0);
        g.audit_mirror().unwrap();
        let mut empty = SnapshotGraph::new();
        assert_eq!(empty.expire_edges(Some(100)), 0);
    }

    #[test]
    fn reader_rejects_regressions() {
        let mut vocab = Vocab::new();
        let mut reader = TupleReader::new(OrderPolicy::Strict);
        reader.read_line("5\ta\tl\tb", &mut vocab).unwrap();
        let err = reader.read_line("4\ta\tl\tc", &mut vocab).unwrap_err();
        assert!(matches!(err, StreamError::OutOfOrder { .. }));

        let mut skipping = TupleReader::new(OrderPolicy::SkipWithWarning);
        skipping.read_line("5\ta\tl\tb", &mut vocab).unwrap();
        assert!(skipping.read_line("4\ta\tl\tc", &mut vocab).unwrap().is_none());
        // Ties are allowed.
        assert!(skipping.read_line("5\ta\tl\td", &mut vocab).unwrap().is_some());
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let mut vocab = Vocab::new();
        let mut reader = TupleReader::new(OrderPolicy::Strict);
        assert!(reader.read_line("# header", &mut vocab).unwrap().is_none());
        assert!(reader.read_line("", &mut vocab).unwrap().is_none());
        assert!(reader.read_line("1\ta\tl\tb\t+\n", &mut vocab).unwrap().is_some());
    }
}
