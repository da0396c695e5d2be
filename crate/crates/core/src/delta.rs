//! The Δ tree index: one spanning tree per discovered root vertex.
//!
//! A tree node (u, s) records that some path from the root vertex
//! reaches vertex u while driving the automaton to state s. Each node
//! carries the minimum edge timestamp along its tree path; the root sits
//! at +∞ and explicit deletions mark doomed subtrees with −∞ so the
//! ordinary expiry machinery collects them.
//!
//! Arbitrary path semantics stores at most one node per (vertex, state)
//! key; simple path semantics stores one node per distinct occurrence
//! and additionally maintains the marking set M_x as per-node flags.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeSet};

use crate::fasthash::FastMap;
use std::fmt;

use crate::query::StateId;
use crate::stream::Timestamp;
use crate::vocab::{Label, VertexId};

/// Node timestamp: −∞ < At(t) < +∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeTs {
    NegInf,
    At(Timestamp),
    PosInf,
}

impl NodeTs {
    pub fn min_with(self, other: NodeTs) -> NodeTs {
        self.min(other)
    }

    /// Valid at time τ iff strictly above the expiry bound τ − |W|.
    pub fn in_window(self, bound: Option<Timestamp>) -> bool {
        match (self, bound) {
            (_, None) => !matches!(self, NodeTs::NegInf),
            (NodeTs::NegInf, _) => false,
            (NodeTs::PosInf, _) => true,
            (NodeTs::At(ts), Some(b)) => ts > b,
        }
    }
}

impl fmt::Display for NodeTs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeTs::NegInf => f.write_str("-inf"),
            NodeTs::At(ts) => write!(f, "{ts}"),
            NodeTs::PosInf => f.write_str("+inf"),
        }
    }
}

/// Slot index of a node within its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub vertex: VertexId,
    pub state: StateId,
    pub ts: NodeTs,
    pub parent: Option<NodeId>,
    /// Label of the edge realizing the parent link; `None` at the root.
    pub via: Option<Label>,
    children: Vec<NodeId>,
    pub marked: bool,
    live: bool,
    /// Bumped on slot reuse so stale expiry entries can be recognized.
    generation: u32,
}

/// Occurrence storage for one (vertex, state) key; almost always a
/// single node, with spill to a vector only for the multi-occurrence
/// cases of simple path semantics.
#[derive(Debug, Clone)]
enum OccSlot {
    One(NodeId),
    Many(Vec<NodeId>),
}

impl OccSlot {
    fn as_slice(&self) -> &[NodeId] {
        match self {
            OccSlot::One(id) => std::slice::from_ref(id),
            OccSlot::Many(ids) => ids,
        }
    }

    fn push(&mut self, id: NodeId) {
        match self {
            OccSlot::One(first) => *self = OccSlot::Many(vec![*first, id]),
            OccSlot::Many(ids) => ids.push(id),
        }
    }

    /// Remove `id`; true when the slot is now empty.
    fn remove(&mut self, id: NodeId) -> bool {
        match self {
            OccSlot::One(only) => {
                debug_assert_eq!(*only, id);
                true
            }
            OccSlot::Many(ids) => {
                if let Some(pos) = ids.iter().position(|&c| c == id) {
                    ids.swap_remove(pos);
                }
                ids.is_empty()
            }
        }
    }
}

/// A node detached by an expiry pass, with enough context for
/// reconnection and the re-marking rule.
#[derive(Debug, Clone, Copy)]
pub struct Detached {
    pub vertex: VertexId,
    pub state: StateId,
    pub ts: NodeTs,
    pub was_marked: bool,
    /// Former parent, if it survived the prune.
    pub surviving_parent: Option<NodeId>,
}

/// One spanning tree rooted at (x, s₀).
///
/// Node slots are recycled in place (allocations kept) and the expiry
/// index is a lazy min-heap: superseded entries are skipped on pop by
/// comparing the slot generation and stored timestamp.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    root_vertex: VertexId,
    root: NodeId,
    slots: Vec<TreeNode>,
    free: Vec<NodeId>,
    lookup: FastMap<(VertexId, StateId), OccSlot>,
    expiry: BinaryHeap<Reverse<(NodeTs, NodeId, u32)>>,
    vertex_counts: FastMap<VertexId, u32>,
    node_count: usize,
    marking_count: usize,
    /// Vertices whose per-tree occupancy crossed 0↔1 since last drain.
    occupancy_changes: Vec<(VertexId, bool)>,
}

impl SpanningTree {
    /// A fresh tree containing only the root node (x, s₀) at +∞.
    pub fn new(root_vertex: VertexId, start_state: StateId, mark_root: bool) -> Self {
        let root_node = TreeNode {
            vertex: root_vertex,
            state: start_state,
            ts: NodeTs::PosInf,
            parent: None,
            via: None,
            children: Vec::new(),
            marked: mark_root,
            live: true,
            generation: 0,
        };
        let mut tree = SpanningTree {
            root_vertex,
            root: NodeId(0),
            slots: vec![root_node],
            free: Vec::new(),
            lookup: FastMap::default(),
            expiry: BinaryHeap::new(),
            vertex_counts: FastMap::default(),
            node_count: 1,
            marking_count: usize::from(mark_root),
            occupancy_changes: Vec::new(),
        };
        tree.lookup.insert((root_vertex, start_state), OccSlot::One(tree.root));
        tree.note_vertex_added(root_vertex);
        tree
    }

    pub fn root_vertex(&self) -> VertexId {
        self.root_vertex
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.node_count
    }

    pub fn is_empty(&self) -> bool {
        self.node_count == 0
    }

    pub fn markings(&self) -> usize {
        self.marking_count
    }

    /// Only the root remains; eligible for garbage collection.
    pub fn is_bare(&self) -> bool {
        self.node_count == 1
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        let node = &self.slots[id.index()];
        debug_assert!(node.live, "stale node id");
        node
    }

    fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        let node = &mut self.slots[id.index()];
        debug_assert!(node.live, "stale node id");
        node
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.slots.get(id.index()).is_some_and(|n| n.live)
    }

    /// Occurrences of (vertex, state); at most one under arbitrary semantics.
    pub fn occurrences(&self, vertex: VertexId, state: StateId) -> &[NodeId] {
        self.lookup.get(&(vertex, state)).map_or(&[], OccSlot::as_slice)
    }

    pub fn single(&self, vertex: VertexId, state: StateId) -> Option<NodeId> {
        match self.occurrences(vertex, state) {
            [] => None,
            [id] => Some(*id),
            more => {
                debug_assert!(false, "expected unique occurrence, found {}", more.len());
                Some(more[0])
            }
        }
    }

    /// The marked occurrence of (vertex, state), if any.
    pub fn marked_occurrence(&self, vertex: VertexId, state: StateId) -> Option<NodeId> {
        self.occurrences(vertex, state)
            .iter()
            .copied()
            .find(|&id| self.node(id).marked)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.node(id).children
    }

    fn note_vertex_added(&mut self, v: VertexId) {
        let count = self.vertex_counts.entry(v).or_insert(0);
        *count += 1;
        if *count == 1 {
            self.occupancy_changes.push((v, true));
        }
    }

    fn note_vertex_removed(&mut self, v: VertexId) {
        let count = self.vertex_counts.get_mut(&v).expect("vertex count underflow");
        *count -= 1;
        if *count == 0 {
            self.vertex_counts.remove(&v);
            self.occupancy_changes.push((v, false));
        }
    }

    /// Drain the 0↔1 vertex-occupancy transitions accumulated since the
    /// last call; consumed by the cross-tree vertex index.
    pub fn drain_occupancy_changes(&mut self) -> Vec<(VertexId, bool)> {
        std::mem::take(&mut self.occupancy_changes)
    }

    /// Link a new node under `parent`. The caller is responsible for
    /// semantics-specific uniqueness rules.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        vertex: VertexId,
        state: StateId,
        ts: NodeTs,
        via: Label,
        marked: bool,
    ) -> NodeId {
        debug_assert!(self.contains(parent));
        let (id, generation) = match self.free.pop() {
            Some(id) => {
                // Recycle the slot in place, keeping its allocations.
                let slot = &mut self.slots[id.index()];
                debug_assert!(!slot.live && slot.children.is_empty());
                slot.vertex = vertex;
                slot.state = state;
                slot.ts = ts;
                slot.parent = Some(parent);
                slot.via = Some(via);
                slot.marked = marked;
                slot.live = true;
                slot.generation = slot.generation.wrapping_add(1);
                (id, slot.generation)
            }
            None => {
                self.slots.push(TreeNode {
                    vertex,
                    state,
                    ts,
                    parent: Some(parent),
                    via: Some(via),
                    children: Vec::new(),
                    marked,
                    live: true,
                    generation: 0,
                });
                (NodeId((self.slots.len() - 1) as u32), 0)
            }
        };
        self.node_mut(parent).children.push(id);
        match self.lookup.entry((vertex, state)) {
            std::collections::hash_map::Entry::Occupied(mut e) => e.get_mut().push(id),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(OccSlot::One(id));
            }
        }
        self.expiry.push(Reverse((ts, id, generation)));
        self.node_count += 1;
        self.marking_count += usize::from(marked);
        self.note_vertex_added(vertex);
        id
    }

    pub fn set_marked(&mut self, id: NodeId, marked: bool) {
        let node = self.node_mut(id);
        if node.marked != marked {
            node.marked = marked;
            if marked {
                self.marking_count += 1;
            } else {
                self.marking_count -= 1;
            }
        }
    }

    /// Overwrite a node's timestamp; the old expiry entry goes stale and
    /// is skipped when popped.
    pub fn set_timestamp(&mut self, id: NodeId, ts: NodeTs) {
        debug_assert!(id != self.root, "root timestamp is fixed at +inf");
        let node = self.node_mut(id);
        if node.ts == ts {
            return;
        }
        node.ts = ts;
        let generation = node.generation;
        self.expiry.push(Reverse((ts, id, generation)));
    }

    /// Mark the still-valid part of the subtree under `id` (inclusive)
    /// as −∞. Nodes already at or below the bound expired on their own;
    /// they are left for the ordinary suppressed expiry, and their own
    /// descendants cannot be valid either.
    pub fn doom_subtree(&mut self, id: NodeId, bound: Option<Timestamp>) {
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            if !self.node(cur).ts.in_window(bound) {
                continue;
            }
            stack.extend_from_slice(&self.node(cur).children);
            self.set_timestamp(cur, NodeTs::NegInf);
        }
    }

    /// Smallest node timestamp in the tree (the root does not count);
    /// discards superseded entries along the way.
    pub fn min_ts(&mut self) -> NodeTs {
        while let Some(&Reverse((ts, id, generation))) = self.expiry.peek() {
            let node = &self.slots[id.index()];
            if node.live && node.generation == generation && node.ts == ts {
                return ts;
            }
            self.expiry.pop();
        }
        NodeTs::PosInf
    }

    /// Detach every node with `ts <= bound`. Timestamps decrease along
    /// parent links away from the root, so the detached set is a union of
    /// complete subtrees. Returns the detached nodes in ascending
    /// (timestamp, slot) order.
    pub fn detach_expired(&mut self, bound: Option<Timestamp>) -> Vec<Detached> {
        let mut popped: Vec<(NodeTs, NodeId)> = Vec::new();
        while let Some(&Reverse((ts, id, generation))) = self.expiry.peek() {
            if ts.in_window(bound) {
                break;
            }
            self.expiry.pop();
            let node = &self.slots[id.index()];
            if node.live && node.generation == generation && node.ts == ts {
                popped.push((ts, id));
            }
        }
        if popped.is_empty() {
            return Vec::new();
        }
        // Timestamps never increase away from the root, so the popped set
        // is closed under descendants; mark first, then unlink.
        for &(_, id) in &popped {
            self.slots[id.index()].live = false;
        }
        let mut out = Vec::with_capacity(popped.len());
        for &(ts, id) in &popped {
            let (vertex, state, was_marked, parent) = {
                let node = &mut self.slots[id.index()];
                node.children.clear();
                (node.vertex, node.state, node.marked, node.parent)
            };
            let surviving_parent = parent.filter(|&p| self.slots[p.index()].live);
            if let Some(p) = surviving_parent {
                let children = &mut self.slots[p.index()].children;
                if let Some(pos) = children.iter().position(|&c| c == id) {
                    children.swap_remove(pos);
                }
            }
            self.remove_from_lookup(vertex, state, id);
            self.free.push(id);
            self.node_count -= 1;
            self.marking_count -= usize::from(was_marked);
            self.note_vertex_removed(vertex);
            out.push(Detached { vertex, state, ts, was_marked, surviving_parent });
        }
        out
    }

    fn remove_from_lookup(&mut self, vertex: VertexId, state: StateId, id: NodeId) {
        if let Some(slot) = self.lookup.get_mut(&(vertex, state)) {
            if slot.remove(id) {
                self.lookup.remove(&(vertex, state));
            }
        }
    }

    /// Node sequence from the root to `id`, inclusive.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(parent) = self.node(cur).parent {
            path.push(parent);
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Word along the tree path to `id` (root end first).
    pub fn path_label(&self, id: NodeId) -> Vec<Label> {
        let mut word: Vec<Label> = Vec::new();
        let mut cur = id;
        while let Some(parent) = self.node(cur).parent {
            word.push(self.node(cur).via.expect("non-root node without via label"));
            cur = parent;
        }
        word.reverse();
        word
    }

    /// Test-oriented structural audit: parent walks terminate at the
    /// root, the lookup index matches reachability, counters agree, and
    /// child timestamps never exceed their parent's.
    pub fn audit_structure(&self) -> Result<(), String> {
        let mut reachable = std::collections::HashSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !reachable.insert(id) {
                return Err(format!("cycle through node {id:?}"));
            }
            let node = self.node(id);
            for &c in &node.children {
                let child = self.node(c);
                if child.parent != Some(id) {
                    return Err(format!("child {c:?} disowns parent {id:?}"));
                }
                if child.ts > node.ts {
                    return Err(format!(
                        "timestamp coherence violated: child {c:?} {} above parent {}",
                        child.ts, node.ts
                    ));
                }
                stack.push(c);
            }
        }
        if reachable.len() != self.node_count {
            return Err(format!(
                "node count {} but {} reachable from root",
                self.node_count,
                reachable.len()
            ));
        }
        let mut indexed = 0;
        for (&(v, s), ids) in &self.lookup {
            for &id in ids.as_slice() {
                indexed += 1;
                if !reachable.contains(&id) {
                    return Err(format!("lookup holds unreachable node ({v}, {s})"));
                }
                let node = self.node(id);
                if node.vertex != v || node.state != s {
                    return Err("lookup key mismatch".to_owned());
                }
            }
        }
        if indexed != self.node_count {
            return Err("lookup index incomplete".to_owned());
        }
        let marked = reachable.iter().filter(|&&id| self.node(id).marked).count();
        if marked != self.marking_count {
            return Err("marking count drifted".to_owned());
        }
        Ok(())
    }

    /// All live node ids (test support).
    pub fn node_ids(&self) -> Vec<NodeId> {
        (0..self.slots.len())
            .map(|i| NodeId(i as u32))
            .filter(|&id| self.contains(id))
            .collect()
    }

    /// Heap entries currently buffered, for memory diagnostics.
    pub fn expiry_backlog(&self) -> usize {
        self.expiry.len()
    }
}

/// Per-tree size summary for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeStats {
    pub root: VertexId,
    pub nodes: usize,
    pub markings: usize,
}

/// The collection of spanning trees plus a cross-tree vertex index used
/// to visit only trees that can possibly react to an edge at a vertex.
#[derive(Debug, Default)]
pub struct DeltaIndex {
    trees: FastMap<VertexId, SpanningTree>,
    /// roots of trees containing at least one node at the given vertex.
    vertex_trees: FastMap<VertexId, BTreeSet<VertexId>>,
    /// Lazy min-queue of (min node ts, root) used to find trees with
    /// expired nodes without scanning every tree; `queued` holds the
    /// authoritative entry per root, everything else is skipped on pop.
    sweep_queue: BinaryHeap<Reverse<(NodeTs, VertexId)>>,
    queued: FastMap<VertexId, NodeTs>,
}

impl DeltaIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn total_nodes(&self) -> usize {
        self.trees.values().map(SpanningTree::len).sum()
    }

    pub fn total_markings(&self) -> usize {
        self.trees.values().map(SpanningTree::markings).sum()
    }

    pub fn tree(&self, root: VertexId) -> Option<&SpanningTree> {
        self.trees.get(&root)
    }

    pub fn roots(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.trees.keys().copied()
    }

    /// Existing tree for `root`, or a fresh one holding only (root, s₀).
    /// Callers create trees lazily, only when an out-edge of `root` has a
    /// transition from the start state.
    pub fn get_or_create_tree(
        &mut self,
        root: VertexId,
        start_state: StateId,
        mark_root: bool,
    ) -> &mut SpanningTree {
        let tree = self
            .trees
            .entry(root)
            .or_insert_with(|| SpanningTree::new(root, start_state, mark_root));
        let changes = tree.drain_occupancy_changes();
        for (v, added) in changes {
            debug_assert!(added);
            self.vertex_trees.entry(v).or_default().insert(root);
        }
        self.trees.get_mut(&root).expect("just inserted")
    }

    /// Roots of trees with a node at `vertex`.
    pub fn trees_at_vertex(&self, vertex: VertexId) -> Vec<VertexId> {
        let mut out = Vec::new();
        self.collect_trees_at_vertex(vertex, &mut out);
        out
    }

    /// Like [`DeltaIndex::trees_at_vertex`] but reusing the caller's buffer.
    pub fn collect_trees_at_vertex(&self, vertex: VertexId, out: &mut Vec<VertexId>) {
        out.clear();
        if let Some(set) = self.vertex_trees.get(&vertex) {
            out.extend(set.iter().copied());
        }
    }

    /// Run `f` over the named trees. Small batches are processed in
    /// place; large ones are moved out and updated on the worker pool,
    /// one tree per worker. Occupancy deltas, the sweep queue and (when
    /// `gc` is set) removal of bare trees are applied behind the barrier
    /// either way.
    pub fn process_trees<R: Send>(
        &mut self,
        roots: &[VertexId],
        pool: Option<&rayon::ThreadPool>,
        gc: bool,
        f: impl Fn(&mut SpanningTree) -> R + Sync,
    ) -> Vec<R> {
        const INLINE_LIMIT: usize = 512;
        if roots.is_empty() {
            return Vec::new();
        }
        if let Some(pool) = pool {
            if roots.len() >= INLINE_LIMIT {
                use rayon::prelude::*;
                let mut taken = self.take_trees(roots);
                let out = pool.install(|| taken.par_iter_mut().map(&f).collect());
                self.restore_trees(taken, gc);
                return out;
            }
        }
        let mut out = Vec::with_capacity(roots.len());
        let mut removals: Vec<VertexId> = Vec::new();
        for &root in roots {
            let Some(tree) = self.trees.get_mut(&root) else { continue };
            out.push(f(tree));
            let changes = tree.drain_occupancy_changes();
            let bare = gc && tree.is_bare();
            let min_ts = tree.min_ts();
            for (v, added) in changes {
                if added {
                    self.vertex_trees.entry(v).or_default().insert(root);
                } else if let Some(set) = self.vertex_trees.get_mut(&v) {
                    set.remove(&root);
                    if set.is_empty() {
                        self.vertex_trees.remove(&v);
                    }
                }
            }
            if bare {
                removals.push(root);
            } else {
                self.enqueue_for_sweep(root, min_ts);
            }
        }
        for root in removals {
            self.trees.remove(&root);
            self.queued.remove(&root);
            if let Some(set) = self.vertex_trees.get_mut(&root) {
                set.remove(&root);
                if set.is_empty() {
                    self.vertex_trees.remove(&root);
                }
            }
        }
        out
    }

    /// Take trees out of the index for independent parallel mutation;
    /// return them with [`DeltaIndex::restore_trees`].
    fn take_trees(&mut self, roots: &[VertexId]) -> Vec<SpanningTree> {
        roots.iter().filter_map(|r| self.trees.remove(r)).collect()
    }

    /// Reinsert mutated trees, apply their occupancy deltas, refresh the
    /// sweep queue and drop bare trees when `gc` is set.
    fn restore_trees(&mut self, trees: Vec<SpanningTree>, gc: bool) {
        for mut tree in trees {
            let root = tree.root_vertex();
            for (v, added) in tree.drain_occupancy_changes() {
                if added {
                    self.vertex_trees.entry(v).or_default().insert(root);
                } else if let Some(set) = self.vertex_trees.get_mut(&v) {
                    set.remove(&root);
                    if set.is_empty() {
                        self.vertex_trees.remove(&v);
                    }
                }
            }
            if gc && tree.is_bare() {
                if let Some(set) = self.vertex_trees.get_mut(&root) {
                    set.remove(&root);
                    if set.is_empty() {
                        self.vertex_trees.remove(&root);
                    }
                }
                self.queued.remove(&root);
                continue;
            }
            self.enqueue_for_sweep(root, tree.min_ts());
            self.trees.insert(root, tree);
        }
    }

    fn enqueue_for_sweep(&mut self, root: VertexId, min_ts: NodeTs) {
        if min_ts == NodeTs::PosInf {
            return;
        }
        let current = self.queued.get(&root).copied();
        if current.is_none_or(|q| min_ts < q) {
            self.sweep_queue.push(Reverse((min_ts, root)));
            self.queued.insert(root, min_ts);
        }
    }

    /// Roots of trees that may hold nodes at or below the bound.
    pub fn trees_to_sweep(&mut self, bound: Option<Timestamp>) -> Vec<VertexId> {
        let mut out = Vec::new();
        while let Some(&Reverse((ts, root))) = self.sweep_queue.peek() {
            if ts.in_window(bound) {
                break;
            }
            self.sweep_queue.pop();
            if self.queued.get(&root) == Some(&ts) {
                self.queued.remove(&root);
                if self.trees.contains_key(&root) {
                    out.push(root);
                }
            }
        }
        out
    }

    pub fn stats(&self) -> Vec<TreeStats> {
        let mut out: Vec<TreeStats> = self
            .trees
            .values()
            .map(|t| TreeStats { root: t.root_vertex(), nodes: t.len(), markings: t.markings() })
            .collect();
        out.sort_by_key(|s| s.root);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> VertexId {
        VertexId(i)
    }

    fn l(i: u32) -> Label {
        Label(i)
    }

    #[test]
    fn create_is_idempotent() {
        let mut delta = DeltaIndex::new();
        let first_len = {
            let tree = delta.get_or_create_tree(v(1), 0, false);
            tree.len()
        };
        assert_eq!(first_len, 1);
        {
            let tree = delta.get_or_create_tree(v(1), 0, false);
            assert_eq!(tree.len(), 1);
            assert_eq!(tree.root_vertex(), v(1));
        }
        assert_eq!(delta.len(), 1);
        assert_eq!(delta.trees_at_vertex(v(1)), vec![v(1)]);
    }

    #[test]
    fn child_timestamp_is_min_of_parent_and_edge() {
        let mut tree = SpanningTree::new(v(0), 0, false);
        let root = tree.root();
        // Under the root (+inf) the edge timestamp wins.
        let a = tree.add_child(root, v(1), 1, NodeTs::At(13), l(0), false);
        assert_eq!(tree.node(a).ts, NodeTs::At(13));
        // min(parent 4, edge 10) = 4 is the caller's contract; the tree
        // stores whatever the engine computed.
        let b = tree.add_child(a, v(2), 2, NodeTs::At(4).min_with(NodeTs::At(10)), l(1), false);
        assert_eq!(tree.node(b).ts, NodeTs::At(4));
        tree.audit_structure().unwrap();
    }

    #[test]
    fn doomed_nodes_expire_first() {
        let mut tree = SpanningTree::new(v(0), 0, false);
        let root = tree.root();
        let a = tree.add_child(root, v(1), 1, NodeTs::At(10), l(0), false);
        let b = tree.add_child(a, v(2), 2, NodeTs::At(9), l(1), false);
        let _c = tree.add_child(root, v(3), 1, NodeTs::At(12), l(0), false);
        tree.doom_subtree(a, None);
        assert_eq!(tree.node(a).ts, NodeTs::NegInf);
        assert_eq!(tree.node(b).ts, NodeTs::NegInf);
        // Even with no numeric bound, doomed nodes are detached.
        let detached = tree.detach_expired(None);
        assert_eq!(detached.len(), 2);
        assert!(detached.iter().all(|d| d.ts == NodeTs::NegInf));
        assert_eq!(tree.len(), 2);
        tree.audit_structure().unwrap();
    }

    #[test]
    fn detach_respects_bound_inclusively() {
        let mut tree = SpanningTree::new(v(0), 0, false);
        let root = tree.root();
        let a = tree.add_child(root, v(1), 1, NodeTs::At(4), l(0), false);
        let _b = tree.add_child(a, v(2), 2, NodeTs::At(4), l(1), false);
        let _c = tree.add_child(root, v(3), 1, NodeTs::At(12), l(0), false);
        let detached = tree.detach_expired(Some(4));
        assert_eq!(detached.len(), 2);
        assert_eq!(tree.len(), 2);
        assert_eq!(tree.min_ts(), NodeTs::At(12));
        assert!(tree.occurrences(v(1), 1).is_empty());
        tree.audit_structure().unwrap();
    }

    #[test]
    fn path_to_root_materializes_in_root_order() {
        let mut tree = SpanningTree::new(v(0), 0, false);
        let root = tree.root();
        let a = tree.add_child(root, v(1), 1, NodeTs::At(13), l(0), false);
        let b = tree.add_child(a, v(2), 2, NodeTs::At(4), l(1), false);
        let path = tree.path_to_root(b);
        assert_eq!(path, vec![root, a, b]);
        assert_eq!(tree.path_label(b), vec![l(0), l(1)]);
        assert_eq!(tree.path_to_root(root), vec![root]);
    }

    #[test]
    fn sweep_queue_finds_expiring_trees() {
        let mut delta = DeltaIndex::new();
        delta.get_or_create_tree(v(1), 0, false);
        // process_trees keeps the queue in sync after mutations.
        delta.process_trees(&[v(1)], None, true, |tree| {
            let root = tree.root();
            tree.add_child(root, v(2), 1, NodeTs::At(4), l(0), false);
        });
        assert!(delta.trees_to_sweep(Some(3)).is_empty());
        assert_eq!(delta.trees_to_sweep(Some(4)), vec![v(1)]);
        // A bare tree is collected when gc is requested.
        delta.process_trees(&[v(1)], None, true, |tree| {
            tree.detach_expired(Some(4));
        });
        assert!(delta.tree(v(1)).is_none());
        assert!(delta.trees_at_vertex(v(1)).is_empty());
    }
}
