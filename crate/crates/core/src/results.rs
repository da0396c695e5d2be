//! The append-only result stream and its membership index.

use serde::Serialize;

use crate::fasthash::FastSet;
use crate::stream::Timestamp;
use crate::vocab::VertexId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        })
    }
}

/// One element of the output stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResultEvent {
    pub ts: Timestamp,
    pub source: VertexId,
    pub target: VertexId,
    pub sign: Sign,
}

/// Vertex pairs currently derivable, with transition-edge emission: a
/// `+` event fires only on absent→present, a `-` only on present→absent.
#[derive(Debug, Default, Clone)]
pub struct ResultSet {
    present: FastSet<(VertexId, VertexId)>,
    emitted: usize,
}

impl ResultSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, source: VertexId, target: VertexId) -> bool {
        self.present.contains(&(source, target))
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    /// Total events ever emitted through this set.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn pairs(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.present.iter().copied()
    }

    pub fn sorted_pairs(&self) -> Vec<(VertexId, VertexId)> {
        let mut out: Vec<_> = self.present.iter().copied().collect();
        out.sort_unstable();
        out
    }

    pub fn apply_positive(
        &mut self,
        ts: Timestamp,
        source: VertexId,
        target: VertexId,
    ) -> Option<ResultEvent> {
        if self.present.insert((source, target)) {
            self.emitted += 1;
            Some(ResultEvent { ts, source, target, sign: Sign::Positive })
        } else {
            None
        }
    }

    pub fn apply_negative(
        &mut self,
        ts: Timestamp,
        source: VertexId,
        target: VertexId,
    ) -> Option<ResultEvent> {
        if self.present.remove(&(source, target)) {
            self.emitted += 1;
            Some(ResultEvent { ts, source, target, sign: Sign::Negative })
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_fire_only_on_transitions() {
        let mut set = ResultSet::new();
        let (a, b) = (VertexId(1), VertexId(2));
        assert!(set.apply_positive(5, a, b).is_some());
        assert!(set.apply_positive(6, a, b).is_none());
        assert!(set.contains(a, b));
        assert!(set.apply_negative(7, a, b).is_some());
        assert!(set.apply_negative(7, a, b).is_none());
        assert!(set.apply_positive(9, a, b).is_some());
        assert_eq!(set.emitted(), 3);
    }
}
