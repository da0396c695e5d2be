//! String interning for vertex names and edge labels.
//!
//! All engine-internal structures work on dense integer ids; the
//! [`Vocab`] owned by a session maps them back to the original strings
//! for output. Interning is bijective within one session: equal strings
//! map to equal ids and vice versa.

use std::collections::HashMap;
use std::fmt;

/// Interned edge label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

/// Interned vertex identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l#{}", self.0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v#{}", self.0)
    }
}

/// A bidirectional string ↔ dense-id map.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, text: &str) -> u32 {
        if let Some(&id) = self.ids.get(text) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(text.to_owned(), id);
        self.names.push(text.to_owned());
        id
    }

    pub fn get(&self, text: &str) -> Option<u32> {
        self.ids.get(text).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// The label and vertex interners of one engine session.
#[derive(Debug, Default, Clone)]
pub struct Vocab {
    pub labels: Interner,
    pub vertices: Interner,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(&mut self, text: &str) -> Label {
        Label(self.labels.intern(text))
    }

    pub fn vertex(&mut self, text: &str) -> VertexId {
        VertexId(self.vertices.intern(text))
    }

    pub fn label_name(&self, l: Label) -> &str {
        self.labels.name(l.0)
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        self.vertices.name(v.0)
    }
}
