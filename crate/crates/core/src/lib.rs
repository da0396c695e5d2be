//! Incremental evaluation of persistent regular path queries over
//! time-based sliding windows of streaming labeled graphs.
//!
//! A registered query is compiled to a minimal DFA; the engine maintains
//! a collection of spanning trees over the product of the window's
//! snapshot graph and the automaton, appending a `(source, target)` pair
//! to the result stream the moment a satisfying path exists. Both
//! arbitrary and simple path semantics are supported, as are explicit
//! edge deletions through negative tuples.
//!
//! Modules:
//! - [`query`]: expression parsing, DFA compilation, containment table
//! - [`stream`]: tuple parsing, window arithmetic, snapshot graph
//! - [`delta`]: the spanning-tree index
//! - [`rapq`] / [`rspq`]: the two incremental engines
//! - [`engine`]: configuration and the semantics-agnostic facade
//! - [`oracle`]: batch and replay references for verification
//! - [`workload`]: query templates and the synthetic stream generator

pub mod delta;
pub mod fasthash;
pub mod engine;
pub mod oracle;
pub mod query;
pub mod rapq;
pub mod rspq;
pub mod results;
pub mod stream;
pub mod vocab;
pub mod workload;

pub use engine::{Engine, EngineConfig, EngineCounters, EngineError};
pub use oracle::Semantics;
pub use query::CompiledQuery;
pub use results::{ResultEvent, ResultSet, Sign};
pub use stream::{StreamingGraphTuple, Timestamp, WindowConfig};
pub use vocab::{Label, VertexId, Vocab};
