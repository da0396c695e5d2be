use rpqstream::engine::{Engine, EngineConfig};
use rpqstream::oracle::Semantics;
use rpqstream::query::CompiledQuery;
use rpqstream::stream::{Op, StreamingGraphTuple, WindowConfig};
use rpqstream::vocab::Vocab;
use rpqstream::workload::{generate, StreamGenConfig};

fn main() {
    let mut vocab = Vocab::new();
    let compiled = CompiledQuery::build("q1", "l0*", &mut vocab).unwrap();
    let gen = StreamGenConfig {
        vertex_count: 10_000,
        label_count: 3,
        tuple_count: 100_000,
        timestamp_stride: 1,
        deletion_ratio: 0.0,
        seed: 4242,
        degree_skew: 0.0,
    };
    let stream: Vec<StreamingGraphTuple> = generate(&gen)
        .iter()
        .map(|t| StreamingGraphTuple {
            ts: t.ts,
            source: vocab.vertex(&t.source),
            target: vocab.vertex(&t.target),
            label: vocab.label(&t.label),
            op: if t.delete { Op::Delete } else { Op::Insert },
        })
        .collect();
    let cfg = EngineConfig::new(WindowConfig::new(10_000, 100)).with_threads(1);
    let mut engine = Engine::new(&compiled, Semantics::Arbitrary, cfg).unwrap();
    for tuple in &stream {
        engine.process(tuple).unwrap();
    }
    println!("{}", engine.results().len());
}
