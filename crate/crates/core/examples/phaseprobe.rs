use std::time::{Duration, Instant};
use rpqstream::engine::{Engine, EngineConfig};
use rpqstream::oracle::Semantics;
use rpqstream::query::CompiledQuery;
use rpqstream::stream::{Op, SnapshotGraph, StreamingGraphTuple, WindowConfig};
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

    // Engine, repeated to stabilize.
    for _ in 0..3 {
        let cfg = EngineConfig::new(WindowConfig::new(10_000, 100)).with_threads(1);
        let mut engine = Engine::new(&compiled, Semantics::Arbitrary, cfg).unwrap();
        let t0 = Instant::now();
        let mut matching = Duration::ZERO;
        let mut nmatch = 0u64;
        for tuple in &stream {
            if compiled.dfa.in_alphabet(tuple.label) {
                let m0 = Instant::now();
                engine.process(tuple).unwrap();
                matching += m0.elapsed();
                nmatch += 1;
            } else {
                engine.process(tuple).unwrap();
            }
        }
        println!(
            "engine total {:.1?}  matching {:.1?} ({} tuples, {:.2} us each)  expiry {:.1?}  expired-nodes {}  snapshot-expired {}",
            t0.elapsed(), matching, nmatch,
            matching.as_secs_f64() * 1e6 / nmatch as f64,
            Duration::from_nanos(engine.counters().expiry_nanos as u64),
            engine.counters().tree_nodes_expired,
            engine.counters().snapshot_edges_expired,
        );
    }

    // Isolated snapshot replay cost.
    let window = WindowConfig::new(10_000, 100);
    let t0 = Instant::now();
    let mut snapshot = SnapshotGraph::new();
    for tuple in &stream {
        snapshot.expire_edges(window.expiry_bound(tuple.ts));
        snapshot.apply(tuple);
    }
    println!("bare replay (all labels): {:.1?}", t0.elapsed());

    // Batch cost at steady state.
    let mut snapshot = SnapshotGraph::new();
    for tuple in &stream[..20_000] {
        snapshot.expire_edges(window.expiry_bound(tuple.ts));
        snapshot.apply(tuple);
    }
    let t0 = Instant::now();
    let mut n = 0usize;
    for _ in 0..50 {
        n += rpqstream::oracle::batch_arbitrary(&snapshot, &compiled.dfa).len();
    }
    println!("batch_arbitrary steady: {:.2?} per call ({} pairs)", t0.elapsed() / 50, n / 50);
}
