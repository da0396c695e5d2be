use std::time::Instant;
use rpqstream::engine::{Engine, EngineConfig};
use rpqstream::oracle::Semantics;
use rpqstream::query::CompiledQuery;
use rpqstream::stream::{Op, StreamingGraphTuple, WindowConfig};
use rpqstream::vocab::Vocab;
use rpqstream::workload::{generate, StreamGenConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tuples: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let threads: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let labels: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut vocab = Vocab::new();
    let compiled = CompiledQuery::build("q1", "l0*", &mut vocab).unwrap();
    let gen = StreamGenConfig {
        vertex_count: 10_000,
        label_count: labels,
        tuple_count: tuples,
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
    let cfg = EngineConfig::new(WindowConfig::new(10_000, 100)).with_threads(threads);
    let mut engine = Engine::new(&compiled, Semantics::Arbitrary, cfg).unwrap();
    let started = Instant::now();
    let mut last = Instant::now();
    for (i, tuple) in stream.iter().enumerate() {
        engine.process(tuple).unwrap();
        if (i + 1) % 5000 == 0 {
            let (trees, nodes, _) = engine.delta_size();
            println!(
                "{:>6} tuples: {:>6.0} eps (block), trees {:>6}, nodes {:>8}, results {:>8}, expiry {:.1}s",
                i + 1,
                5000.0 / last.elapsed().as_secs_f64(),
                trees,
                nodes,
                engine.results().len(),
                engine.counters().expiry_nanos as f64 / 1e9,
            );
            last = Instant::now();
        }
    }
    println!("total {:.1}s => {:.0} eps", started.elapsed().as_secs_f64(), tuples as f64 / started.elapsed().as_secs_f64());
}
