//! Command-line surface for the streaming RPQ engine: run persistent
//! queries over tuple streams, benchmark parameter sweeps, check the
//! engine against the replay reference, generate synthetic streams and
//! dump tree-index statistics.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rpqstream::engine::{Engine, EngineConfig};
use rpqstream::oracle::{ReferenceEngine, Semantics};
use rpqstream::query::{parse_query_file, CompiledQuery, QueryError};
use rpqstream::stream::{OrderPolicy, StreamingGraphTuple, TupleReader, WindowConfig};
use rpqstream::vocab::Vocab;
use rpqstream::workload::{generate, StreamGenConfig};
use rpqstream::{ResultEvent, Sign};

#[derive(Parser)]
#[command(name = "rpqstream", version, about = "Persistent regular path queries over streaming graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a persistent query over a stream and emit the result stream.
    Run(RunArgs),
    /// Sweep one parameter over generated streams and emit CSV rows.
    Bench(BenchArgs),
    /// Replay a generated stream through the engine and the reference
    /// and report whether their outputs match.
    Oracle(OracleArgs),
    /// Emit a reproducible synthetic stream in the wire format.
    Generate(GenerateArgs),
    /// Run a query and dump per-tree index sizes as CSV.
    TreeStats(RunArgs),
}

#[derive(Args, Clone)]
struct QuerySpec {
    /// Query expression, e.g. "(follows/mentions)+".
    #[arg(short, long)]
    query: Option<String>,
    /// File with one `name<TAB>regex` per line; `#` lines are comments.
    #[arg(long, conflicts_with = "query")]
    query_file: Option<PathBuf>,
    /// Which named query of the file to run (default: the first).
    #[arg(long, requires = "query_file")]
    query_name: Option<String>,
}

impl QuerySpec {
    fn resolve(&self) -> Result<(String, String), CliError> {
        if let Some(text) = &self.query {
            return Ok(("query".to_owned(), text.clone()));
        }
        let Some(path) = &self.query_file else {
            return Err(CliError::Usage("one of --query or --query-file is required".into()));
        };
        let contents = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let queries = parse_query_file(&contents).map_err(CliError::Query)?;
        if queries.is_empty() {
            return Err(CliError::Usage(format!("{}: no queries", path.display())));
        }
        match &self.query_name {
            None => Ok(queries[0].clone()),
            Some(name) => queries
                .iter()
                .find(|(n, _)| n == name)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("query {name:?} not found"))),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    query: QuerySpec,
    /// Path semantics.
    #[arg(long, default_value = "arbitrary", value_parser = parse_semantics)]
    semantics: Semantics,
    /// Window size |W| in time units.
    #[arg(long)]
    window: u64,
    /// Slide interval in time units.
    #[arg(long, default_value_t = 1)]
    slide: u64,
    /// Input stream file; `-` or absent reads stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Result stream destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics JSON destination (default stderr).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Worker threads for per-tree parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Abort a tuple after this many node extensions (simple mode).
    #[arg(long)]
    expansion_budget: Option<u64>,
    /// Fraction of tuples excluded from latency statistics as warm-up.
    #[arg(long, default_value_t = 0.10)]
    warmup_fraction: f64,
    /// Skip out-of-order tuples with a warning instead of failing.
    #[arg(long)]
    skip_out_of_order: bool,
}

#[derive(Args)]
struct GenParams {
    #[arg(long, default_value_t = 100)]
    vertices: u32,
    #[arg(long, default_value_t = 3)]
    labels: u32,
    #[arg(long, default_value_t = 1000)]
    tuples: u64,
    /// Timestamp increment between tuples.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long, default_value_t = 0.0)]
    deletion_ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Source-degree skew; 0 is uniform.
    #[arg(long, default_value_t = 0.0)]
    skew: f64,
}

impl GenParams {
    fn to_config(&self) -> StreamGenConfig {
        StreamGenConfig {
            vertex_count: self.vertices,
            label_count: self.labels,
            tuple_count: self.tuples,
            timestamp_stride: self.stride,
            deletion_ratio: self.deletion_ratio,
            seed: self.seed,
            degree_skew: self.skew,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Query expression over the generated labels (default: l0*).
    #[arg(short, long, default_value = "l0*")]
    query: String,
    #[arg(long, default_value = "arbitrary", value_parser = parse_semantics)]
    semantics: Semantics,
    #[arg(long, default_value_t = 20)]
    window: u64,
    #[arg(long, default_value_t = 1)]
    slide: u64,
    #[command(flatten)]
    gen: GenParams,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Parameter to sweep and its comma-separated values,
    /// e.g. `--sweep window 5,10,20`.
    #[arg(long, num_args = 2, value_names = ["PARAM", "VALUES"])]
    sweep: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Query expression over the generated labels l0..lN.
    #[arg(short, long, default_value = "(l0/l1)+")]
    query: String,
    #[arg(long, default_value = "arbitrary", value_parser = parse_semantics)]
    semantics: Semantics,
    #[arg(long, default_value_t = 10)]
    window: u64,
    #[arg(long, default_value_t = 1)]
    slide: u64,
    #[command(flatten)]
    gen: GenParams,
    /// Refuse simple-path reference evaluation above this many window edges.
    #[arg(long, default_value_t = 96)]
    path_limit: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    gen: GenParams,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_semantics(text: &str) -> Result<Semantics, String> {
    match text {
        "arbitrary" => Ok(Semantics::Arbitrary),
        "simple" => Ok(Semantics::Simple),
        other => Err(format!("unknown semantics {other:?} (use arbitrary|simple)")),
    }
}

/// Errors with their process exit codes: usage and query-syntax problems
/// exit 2, runtime failures exit 1.
enum CliError {
    Usage(String),
    Query(QueryError),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::TreeStats(args) => cmd_run(args, true),
        Command::Bench(args) => cmd_bench(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Query(error)) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(error)) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        None => Box::new(BufReader::new(io::stdin())),
        Some(p) if p.as_os_str() == "-" => Box::new(BufReader::new(io::stdin())),
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
    })
}

fn write_event(out: &mut dyn Write, vocab: &Vocab, event: &ResultEvent) -> Result<()> {
    let sign = match event.sign {
        Sign::Positive => "+",
        Sign::Negative => "-",
    };
    writeln!(
        out,
        "{}\t{}\t{}\t{}",
        event.ts,
        vocab.vertex_name(event.source),
        vocab.vertex_name(event.target),
        sign
    )?;
    Ok(())
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((sorted.len() as f64) * p).ceil() as usize;
    sorted[rank.saturating_sub(1).min(sorted.len() - 1)]
}

struct RunMeasurement {
    tuples: u64,
    elapsed_secs: f64,
    /// Per-tuple latencies in microseconds, query-alphabet tuples only.
    latencies: Vec<u64>,
}

impl RunMeasurement {
    fn throughput(&self) -> f64 {
        if self.elapsed_secs > 0.0 {
            self.tuples as f64 / self.elapsed_secs
        } else {
            0.0
        }
    }

    fn latency_stats(&self, warmup_fraction: f64) -> (f64, u64, u64) {
        let skip = ((self.latencies.len() as f64) * warmup_fraction) as usize;
        let mut measured: Vec<u64> = self.latencies[skip.min(self.latencies.len())..].to_vec();
        if measured.is_empty() {
            return (0.0, 0, 0);
        }
        measured.sort_unstable();
        let mean = measured.iter().sum::<u64>() as f64 / measured.len() as f64;
        (mean, percentile(&measured, 0.5), percentile(&measured, 0.99))
    }
}

/// Feed the stream through the engine, timing only tuples whose label
/// belongs to the query alphabet.
fn drive_engine(
    engine: &mut Engine,
    compiled: &CompiledQuery,
    tuples: &[StreamingGraphTuple],
    mut on_events: impl FnMut(Vec<ResultEvent>) -> Result<()>,
) -> Result<RunMeasurement> {
    let mut measurement =
        RunMeasurement { tuples: 0, elapsed_secs: 0.0, latencies: Vec::new() };
    let started = Instant::now();
    for tuple in tuples {
        if !compiled.dfa.in_alphabet(tuple.label) {
            engine.process(tuple).map_err(|e| anyhow::anyhow!(e))?;
            continue;
        }
        let t0 = Instant::now();
        let events = engine.process(tuple).map_err(|e| anyhow::anyhow!(e))?;
        measurement.latencies.push(t0.elapsed().as_micros() as u64);
        measurement.tuples += 1;
        on_events(events)?;
    }
    measurement.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(measurement)
}

fn read_stream(
    input: Option<&Path>,
    policy: OrderPolicy,
    vocab: &mut Vocab,
) -> Result<Vec<StreamingGraphTuple>> {
    let mut reader = TupleReader::new(policy);
    let mut tuples = Vec::new();
    let mut src = open_input(input)?;
    let mut buffer = String::new();
    loop {
        buffer.clear();
        if src.read_line(&mut buffer)? == 0 {
            break;
        }
        if let Some(tuple) =
            reader.read_line(&buffer, vocab).map_err(|e| anyhow::anyhow!(e))?
        {
            tuples.push(tuple);
        }
    }
    Ok(tuples)
}

fn generated_stream(cfg: &StreamGenConfig, vocab: &mut Vocab) -> Result<Vec<StreamingGraphTuple>> {
    let mut reader = TupleReader::new(OrderPolicy::Strict);
    generate(cfg)
        .iter()
        .filter_map(|t| reader.read_line(&t.to_line(), vocab).transpose())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!(e))
}

fn cmd_run(args: RunArgs, tree_stats: bool) -> Result<ExitCode, CliError> {
    let (name, text) = args.query.resolve()?;
    let mut vocab = Vocab::new();
    let compiled = CompiledQuery::build(&name, &text, &mut vocab).map_err(CliError::Query)?;
    let policy = if args.skip_out_of_order {
        OrderPolicy::SkipWithWarning
    } else {
        OrderPolicy::Strict
    };
    let tuples = read_stream(args.input.as_deref(), policy, &mut vocab)?;
    let cfg = EngineConfig::new(WindowConfig::new(args.window, args.slide))
        .with_threads(args.threads)
        .with_expansion_budget(args.expansion_budget);
    let mut engine =
        Engine::new(&compiled, args.semantics, cfg).map_err(|e| anyhow::anyhow!(e))?;

    let mut out = open_output(args.out.as_deref())?;
    let measurement = if tree_stats {
        drive_engine(&mut engine, &compiled, &tuples, |_| Ok(()))?
    } else {
        let sink = &mut out;
        let vocab_ref = &vocab;
        drive_engine(&mut engine, &compiled, &tuples, |events| {
            for event in &events {
                write_event(sink.as_mut(), vocab_ref, event)?;
            }
            Ok(())
        })?
    };

    if tree_stats {
        writeln!(out, "root,nodes,markings").context("writing stats")?;
        for row in engine.delta_stats() {
            writeln!(out, "{},{},{}", vocab.vertex_name(row.root), row.nodes, row.markings)
                .context("writing stats")?;
        }
        let (_, nodes, markings) = engine.delta_size();
        writeln!(out, "total,{nodes},{markings}").context("writing stats")?;
    }
    out.flush().context("flushing output")?;

    let (mean, p50, p99) = measurement.latency_stats(args.warmup_fraction);
    let counters = engine.counters();
    let (trees, nodes, markings) = engine.delta_size();
    let metrics = serde_json::json!({
        "tuples": measurement.tuples,
        "results": engine.results().emitted(),
        "throughput_eps": measurement.throughput(),
        "latency_us": { "mean": mean, "p50": p50, "p99": p99 },
        "delta": { "trees": trees, "nodes": nodes, "markings": markings },
        "expiry_ms_total": counters.expiry_nanos as f64 / 1e6,
        "conflicts_detected": counters.conflicts_detected,
        "unmark_invocations": counters.unmark_invocations,
        "tuples_skipped": counters.tuples_skipped,
    });
    let rendered = serde_json::to_string_pretty(&metrics).context("rendering metrics")?;
    match args.metrics.as_deref() {
        None => eprintln!("{rendered}"),
        Some(path) => std::fs::write(path, rendered + "\n")
            .with_context(|| format!("writing {}", path.display()))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, CliError> {
    if args.sweep.len() != 2 {
        return Err(CliError::Usage("--sweep PARAM V1,V2,... is required".into()));
    }
    let param = args.sweep[0].as_str();
    let values: Vec<f64> = args.sweep[1]
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad sweep value {v:?}")))
        })
        .collect::<Result<_, _>>()?;
    if !matches!(param, "window" | "slide" | "deletion") {
        return Err(CliError::Usage(format!(
            "unknown sweep parameter {param:?} (use window|slide|deletion)"
        )));
    }

    let mut out = open_output(args.out.as_deref())?;
    writeln!(out, "param,value,throughput_eps,p99_us").context("writing header")?;
    for &value in &values {
        let mut window = args.window;
        let mut slide = args.slide;
        let mut gen_cfg = args.gen.to_config();
        match param {
            "window" => window = value as u64,
            "slide" => slide = value as u64,
            "deletion" => gen_cfg.deletion_ratio = value,
            _ => unreachable!(),
        }
        let mut vocab = Vocab::new();
        let compiled =
            CompiledQuery::build("bench", &args.query, &mut vocab).map_err(CliError::Query)?;
        let tuples = generated_stream(&gen_cfg, &mut vocab)?;
        let cfg =
            EngineConfig::new(WindowConfig::new(window, slide)).with_threads(args.threads);
        let mut engine =
            Engine::new(&compiled, args.semantics, cfg).map_err(|e| anyhow::anyhow!(e))?;
        let measurement = drive_engine(&mut engine, &compiled, &tuples, |_| Ok(()))?;
        let (_, _, p99) = measurement.latency_stats(0.10);
        writeln!(out, "{param},{value},{:.1},{p99}", measurement.throughput())
            .context("writing row")?;
    }
    out.flush().context("flushing output")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode, CliError> {
    let mut vocab = Vocab::new();
    let compiled =
        CompiledQuery::build("oracle", &args.query, &mut vocab).map_err(CliError::Query)?;
    let tuples = generated_stream(&args.gen.to_config(), &mut vocab)?;

    let window = WindowConfig::new(args.window, args.slide);
    let cfg = EngineConfig::new(window).with_threads(1);
    let mut engine =
        Engine::new(&compiled, args.semantics, cfg).map_err(|e| anyhow::anyhow!(e))?;
    let mut reference =
        ReferenceEngine::new(compiled.dfa.clone(), window, args.semantics, args.path_limit);

    for (i, tuple) in tuples.iter().enumerate() {
        let mut engine_events = engine.process(tuple).map_err(|e| anyhow::anyhow!(e))?;
        let mut reference_events =
            reference.process(tuple).map_err(|e| anyhow::anyhow!(e))?;
        engine_events.sort_unstable();
        reference_events.sort_unstable();
        if engine_events != reference_events {
            println!("MISMATCH at tuple {i} (ts {})", tuple.ts);
            println!("  engine:    {engine_events:?}");
            println!("  reference: {reference_events:?}");
            return Ok(ExitCode::FAILURE);
        }
    }
    println!(
        "MATCH ({} tuples, {} events, {} pairs)",
        tuples.len(),
        engine.results().emitted(),
        engine.results().len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode, CliError> {
    let mut out = open_output(args.out.as_deref())?;
    for tuple in generate(&args.gen.to_config()) {
        writeln!(out, "{}", tuple.to_line()).context("writing stream")?;
    }
    out.flush().context("flushing output")?;
    Ok(ExitCode::SUCCESS)
}
