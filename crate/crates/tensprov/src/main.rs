//! `tensprov` command line: run declarative pipeline specs with provenance
//! capture, issue lineage queries, print memory stats, and run the synthetic
//! join-scaling benchmark.

use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tensprov::bench::{run_bench, BenchConfig, BENCH_CSV_HEADER};
use tensprov::cli::{error_json, run_query, QueryRequest};
use tensprov::error::{Error, Result};
use tensprov::graph::Pipeline;
use tensprov::spec::{run_spec, PipelineSpec};

#[derive(Parser)]
#[command(name = "tensprov", version, about = "In-memory provenance capture and querying for data preparation pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline spec with provenance capture and print the run summary.
    Run {
        /// Path to the pipeline spec (JSON).
        spec: PathBuf,
        /// Execute a JSON array of queries against the finished run.
        #[arg(long)]
        query_file: Option<PathBuf>,
        /// Read one JSON query per stdin line after the run.
        #[arg(long)]
        interactive: bool,
    },
    /// Run one query against a pipeline spec executed in this session.
    Query {
        /// Path to the pipeline spec (JSON) that establishes the run.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Run a spec and print its memory report.
    Stats {
        /// Path to the pipeline spec (JSON).
        spec: PathBuf,
    },
    /// Synthetic join-scaling benchmark.
    Bench {
        /// Comma-separated scale factors, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        sf: Vec<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Left-table rows per scale factor unit.
        #[arg(long, default_value_t = 18_000)]
        rows_left: u32,
        /// Right-table rows per scale factor unit.
        #[arg(long, default_value_t = 19_500)]
        rows_right: u32,
        /// Fraction of left rows with a matching right key.
        #[arg(long, default_value_t = 0.9)]
        match_rate: f64,
        /// Emit CSV instead of JSON lines.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args, Clone)]
struct QueryArgs {
    /// Query type, Q1 through Q11.
    #[arg(long = "type")]
    query_type: String,
    /// The dataset the queried record or attribute belongs to.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    row: Option<u32>,
    #[arg(long)]
    attr: Option<usize>,
    /// Source dataset for backward queries (Q2/Q4/Q6/Q8).
    #[arg(long)]
    src: Option<String>,
    /// Destination dataset for forward queries (Q1/Q3/Q5/Q7).
    #[arg(long)]
    dst: Option<String>,
    /// Ancestor dataset for Q11.
    #[arg(long)]
    d1: Option<String>,
    /// The other combining input for Q10.
    #[arg(long)]
    d2: Option<String>,
    /// Target derived dataset for Q11.
    #[arg(long)]
    d3: Option<String>,
    /// Resolve hit rows to their cell values (recomputing if released).
    #[arg(long)]
    resolve: bool,
    /// Evaluate under set semantics (duplicate rows share lineage).
    #[arg(long)]
    set_semantics: bool,
}

impl From<QueryArgs> for QueryRequest {
    fn from(a: QueryArgs) -> QueryRequest {
        QueryRequest {
            query_type: a.query_type,
            dataset: a.dataset,
            row: a.row,
            attr: a.attr,
            src: a.src,
            dst: a.dst,
            d1: a.d1,
            d2: a.d2,
            d3: a.d3,
            resolve: a.resolve,
            set_semantics: a.set_semantics,
        }
    }
}

fn load_and_run(spec_path: &Path) -> Result<(Pipeline, tensprov::spec::RunSummary)> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec = PipelineSpec::from_json(&text)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    run_spec(&spec, base)
}

fn cmd_run(spec: &Path, query_file: Option<&Path>, interactive: bool) -> Result<()> {
    let (pipeline, summary) = load_and_run(spec)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary json"));

    if let Some(qf) = query_file {
        let text = std::fs::read_to_string(qf)?;
        let queries: Vec<QueryRequest> = serde_json::from_str(&text)
            .map_err(|e| Error::Query(format!("query file: {e}")))?;
        for q in &queries {
            println!("{}", run_query(&pipeline, q)?);
        }
    }
    if interactive {
        let stdin = std::io::stdin();
        for line in stdin.lock().lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let q: QueryRequest = match serde_json::from_str(&line) {
                Ok(q) => q,
                Err(e) => {
                    println!("{}", error_json(&Error::Query(format!("bad query: {e}"))));
                    continue;
                }
            };
            match run_query(&pipeline, &q) {
                Ok(v) => println!("{v}"),
                Err(e) => println!("{}", error_json(&e)),
            }
        }
    }
    Ok(())
}

fn cmd_query(spec: &Path, args: QueryArgs) -> Result<()> {
    let (pipeline, _) = load_and_run(spec)?;
    let req: QueryRequest = args.into();
    println!("{}", serde_json::to_string_pretty(&run_query(&pipeline, &req)?).expect("query json"));
    Ok(())
}

fn cmd_stats(spec: &Path) -> Result<()> {
    let (pipeline, _) = load_and_run(spec)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&pipeline.memory_report()).expect("stats json")
    );
    Ok(())
}

fn cmd_bench(
    sfs: &[u32],
    seed: Option<u64>,
    rows_left: u32,
    rows_right: u32,
    match_rate: f64,
    csv: bool,
) -> Result<()> {
    if csv {
        println!("{BENCH_CSV_HEADER}");
    }
    for &sf in sfs {
        let cfg = BenchConfig {
            scale_factor: sf,
            rows_per_sf_left: rows_left,
            rows_per_sf_right: rows_right,
            match_rate,
            seed: seed.unwrap_or(42),
        };
        let report = run_bench(&cfg)?;
        if csv {
            println!("{}", report.csv_line());
        } else {
            println!("{}", serde_json::to_string(&report).expect("bench json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            spec,
            query_file,
            interactive,
        } => cmd_run(&spec, query_file.as_deref(), interactive),
        Command::Query { spec, query } => cmd_query(&spec, query),
        Command::Stats { spec } => cmd_stats(&spec),
        Command::Bench {
            sf,
            seed,
            rows_left,
            rows_right,
            match_rate,
            csv,
        } => cmd_bench(&sf, seed, rows_left, rows_right, match_rate, csv),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
