use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geoblocks::aggtrie::{adapted_select_covering, AggregateTrie, StatsTrie};
use geoblocks::baseline::{binsearch_covering, brute_exact, OracleMethod};
use geoblocks::cellgrid::{Domain, Polygon, DEFAULT_MAX_CELLS};
use geoblocks::geoblock::{AggSpec, GeoBlock};
use geoblocks::store::synth::{self, Distribution, SynthConfig};
use geoblocks::store::{extract_path, ExtractOptions, FilterPredicate, PointTable, Schema};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{self, Budget, Mode, ReplayOptions};
use crate::server::{self, AppState, ServeOptions};
use crate::workload::{WorkloadSpec, DEFAULT_REFRESH_EVERY};

#[derive(Debug, Parser)]
#[command(name = "geoblocks", version, about = "Error-bounded spatial aggregation over polygons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic taxi-like points as CSV
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "uniform")]
        dist: Distribution,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Domain::NYC, allow_hyphen_values = true)]
        domain: Domain,
        /// Output path; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean, key and sort CSV points into a base table
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = Domain::NYC, allow_hyphen_values = true)]
        domain: Domain,
        #[arg(long, default_value = "lon")]
        lon_col: String,
        #[arg(long, default_value = "lat")]
        lat_col: String,
        #[arg(long)]
        schema: Schema,
        /// Keep raw coordinates for exact point-in-polygon oracles
        #[arg(long)]
        keep_coords: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a GeoBlock for one filter and level
    Build {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value = "")]
        filter: FilterPredicate,
        #[arg(long)]
        level: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a block with a GeoJSON polygon
    Query {
        #[arg(long)]
        block: PathBuf,
        #[arg(long)]
        polygon: PathBuf,
        #[arg(long, default_value = "count")]
        agg: AggSpec,
        #[arg(long)]
        count_only: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
        max_cells: usize,
        /// Record covering-cell hits into this statistics sidecar
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Ignore the block's cache
        #[arg(long)]
        no_cache: bool,
    },
    /// Merge a block's aggregates into a coarser level
    Coarsen {
        #[arg(long)]
        block: PathBuf,
        #[arg(long)]
        level: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a block's query cache from a statistics sidecar
    RefreshCache {
        #[arg(long)]
        block: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        /// Budget as a percentage of the aggregate-array bytes
        #[arg(long)]
        budget_pct: f64,
        /// Output path; the block is rewritten in place when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print cache statistics of a block
    CacheStats {
        #[arg(long)]
        block: PathBuf,
    },
    /// Aggregate directly over the base table
    Oracle {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value = "")]
        filter: FilterPredicate,
        #[arg(long)]
        polygon: PathBuf,
        #[arg(long, default_value = "count")]
        agg: AggSpec,
        #[arg(long, default_value = "brute")]
        method: OracleMethod,
        /// Covering level for the binsearch method
        #[arg(long, default_value_t = 12)]
        level: u8,
        #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
        max_cells: usize,
    },
    /// Serve blocks over HTTP
    Serve {
        /// Comma-separated name=path pairs
        #[arg(long, value_delimiter = ',', required = true)]
        blocks: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_REFRESH_EVERY as u64)]
        refresh_every: u64,
        #[arg(long, default_value_t = 5.0)]
        budget_pct: f64,
    },
    /// Benchmarks
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Replay a workload against a block
    Replay(ReplayArgs),
    /// Measure how many incremental builds amortize the one-time sort
    Amortize {
        #[arg(long)]
        base: PathBuf,
        /// JSON list of filter strings
        #[arg(long)]
        filters: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,10,12")]
        levels: Vec<u8>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a skewed workload over random neighborhoods
    Workload {
        #[arg(long, default_value_t = 100)]
        polygons: usize,
        #[arg(long, default_value_t = 0.1)]
        skew_fraction: f64,
        #[arg(long, default_value_t = 8)]
        skew_rounds: usize,
        #[arg(long, default_value = "count,sum:fare,avg:tip")]
        aggs: String,
        #[arg(long, default_value_t = Domain::NYC, allow_hyphen_values = true)]
        domain: Domain,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    block: PathBuf,
    #[arg(long, value_enum, default_value = "cached")]
    mode: Mode,
    #[arg(long, default_value_t = DEFAULT_REFRESH_EVERY)]
    refresh_every: usize,
    #[arg(long, default_value_t = 5.0)]
    budget_pct: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: usize,
    /// Base table for relative count error statistics
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(v: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", p.display()))?;
            Ok(())
        }
        None => print_json(v),
    }
}

fn read_polygon(path: &Path) -> Result<Polygon> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Polygon::from_geojson_str(&text)?)
}

fn load_block(path: &Path) -> Result<GeoBlock> {
    GeoBlock::load(path).with_context(|| format!("loading block {}", path.display()))
}

fn load_base(path: &Path) -> Result<PointTable> {
    PointTable::load(path).with_context(|| format!("loading base table {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { n, dist, seed, domain, out } => {
            let cfg = SynthConfig { n, distribution: dist, seed, domain };
            match out {
                Some(p) => synth::write_csv(&cfg, BufWriter::new(File::create(&p)?))?,
                None => synth::write_csv(&cfg, BufWriter::new(io::stdout().lock()))?,
            }
        }
        Command::Extract { input, domain, lon_col, lat_col, schema, keep_coords, out } => {
            let opts = ExtractOptions { schema, domain, lon_col, lat_col, keep_coords };
            let (table, report) = extract_path(&input, &opts).with_context(|| format!("extracting {}", input.display()))?;
            table.save(&out)?;
            print_json(&report)?;
        }
        Command::Build { base, filter, level, out } => {
            let table = load_base(&base)?;
            let (block, report) = GeoBlock::build_with_report(&table, &filter, level)?;
            block.save(&out)?;
            print_json(&json!({
                "aggregates": block.aggregates().len(),
                "total_count": block.header().total_count,
                "report": report,
            }))?;
        }
        Command::Query { block, polygon, agg, count_only, max_cells, stats, no_cache } => {
            let b = load_block(&block)?;
            let poly = read_polygon(&polygon)?;
            let cov = b.covering(&poly, max_cells)?;
            if count_only {
                print_json(&json!({ "count": b.count_covering(&cov), "epsilon_m": cov.epsilon_m }))?;
                return Ok(());
            }
            let result = match b.cache() {
                Some(trie) if !no_cache => adapted_select_covering(&b, trie, &cov, &agg, None)?,
                _ => b.select_covering(&cov, &agg)?,
            };
            if let Some(path) = stats {
                let mut st = StatsTrie::load_or_default(&path)?;
                st.record_hits(&cov, &b);
                st.save(&path)?;
            }
            let mut out = result.to_json(&agg);
            out.insert("epsilon_m".into(), json!(result.epsilon_m));
            out.insert("cells_visited".into(), json!(result.cells_visited));
            out.insert("cache_hits".into(), json!(result.cache_hits));
            print_json(&Value::Object(out))?;
        }
        Command::Coarsen { block, level, out } => {
            let b = load_block(&block)?.coarsen(level)?;
            b.save(&out)?;
            print_json(&json!({ "level": level, "aggregates": b.aggregates().len() }))?;
        }
        Command::RefreshCache { block, stats, budget_pct, out } => {
            if !(budget_pct.is_finite() && budget_pct > 0.0) {
                bail!("--budget-pct must be positive");
            }
            let mut b = load_block(&block)?;
            let st = StatsTrie::load_or_default(&stats)?;
            let budget = Budget::Percent(budget_pct).bytes(&b);
            let trie = AggregateTrie::build(&b, &st, budget)?;
            let summary = trie.stats();
            b.set_cache(trie)?;
            b.save(out.as_deref().unwrap_or(&block))?;
            print_json(&summary)?;
        }
        Command::CacheStats { block } => {
            let b = load_block(&block)?;
            let stats = b.cache().map(|c| c.stats());
            print_json(&json!({
                "cache": stats,
                "aggregate_bytes": b.aggregate_bytes(),
                "trie_root": b.trie_root().to_hex(),
            }))?;
        }
        Command::Oracle { base, filter, polygon, agg, method, level, max_cells } => {
            let table = load_base(&base)?;
            let poly = read_polygon(&polygon)?;
            let r = match method {
                OracleMethod::BruteExact => brute_exact(&table, &filter, &poly, &agg)?,
                OracleMethod::BinsearchCovering => binsearch_covering(&table, &filter, &poly, &agg, level, max_cells)?,
            };
            let mut out = r.result.to_json(&agg);
            out.insert("method".into(), json!(r.method.to_string()));
            print_json(&Value::Object(out))?;
        }
        Command::Serve { blocks, bind, refresh_every, budget_pct } => {
            let specs = blocks
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(n, p)| (n.trim().to_string(), p.trim().to_string()))
                        .with_context(|| format!("expected name=path, got `{s}`"))
                })
                .collect::<Result<Vec<_>>>()?;
            let options = ServeOptions { refresh_every, budget_pct, ..ServeOptions::default() };
            let state = AppState::load(&specs, options)?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, bind))?;
        }
        Command::Bench(BenchCommand::Replay(args)) => {
            let w = WorkloadSpec::load(&args.workload)?;
            let b = load_block(&args.block)?;
            let opts = ReplayOptions {
                mode: args.mode,
                max_cells: args.max_cells,
                refresh_every: args.refresh_every,
                budget: Budget::Percent(args.budget_pct),
            };
            let mut report = bench::replay(&w, &b, &opts)?;
            if let Some(base) = &args.base {
                let table = load_base(base)?;
                let resolved = w.resolve()?;
                let polys: Vec<(String, Polygon)> = resolved.polygons.into_iter().collect();
                report.error = Some(bench::error_stats(&table, &b, &polys, args.max_cells)?);
            }
            write_json(&report, args.out.as_deref())?;
        }
        Command::Bench(BenchCommand::Amortize { base, filters, levels, runs, seed, out }) => {
            let table = load_base(&base)?;
            let text = fs::read_to_string(&filters).with_context(|| format!("reading {}", filters.display()))?;
            let list: Vec<String> = serde_json::from_str(&text).context("filters must be a JSON list of strings")?;
            let parsed = list.iter().map(|f| f.parse()).collect::<Result<Vec<FilterPredicate>, _>>()?;
            let report = bench::amortization_bench(&table, &parsed, &levels, runs, seed)?;
            write_json(&report, out.as_deref())?;
        }
        Command::Bench(BenchCommand::Workload { polygons, skew_fraction, skew_rounds, aggs, domain, seed, out }) => {
            let w = WorkloadSpec::synthetic(&domain, polygons, skew_fraction, skew_rounds, &aggs, seed);
            w.resolve()?;
            w.save(&out)?;
        }
    }
    Ok(())
}
