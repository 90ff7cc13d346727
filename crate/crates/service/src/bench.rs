//! Workload replay and build-cost amortization benchmarks.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use geoblocks::aggtrie::{adapted_select_covering, select_with_stats, AggregateTrie, StatsCollector, StatsTrie};
use geoblocks::baseline::brute_exact;
use geoblocks::cellgrid::Polygon;
use geoblocks::geoblock::{AggSpec, GeoBlock};
use geoblocks::store::{FilterPredicate, PointTable, RawTable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::workload::{Subset, WorkloadSpec, DEFAULT_REFRESH_EVERY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cached,
    Uncached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Budget {
    /// Percent of the aggregate-array bytes.
    Percent(f64),
    Bytes(usize),
}

impl Budget {
    pub fn bytes(self, block: &GeoBlock) -> usize {
        match self {
            Budget::Percent(p) => (block.aggregate_bytes() as f64 * p / 100.0).round() as usize,
            Budget::Bytes(b) => b,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReplayOptions {
    pub mode: Mode,
    pub max_cells: usize,
    /// Rebuild the cache after every this many queries; 0 never.
    pub refresh_every: usize,
    pub budget: Budget,
}

impl ReplayOptions {
    pub fn new(mode: Mode) -> ReplayOptions {
        ReplayOptions {
            mode,
            max_cells: geoblocks::cellgrid::DEFAULT_MAX_CELLS,
            refresh_every: DEFAULT_REFRESH_EVERY,
            budget: Budget::Percent(5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRecord {
    pub polygon: String,
    pub subset: Subset,
    pub result: Map<String, Value>,
    pub cells_visited: usize,
    pub cache_hits: usize,
    /// Whether a cache refresh had happened before this query.
    pub after_refresh: bool,
    pub latency_us: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SubsetSummary {
    pub queries: usize,
    pub wall_s: f64,
    pub cells_visited: usize,
    pub cache_hits: usize,
    pub hit_rate: f64,
    /// Hit rate over queries after the first refresh.
    pub hit_rate_after_refresh: f64,
    /// Wall time of queries after the first refresh.
    pub wall_after_refresh_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PolygonError {
    pub polygon: String,
    pub result: u64,
    pub exact: u64,
    pub relative_error: Option<f64>,
}

/// Relative count error `|result - exact| / exact`; polygons with
/// `exact = 0` are excluded and counted.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorStats {
    pub per_polygon: Vec<PolygonError>,
    pub mean_relative_error: f64,
    pub excluded_zero_exact: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BuildPhases {
    pub clean_s: f64,
    pub sort_s: f64,
    pub filter_s: f64,
    pub aggregate_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FilterAmortization {
    pub filter: String,
    pub selectivity: f64,
    /// Mean time of one isolated build: filter raw, clean, sort, aggregate.
    pub isolated_s: f64,
    /// Mean time of one incremental build from sorted base data.
    pub incremental_s: f64,
    /// Smallest k with `fixed + k * incremental < k * isolated`.
    pub crossover_k: Option<u64>,
    pub isolated_phases: BuildPhases,
    pub incremental_phases: BuildPhases,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<QueryRecord>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub subsets: BTreeMap<Subset, SubsetSummary>,
    pub total_wall_s: f64,
    pub refreshes: usize,
    pub final_hit_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorStats>,
    /// One-time clean and sort of the base data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_phases: Option<BuildPhases>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub amortization: Vec<FilterAmortization>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub speedups: BTreeMap<String, f64>,
}

impl BenchReport {
    /// The report with every timing field zeroed, for determinism checks.
    pub fn without_timings(&self) -> BenchReport {
        let mut r = self.clone();
        r.total_wall_s = 0.0;
        for q in &mut r.queries {
            q.latency_us = 0.0;
        }
        for s in r.subsets.values_mut() {
            s.wall_s = 0.0;
            s.wall_after_refresh_s = 0.0;
        }
        r.fixed_phases = None;
        r.speedups.clear();
        for a in &mut r.amortization {
            a.isolated_s = 0.0;
            a.incremental_s = 0.0;
            a.crossover_k = None;
            a.isolated_phases = BuildPhases::default();
            a.incremental_phases = BuildPhases::default();
        }
        r
    }
}

/// Runs the workload against the block. In cached mode the cache starts
/// empty and is rebuilt from the collected statistics on the configured
/// cadence.
pub fn replay(w: &WorkloadSpec, block: &GeoBlock, opts: &ReplayOptions) -> Result<BenchReport> {
    let resolved = w.resolve()?;
    let collector = StatsCollector::new(StatsTrie::default(), geoblocks::aggtrie::DEFAULT_HIT_WINDOW);
    let budget = opts.budget.bytes(block);
    let mut cache: Option<AggregateTrie> = None;
    let mut report = BenchReport { mode: Some(opts.mode), ..BenchReport::default() };
    let start = Instant::now();
    for (i, (name, subset)) in resolved.queries.iter().enumerate() {
        let poly = &resolved.polygons[name];
        let t0 = Instant::now();
        let cov = block.covering(poly, opts.max_cells)?;
        let result = match (opts.mode, &cache) {
            (Mode::Cached, Some(trie)) => adapted_select_covering(block, trie, &cov, &resolved.spec, Some(&collector))?,
            _ => select_with_stats(block, &cov, &resolved.spec, &collector)?,
        };
        let latency = t0.elapsed();
        let after_refresh = report.refreshes > 0;
        let s = report.subsets.entry(*subset).or_default();
        s.queries += 1;
        s.wall_s += latency.as_secs_f64();
        s.cells_visited += result.cells_visited;
        s.cache_hits += result.cache_hits;
        if after_refresh {
            s.wall_after_refresh_s += latency.as_secs_f64();
        }
        report.queries.push(QueryRecord {
            polygon: name.clone(),
            subset: *subset,
            result: result.to_json(&resolved.spec),
            cells_visited: result.cells_visited,
            cache_hits: result.cache_hits,
            after_refresh,
            latency_us: latency.as_secs_f64() * 1e6,
        });
        if opts.mode == Mode::Cached && opts.refresh_every > 0 && (i + 1) % opts.refresh_every == 0 {
            cache = Some(AggregateTrie::build(block, &collector.stats(), budget)?);
            report.refreshes += 1;
        }
    }
    report.total_wall_s = start.elapsed().as_secs_f64();
    for (subset, s) in report.subsets.iter_mut() {
        s.hit_rate = ratio(s.cache_hits, s.cells_visited);
        let (hits, cells) = report
            .queries
            .iter()
            .filter(|q| q.subset == *subset && q.after_refresh)
            .fold((0, 0), |(h, c), q| (h + q.cache_hits, c + q.cells_visited));
        s.hit_rate_after_refresh = ratio(hits, cells);
    }
    report.final_hit_rate = collector.hit_rate();
    Ok(report)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Relative count error of the block's SELECT against exact
/// point-in-polygon counts on the base data.
pub fn error_stats(
    table: &PointTable,
    block: &GeoBlock,
    polygons: &[(String, Polygon)],
    max_cells: usize,
) -> Result<ErrorStats> {
    let spec = AggSpec::count_only();
    let filter = &block.header().filter;
    let mut stats = ErrorStats::default();
    let mut sum = 0.0;
    for (name, poly) in polygons {
        let result = block.select_query(poly, &spec, max_cells)?.count;
        let exact = brute_exact(table, filter, poly, &spec)?.result.count;
        let relative_error = (exact > 0).then(|| result.abs_diff(exact) as f64 / exact as f64);
        match relative_error {
            Some(e) => sum += e,
            None => stats.excluded_zero_exact += 1,
        }
        stats.per_polygon.push(PolygonError { polygon: name.clone(), result, exact, relative_error });
    }
    let n = polygons.len() - stats.excluded_zero_exact;
    stats.mean_relative_error = if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(stats)
}

/// Unsorted raw rows standing in for the original input: the base rows at
/// their positions in a seeded random order.
pub fn shuffled_raw(table: &PointTable, seed: u64) -> RawTable {
    let raw = table.to_raw();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    raw.gather(&order)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    if xs.is_empty() {
        0.0
    } else {
        xs[xs.len() / 2]
    }
}

fn median_phases(runs: &[BuildPhases]) -> BuildPhases {
    BuildPhases {
        clean_s: median(runs.iter().map(|p| p.clean_s).collect()),
        sort_s: median(runs.iter().map(|p| p.sort_s).collect()),
        filter_s: median(runs.iter().map(|p| p.filter_s).collect()),
        aggregate_s: median(runs.iter().map(|p| p.aggregate_s).collect()),
    }
}

impl BuildPhases {
    pub fn total(&self) -> f64 {
        self.clean_s + self.sort_s + self.filter_s + self.aggregate_s
    }
}

/// Isolated build: filter the raw rows, then clean, sort and aggregate only
/// the selected ones.
fn isolated_build(raw: &RawTable, filter: &FilterPredicate, level: u8, domain: geoblocks::cellgrid::Domain) -> Result<BuildPhases> {
    let t0 = Instant::now();
    let bound = filter.bind(&raw.schema)?;
    let rows: Vec<usize> = (0..raw.len()).filter(|&r| bound.matches(&raw.columns, r)).collect();
    let selected = raw.gather(&rows);
    let filter_time = t0.elapsed();
    let (table, timing) = selected.into_point_table(domain, false);
    let (_, report) = GeoBlock::build_with_report(&table, &FilterPredicate::all(), level)?;
    Ok(BuildPhases {
        clean_s: timing.clean.as_secs_f64(),
        sort_s: timing.sort.as_secs_f64(),
        filter_s: filter_time.as_secs_f64() + report.filter_time.as_secs_f64(),
        aggregate_s: report.aggregate_time.as_secs_f64(),
    })
}

/// Smallest k where `fixed + k * incremental < k * isolated`, if any.
pub fn crossover(fixed: f64, isolated: f64, incremental: f64) -> Option<u64> {
    let gain = isolated - incremental;
    if gain <= 0.0 {
        return None;
    }
    let k = (fixed / gain).floor() as u64 + 1;
    Some(k.max(1))
}

/// Compares isolated builds per (filter, level) against one clean and sort
/// followed by incremental builds. Each measurement is the median of `runs`.
pub fn amortization_bench(base: &PointTable, filters: &[FilterPredicate], levels: &[u8], runs: usize, seed: u64) -> Result<BenchReport> {
    ensure!(runs >= 1, "runs must be at least 1");
    ensure!(!levels.is_empty(), "at least one block level is needed");
    let mut report = BenchReport::default();
    if filters.is_empty() {
        return Ok(report);
    }
    let raw = shuffled_raw(base, seed);
    let domain = *base.domain();
    let start = Instant::now();

    let mut fixed_runs = Vec::new();
    let mut sorted = None;
    for _ in 0..runs {
        let (table, timing) = raw.into_point_table(domain, false);
        fixed_runs.push(BuildPhases { clean_s: timing.clean.as_secs_f64(), sort_s: timing.sort.as_secs_f64(), ..Default::default() });
        sorted = Some(table);
    }
    let sorted = sorted.expect("at least one run");
    let fixed = median_phases(&fixed_runs);

    for filter in filters {
        let mut iso_runs = Vec::new();
        let mut inc_runs = Vec::new();
        let mut selectivity = 0.0;
        for &level in levels {
            let mut iso = Vec::new();
            let mut inc = Vec::new();
            for _ in 0..runs {
                iso.push(isolated_build(&raw, filter, level, domain)?);
                let (_, r) = GeoBlock::build_with_report(&sorted, filter, level)?;
                selectivity = r.selectivity;
                inc.push(BuildPhases {
                    filter_s: r.filter_time.as_secs_f64(),
                    aggregate_s: r.aggregate_time.as_secs_f64(),
                    ..Default::default()
                });
            }
            iso_runs.push(median_phases(&iso));
            inc_runs.push(median_phases(&inc));
        }
        let isolated_phases = mean_phases(&iso_runs);
        let incremental_phases = mean_phases(&inc_runs);
        let (isolated_s, incremental_s) = (isolated_phases.total(), incremental_phases.total());
        report.amortization.push(FilterAmortization {
            filter: filter.to_string(),
            selectivity,
            isolated_s,
            incremental_s,
            crossover_k: crossover(fixed.total(), isolated_s, incremental_s),
            isolated_phases,
            incremental_phases,
        });
    }
    report.fixed_phases = Some(fixed);
    report.total_wall_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn mean_phases(runs: &[BuildPhases]) -> BuildPhases {
    let n = runs.len().max(1) as f64;
    BuildPhases {
        clean_s: runs.iter().map(|p| p.clean_s).sum::<f64>() / n,
        sort_s: runs.iter().map(|p| p.sort_s).sum::<f64>() / n,
        filter_s: runs.iter().map(|p| p.filter_s).sum::<f64>() / n,
        aggregate_s: runs.iter().map(|p| p.aggregate_s).sum::<f64>() / n,
    }
}

/// Total wall time of `f` over `reps` repetitions.
pub fn time_it<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<Duration> {
    let t0 = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    Ok(t0.elapsed())
}
