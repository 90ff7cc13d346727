use super::{AggregateTrie, Probe, StatsCollector};
use crate::cellgrid::{Covering, Polygon};
use crate::error::Result;
use crate::geoblock::{Accumulator, AggSpec, GeoBlock, QueryResult};

pub fn adapted_select(
    block: &GeoBlock,
    trie: &AggregateTrie,
    poly: &Polygon,
    spec: &AggSpec,
    max_cells: usize,
) -> Result<QueryResult> {
    let covering = block.covering(poly, max_cells)?;
    adapted_select_covering(block, trie, &covering, spec, None)
}

/// SELECT that answers covering cells from the cache where possible.
///
/// A cached cell is folded directly. For a cell whose node exists without an
/// aggregate, cached direct children are folded and the others scanned.
/// Everything else is scanned from the aggregate array. A covering cell
/// counts as a cache hit when no scan was needed for it.
pub fn adapted_select_covering(
    block: &GeoBlock,
    trie: &AggregateTrie,
    covering: &Covering,
    spec: &AggSpec,
    collector: Option<&StatsCollector>,
) -> Result<QueryResult> {
    let bound = spec.bind(block.schema())?;
    let cells = block.prune(covering);
    let mut acc = Accumulator::new(bound.columns.len());
    let mut outcomes = Vec::with_capacity(cells.len());
    let (mut hits, mut scanned, mut cursor) = (0, 0, 0);

    let scan = |cell, cursor: &mut usize, acc: &mut Accumulator, scanned: &mut usize| {
        let (start, end) = block.cell_span(cell, *cursor);
        block.fold_span(start, end, acc, &bound.columns);
        *scanned += end - start;
        *cursor = end;
    };

    for &cell in &cells {
        match trie.probe(cell)? {
            Probe::Hit(agg) => {
                agg.fold_into(&mut acc, &bound.columns);
                hits += 1;
                outcomes.push(true);
            }
            Probe::NodeNoAgg(node) if cell.level() < block.block_level() => {
                let mut all_cached = true;
                for d in 0..4 {
                    match trie.probe_child(node, d)? {
                        Probe::Hit(agg) => agg.fold_into(&mut acc, &bound.columns),
                        _ => {
                            all_cached = false;
                            scan(cell.child(d), &mut cursor, &mut acc, &mut scanned);
                        }
                    }
                }
                hits += all_cached as usize;
                outcomes.push(all_cached);
            }
            _ => {
                scan(cell, &mut cursor, &mut acc, &mut scanned);
                outcomes.push(false);
            }
        }
    }
    if let Some(c) = collector {
        c.record(&cells, &outcomes);
    }
    let mut result = acc.into_result(block.schema(), &bound);
    result.cells_visited = cells.len();
    result.cache_hits = hits;
    result.aggregates_scanned = scanned;
    result.epsilon_m = covering.epsilon_m;
    Ok(result)
}

/// Plain SELECT that records its covering cells as cache misses.
pub fn select_with_stats(
    block: &GeoBlock,
    covering: &Covering,
    spec: &AggSpec,
    collector: &StatsCollector,
) -> Result<QueryResult> {
    let result = block.select_covering(covering, spec)?;
    let cells = block.prune(covering);
    collector.record(&cells, &vec![false; cells.len()]);
    Ok(result)
}
