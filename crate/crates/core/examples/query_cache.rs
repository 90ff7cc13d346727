//! Train the query cache on a skewed workload and compare scans.

use geoblocks::prelude::*;
use geoblocks::store::synth::random_polygons;

fn main() -> geoblocks::Result<()> {
    let raw = synth::generate_raw(&SynthConfig::new(200_000, Distribution::Clustered { k: 5, spread: 0.02 }, 5));
    let (table, _) = raw.into_point_table(Domain::NYC, false);
    let mut block = GeoBlock::build(&table, &FilterPredicate::all(), 13)?;
    let spec = AggSpec::all(block.schema());
    let hot = random_polygons(&Domain::NYC, 4, 0.05, 0.15, 6);

    let mut stats = StatsTrie::default();
    for _ in 0..3 {
        for p in &hot {
            stats.record_hits(&block.covering(p, DEFAULT_MAX_CELLS)?, &block);
        }
    }
    for pct in [0.1, 1.0, 5.0] {
        let budget = (block.aggregate_bytes() as f64 * pct / 100.0) as usize;
        let trie = AggregateTrie::build(&block, &stats, budget)?;
        let s = trie.stats();
        let (mut hits, mut cells, mut scanned, mut plain) = (0, 0, 0, 0);
        for p in &hot {
            let a = adapted_select(&block, &trie, p, &spec, DEFAULT_MAX_CELLS)?;
            let r = block.select_query(p, &spec, DEFAULT_MAX_CELLS)?;
            assert_eq!(a.count, r.count);
            hits += a.cache_hits;
            cells += a.cells_visited;
            scanned += a.aggregates_scanned;
            plain += r.aggregates_scanned;
        }
        println!(
            "budget {pct:4}%: {} cached cells in {} of {} bytes, hits {hits}/{cells}, aggregates scanned {scanned} vs {plain}",
            s.cached_cells, s.bytes_used, s.budget_bytes
        );
        block.set_cache(trie)?;
    }
    println!("block keeps the last cache: {} cells", block.cache().map_or(0, |c| c.cached_cells()));
    Ok(())
}
