//! SELECT and COUNT over a block.

use geoblocks::prelude::*;
use geoblocks::store::synth::random_polygons;

fn main() -> geoblocks::Result<()> {
    let raw = synth::generate_raw(&SynthConfig::new(100_000, Distribution::Clustered { k: 5, spread: 0.02 }, 1));
    let (table, _) = raw.into_point_table(Domain::NYC, false);
    let block = GeoBlock::build(&table, &"fare>=5".parse()?, 13)?;
    let spec: AggSpec = "count,sum:fare,avg:tip,min:pickup_time,max:distance".parse()?;

    for poly in random_polygons(&Domain::NYC, 3, 0.05, 0.2, 4) {
        let r = block.select_query(&poly, &spec, DEFAULT_MAX_CELLS)?;
        let n = block.count_query(&poly, DEFAULT_MAX_CELLS)?;
        println!("count {n} (select {}), epsilon {:.1} m, {} cells, {} aggregates", r.count, r.epsilon_m, r.cells_visited, r.aggregates_scanned);
        println!("  {}", serde_json::Value::Object(r.to_json(&spec)));
    }
    Ok(())
}
