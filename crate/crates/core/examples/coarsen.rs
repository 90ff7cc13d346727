//! Trade accuracy for size by coarsening a block. Coverings get a generous
//! cell budget so the block level, not the cell cap, bounds the error.

use geoblocks::prelude::*;
use geoblocks::store::synth::random_polygons;

fn main() -> geoblocks::Result<()> {
    let raw = synth::generate_raw(&SynthConfig::new(300_000, Distribution::Clustered { k: 5, spread: 0.02 }, 2));
    let (table, _) = raw.into_point_table(Domain::NYC, true);
    let fine = GeoBlock::build(&table, &FilterPredicate::all(), 14)?;
    let poly = &random_polygons(&Domain::NYC, 1, 0.1, 0.15, 3)[0];
    let exact = brute_exact(&table, &FilterPredicate::all(), poly, &AggSpec::count_only())?.result.count;
    println!("exact count {exact}");
    for level in [14u8, 12, 10, 8] {
        let b = if level == 14 { fine.clone() } else { fine.coarsen(level)? };
        let cov = b.covering(poly, 1 << 14)?;
        let n = b.count_covering(&cov);
        println!(
            "level {level}: {:7} aggregates, count {n:6} ({:+.2}%), epsilon {:6.1} m",
            b.aggregates().len(),
            100.0 * (n as f64 - exact as f64) / exact as f64,
            cov.epsilon_m
        );
    }
    Ok(())
}
