//! Synthesize CSV points, extract them into a sorted base table and build
//! blocks for two filters at one level.

use geoblocks::cellgrid::Domain;
use geoblocks::geoblock::GeoBlock;
use geoblocks::store::synth::{self, Distribution, SynthConfig};
use geoblocks::store::{extract, ExtractOptions, FilterPredicate};

fn main() -> geoblocks::Result<()> {
    let cfg = SynthConfig::new(200_000, Distribution::Clustered { k: 5, spread: 0.02 }, 7);
    let csv = synth::synth_generate(&cfg);
    let opts = ExtractOptions {
        schema: synth::schema(),
        domain: Domain::NYC,
        lon_col: "lon".into(),
        lat_col: "lat".into(),
        keep_coords: false,
    };
    let (table, report) = extract(csv.as_bytes(), &opts)?;
    println!(
        "extracted {} of {} rows (clean {:?}, sort {:?})",
        report.kept_rows, report.input_rows, report.clean_time, report.sort_time
    );

    for filter in ["", "fare>=20, passengers>=2"] {
        let f: FilterPredicate = filter.parse()?;
        let (block, r) = GeoBlock::build_with_report(&table, &f, 12)?;
        println!(
            "filter {:24} selectivity {:.3}: {} cell aggregates, {} tuples, {} KiB",
            format!("`{f}`"),
            r.selectivity,
            block.aggregates().len(),
            block.header().total_count,
            block.aggregate_bytes() / 1024
        );
    }
    Ok(())
}
