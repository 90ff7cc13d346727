//! Replay a skewed workload with and without the query cache.

use geoblocks::cellgrid::Domain;
use geoblocks::geoblock::GeoBlock;
use geoblocks::store::synth::{generate_raw, Distribution, SynthConfig};
use geoblocks_service::bench::{replay, Budget, Mode, ReplayOptions};
use geoblocks_service::workload::{Subset, WorkloadSpec};

fn main() -> anyhow::Result<()> {
    let raw = generate_raw(&SynthConfig::new(500_000, Distribution::Clustered { k: 5, spread: 0.02 }, 4));
    let (table, _) = raw.into_point_table(Domain::NYC, false);
    let block = GeoBlock::build(&table, &"fare>=5".parse()?, 12)?;
    let w = WorkloadSpec::synthetic(&Domain::NYC, 100, 0.1, 8, "count,sum:fare,avg:tip", 3);

    for (mode, pct) in [(Mode::Uncached, 0.0f64), (Mode::Cached, 0.5), (Mode::Cached, 2.0), (Mode::Cached, 10.0)] {
        let opts = ReplayOptions { mode, refresh_every: 110, budget: Budget::Percent(pct.max(0.01)), ..ReplayOptions::new(mode) };
        let r = replay(&w, &block, &opts)?;
        let s = &r.subsets[&Subset::Skewed];
        println!(
            "{mode:?} {pct:4}%: total {:6.1} ms, skewed {:6.1} ms, skewed hit rate after refresh {:5.1}%",
            r.total_wall_s * 1e3,
            s.wall_s * 1e3,
            s.hit_rate_after_refresh * 100.0
        );
    }
    Ok(())
}
