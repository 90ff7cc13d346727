//! How many blocks must be built from one sorted base table before the
//! one-time clean and sort pays off.

use geoblocks::cellgrid::Domain;
use geoblocks::store::synth::{generate_raw, Distribution, SynthConfig};
use geoblocks::store::FilterPredicate;
use geoblocks_service::bench::amortization_bench;

fn main() -> anyhow::Result<()> {
    let raw = generate_raw(&SynthConfig::new(500_000, Distribution::Clustered { k: 5, spread: 0.02 }, 6));
    let (base, _) = raw.into_point_table(Domain::NYC, false);
    let filters: Vec<FilterPredicate> =
        ["", "fare>=8", "fare>=15", "fare>=30"].iter().map(|f| f.parse()).collect::<Result<_, _>>()?;
    let r = amortization_bench(&base, &filters, &[8, 10, 12], 3, 1)?;
    println!("fixed clean + sort: {:.1} ms", r.fixed_phases.as_ref().map_or(0.0, |p| p.total()) * 1e3);
    for a in &r.amortization {
        println!(
            "{:12} selectivity {:.3}: isolated {:6.1} ms, incremental {:6.1} ms, crossover k* = {}",
            format!("`{}`", a.filter),
            a.selectivity,
            a.isolated_s * 1e3,
            a.incremental_s * 1e3,
            a.crossover_k.map_or("never".to_string(), |k| k.to_string())
        );
    }
    Ok(())
}
