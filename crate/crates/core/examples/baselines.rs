//! Compare a block against the on-the-fly baselines.

use std::time::Instant;

use geoblocks::prelude::*;
use geoblocks::store::synth::random_polygons;

fn main() -> geoblocks::Result<()> {
    let raw = synth::generate_raw(&SynthConfig::new(500_000, Distribution::Clustered { k: 5, spread: 0.02 }, 8));
    let (table, _) = raw.into_point_table(Domain::NYC, true);
    let f: FilterPredicate = "fare>=5".parse()?;
    let level = 12;
    let block = GeoBlock::build(&table, &f, level)?;
    let spec: AggSpec = "count,avg:fare".parse()?;
    let polys = random_polygons(&Domain::NYC, 20, 0.05, 0.2, 9);

    let t = Instant::now();
    let sel: Vec<u64> = polys.iter().map(|p| block.select_query(p, &spec, DEFAULT_MAX_CELLS).map(|r| r.count)).collect::<Result<_>>()?;
    let t_sel = t.elapsed();
    let t = Instant::now();
    let bin: Vec<u64> = polys
        .iter()
        .map(|p| binsearch_covering(&table, &f, p, &spec, level, DEFAULT_MAX_CELLS).map(|r| r.result.count))
        .collect::<Result<_>>()?;
    let t_bin = t.elapsed();
    let t = Instant::now();
    let exact: Vec<u64> = polys.iter().map(|p| brute_exact(&table, &f, p, &spec).map(|r| r.result.count)).collect::<Result<_>>()?;
    let t_brute = t.elapsed();

    assert_eq!(sel, bin);
    let err: f64 = sel.iter().zip(&exact).filter(|(_, &e)| e > 0).map(|(&s, &e)| s.abs_diff(e) as f64 / e as f64).sum::<f64>() / polys.len() as f64;
    println!("select {t_sel:?}, binsearch {t_bin:?}, brute force {t_brute:?}");
    println!("select = binsearch on all {} polygons; mean relative error vs exact {:.4}", polys.len(), err);
    Ok(())
}
