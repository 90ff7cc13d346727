use geoblocks::baseline::brute_exact;
use geoblocks::cellgrid::{Domain, Polygon};
use geoblocks::geoblock::{AggSpec, GeoBlock};
use geoblocks::store::synth::{generate_raw, random_polygons, Distribution, SynthConfig};
use geoblocks::store::{ColumnData, FilterPredicate, PointTable, RawTable};
use geoblocks::Error;

fn table(n: usize, seed: u64) -> PointTable {
    let raw = generate_raw(&SynthConfig::new(n, Distribution::Clustered { k: 5, spread: 0.02 }, seed));
    raw.into_point_table(Domain::NYC, true).0
}

fn close(a: f64, b: f64, terms: u64) -> bool {
    (a - b).abs() <= terms.max(1) as f64 * f64::EPSILON * a.abs().max(b.abs())
}

#[test]
fn count_matches_select_on_a_thousand_polygons() {
    let t = table(20_000, 1);
    let b = GeoBlock::build(&t, &FilterPredicate::all(), 13).unwrap();
    let spec = AggSpec::count_only();
    for poly in random_polygons(t.domain(), 1000, 0.005, 0.3, 2) {
        let cov = b.covering(&poly, 256).unwrap();
        assert_eq!(b.count_covering(&cov), b.select_covering(&cov, &spec).unwrap().count);
    }
}

#[test]
fn leaked_points_lie_within_epsilon_of_the_boundary() {
    let t = table(30_000, 3);
    let f = FilterPredicate::all();
    let spec = AggSpec::count_only();
    for level in [8u8, 11, 14] {
        let b = GeoBlock::build(&t, &f, level).unwrap();
        for poly in random_polygons(t.domain(), 25, 0.02, 0.2, level as u64) {
            let cov = b.covering(&poly, 256).unwrap();
            let mut near = 0u64;
            for row in 0..t.row_count() {
                let (lon, lat) = t.position(row);
                let in_cov = cov.contains_cell(t.keys()[row]);
                let inside = poly.contains(lon, lat);
                let dist = poly.distance_m(lon, lat);
                if in_cov && !inside {
                    assert!(dist <= cov.epsilon_m, "leak at {dist} m > {} m", cov.epsilon_m);
                }
                if !in_cov {
                    assert!(!inside, "covering missed an interior point");
                }
                if dist <= cov.epsilon_m {
                    near += 1;
                }
            }
            let s = b.select_covering(&cov, &spec).unwrap().count;
            let e = brute_exact(&t, &f, &poly, &spec).unwrap().result.count;
            assert!(s.abs_diff(e) <= near);
        }
    }
}

#[test]
fn brute_exact_matches_an_independent_scan() {
    let t = table(10_000, 4);
    let f: FilterPredicate = "passengers>=2, distance<6".parse().unwrap();
    let spec = AggSpec::all(t.schema());
    let fare = match t.column("fare").unwrap() {
        ColumnData::Numeric(v) => v.clone(),
        _ => unreachable!(),
    };
    let passengers = t.column("passengers").unwrap();
    let distance = t.column("distance").unwrap();
    for poly in random_polygons(t.domain(), 20, 0.05, 0.3, 5) {
        let r = brute_exact(&t, &f, &poly, &spec).unwrap().result;
        let (mut n, mut sum, mut max) = (0u64, 0.0, f64::NEG_INFINITY);
        for row in (0..t.row_count()).rev() {
            let coords = t.coords().unwrap();
            if passengers.get(row) >= 2.0 && distance.get(row) < 6.0 && poly.contains(coords.lon[row], coords.lat[row]) {
                n += 1;
                sum += fare[row];
                max = max.max(fare[row]);
            }
        }
        assert_eq!(r.count, n);
        let c = r.column("fare").unwrap();
        assert!(close(c.sum, sum, n));
        assert_eq!(c.max.unwrap_or(f64::NEG_INFINITY), max);
    }
}

#[test]
fn coarsen_equals_direct_build() {
    let t = table(20_000, 6);
    let f: FilterPredicate = "fare>=7".parse().unwrap();
    let fine = GeoBlock::build(&t, &f, 14).unwrap();
    for level in [13u8, 10, 5, 0] {
        let coarse = fine.coarsen(level).unwrap();
        let direct = GeoBlock::build(&t, &f, level).unwrap();
        assert_eq!(coarse.aggregates(), direct.aggregates());
        for i in 0..direct.aggregates().len() {
            let n = direct.aggregates()[i].count;
            for (x, y) in coarse.column_aggregates(i).iter().zip(direct.column_aggregates(i)) {
                assert_eq!((x.min, x.max), (y.min, y.max));
                assert!(close(x.sum, y.sum, n));
            }
        }
    }
    assert!(matches!(fine.coarsen(15), Err(Error::LevelOutOfRange { .. })));
}

#[test]
fn appended_batch_equals_rebuild() {
    let full = generate_raw(&SynthConfig::new(12_000, Distribution::Clustered { k: 3, spread: 0.03 }, 8));
    let (t_full, _) = full.into_point_table(Domain::NYC, true);
    let level = 8;
    let f = FilterPredicate::all();

    // the batch is 1000 of the last generated rows that land in cells the
    // first part already populates
    let split = 10_000;
    let head = slice(&full, 0..split);
    let (t_head, _) = head.into_point_table(Domain::NYC, true);
    let b = GeoBlock::build(&t_head, &f, level).unwrap();
    let existing: std::collections::BTreeSet<_> = b.aggregates().iter().map(|a| a.cell).collect();
    let tail = slice(&full, split..full.len());
    let (t_tail, _) = tail.into_point_table(Domain::NYC, true);
    let keep: Vec<usize> = (0..t_tail.row_count())
        .filter(|&r| existing.contains(&t_tail.keys()[r].parent_unchecked(level)))
        .take(1000)
        .collect();
    assert_eq!(keep.len(), 1000);
    let batch = t_tail.select_rows(&keep);

    let appended = b.append_batch(&batch).unwrap();
    assert!(appended.offsets_stale());
    assert_eq!(appended.header().total_count, b.header().total_count + keep.len() as u64);

    let mut merged = slice(&full, 0..split);
    let tail_rows: Vec<usize> = keep.iter().map(|&r| tail_index(&tail, &t_tail, r)).collect();
    for &r in &tail_rows {
        push(&mut merged, &tail, r);
    }
    let (t_merged, _) = merged.into_point_table(Domain::NYC, true);
    let rebuilt = GeoBlock::build(&t_merged, &f, level).unwrap();
    let spec = AggSpec::all(t_full.schema());
    for poly in random_polygons(&Domain::NYC, 30, 0.02, 0.3, 9) {
        let a = appended.select_query(&poly, &spec, 256).unwrap();
        let r = rebuilt.select_query(&poly, &spec, 256).unwrap();
        assert_eq!(a.count, r.count);
        assert_eq!(appended.count_query(&poly, 256).unwrap(), r.count);
        for (x, y) in a.columns.iter().zip(&r.columns) {
            assert_eq!((x.min, x.max), (y.min, y.max));
            assert!(close(x.sum, y.sum, a.count));
        }
    }
}

fn slice(raw: &RawTable, rows: std::ops::Range<usize>) -> RawTable {
    let mut out = RawTable::new(raw.schema.clone());
    for r in rows {
        push(&mut out, raw, r);
    }
    out
}

fn push(out: &mut RawTable, raw: &RawTable, r: usize) {
    out.lon.push(raw.lon[r]);
    out.lat.push(raw.lat[r]);
    for (dst, src) in out.columns.iter_mut().zip(&raw.columns) {
        match (dst, src) {
            (ColumnData::Numeric(d), ColumnData::Numeric(s)) => d.push(s[r]),
            (ColumnData::Temporal(d), ColumnData::Temporal(s)) => d.push(s[r]),
            _ => unreachable!(),
        }
    }
}

/// Raw row of a sorted table row, found by its exact coordinates.
fn tail_index(raw: &RawTable, sorted: &PointTable, row: usize) -> usize {
    let c = sorted.coords().unwrap();
    (0..raw.len()).find(|&i| raw.lon[i] == c.lon[row] && raw.lat[i] == c.lat[row]).unwrap()
}

#[test]
fn polygon_outside_the_domain_is_empty() {
    let t = table(1000, 10);
    let b = GeoBlock::build(&t, &FilterPredicate::all(), 10).unwrap();
    let far = Polygon::rectangle(geoblocks::cellgrid::Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap();
    assert_eq!(b.count_query(&far, 256).unwrap(), 0);
    assert!(b.covering(&far, 256).unwrap().is_empty());
}
