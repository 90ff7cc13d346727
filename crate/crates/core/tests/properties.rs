use geoblocks::aggtrie::{adapted_select_covering, AggregateTrie, StatsTrie};
use geoblocks::baseline::binsearch_covering;
use geoblocks::cellgrid::{cover_polygon, CellId, Domain, Polygon, Rect, MAX_LEVEL};
use geoblocks::geoblock::{AggSpec, GeoBlock};
use geoblocks::store::synth::{generate_raw, random_polygons, Distribution, SynthConfig};
use geoblocks::store::{FilterPredicate, PointTable};
use proptest::prelude::*;

fn path() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..=MAX_LEVEL as usize)
}

fn table(n: usize, seed: u64) -> PointTable {
    let raw = generate_raw(&SynthConfig::new(n, Distribution::Clustered { k: 4, spread: 0.03 }, seed));
    raw.into_point_table(Domain::NYC, true).0
}

fn close(a: f64, b: f64, terms: u64) -> bool {
    let ulp = f64::EPSILON * a.abs().max(b.abs());
    (a - b).abs() <= (terms.max(1) as f64) * ulp
}

proptest! {
    #[test]
    fn path_round_trip(p in path()) {
        let id = CellId::from_path(&p).unwrap();
        prop_assert_eq!(id.path(), p.clone());
        prop_assert_eq!(id.level() as usize, p.len());
        prop_assert_eq!(CellId::from_raw(id.raw()).unwrap(), id);
        prop_assert_eq!(id.to_hex().parse::<CellId>().unwrap(), id);
    }

    #[test]
    fn ij_round_trip(level in 0u8..=MAX_LEVEL, i in any::<u32>(), j in any::<u32>()) {
        let mask = if level == 0 { 0 } else { u32::MAX >> (32 - level as u32) };
        let id = CellId::from_ij(i & mask, j & mask, level);
        prop_assert_eq!(id.ij(), (i & mask, j & mask));
        prop_assert_eq!(id.level(), level);
    }

    #[test]
    fn containment_is_path_prefix(a in prop::collection::vec(0u8..4, 0..=5), b in prop::collection::vec(0u8..4, 0..=5)) {
        let (ca, cb) = (CellId::from_path(&a).unwrap(), CellId::from_path(&b).unwrap());
        prop_assert_eq!(ca.contains(cb), b.starts_with(&a));
        prop_assert_eq!(ca.intersects(cb), b.starts_with(&a) || a.starts_with(&b));
    }

    #[test]
    fn children_partition_parent_range(p in prop::collection::vec(0u8..4, 0..30)) {
        let id = CellId::from_path(&p).unwrap();
        let kids = id.children().unwrap();
        prop_assert_eq!(kids[0].range_min(), id.range_min());
        prop_assert_eq!(kids[3].range_max(), id.range_max());
        for w in kids.windows(2) {
            prop_assert_eq!(w[0].range_max() + 2, w[1].range_min());
        }
        for k in kids {
            prop_assert_eq!(k.immediate_parent(), Some(id));
        }
    }

    #[test]
    fn key_order_follows_curve(a in path(), b in path()) {
        // disjoint cells order by their id ranges
        let (ca, cb) = (CellId::from_path(&a).unwrap(), CellId::from_path(&b).unwrap());
        if !ca.intersects(cb) {
            prop_assert_eq!(ca < cb, ca.range_max() < cb.range_min());
        }
    }

    #[test]
    fn point_cell_contains_point(fx in 0.0f64..1.0, fy in 0.0f64..1.0, level in 0u8..=MAX_LEVEL) {
        let d = Domain::NYC;
        let (lon, lat) = (d.min_lon + fx * d.width(), d.min_lat + fy * d.height());
        let c = d.cell_of_point(lon, lat, level).unwrap();
        let leaf = d.cell_of_point(lon, lat, MAX_LEVEL).unwrap();
        prop_assert!(c.contains(leaf));
        let r = d.cell_rect(c);
        let tol = 1e-9;
        prop_assert!(lon >= r.min_x - tol && lon <= r.max_x + tol && lat >= r.min_y - tol && lat <= r.max_y + tol);
    }

    #[test]
    fn error_level_is_monotone(e1 in 0.01f64..1e5, e2 in 0.01f64..1e5) {
        let d = Domain::NYC;
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let (l_lo, l_hi) = (d.level_for_error(lo).unwrap(), d.level_for_error(hi).unwrap());
        prop_assert!(l_lo >= l_hi);
        prop_assert!(d.max_cell_diagonal_m(l_lo) <= lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covering_is_sorted_disjoint_and_bounded(seed in any::<u64>(), level in 4u8..16, max_cells in 4usize..400) {
        let d = Domain::NYC;
        let poly = &random_polygons(&d, 1, 0.01, 0.3, seed)[0];
        let cov = cover_polygon(poly, level, max_cells, &d).unwrap();
        prop_assert!(cov.len() <= max_cells);
        prop_assert!(cov.cells.iter().all(|c| c.level() <= level));
        for w in cov.cells.windows(2) {
            prop_assert!(w[0].range_max() < w[1].range_min());
        }
    }

    #[test]
    fn select_equals_binsearch_and_count(seed in 0u64..1000, level in 6u8..16) {
        let t = table(3000, seed % 7);
        let f: FilterPredicate = "fare>=9".parse().unwrap();
        let b = GeoBlock::build(&t, &f, level).unwrap();
        let spec = AggSpec::all(t.schema());
        for poly in random_polygons(t.domain(), 3, 0.03, 0.3, seed) {
            let s = b.select_query(&poly, &spec, 256).unwrap();
            let o = binsearch_covering(&t, &f, &poly, &spec, level, 256).unwrap().result;
            prop_assert_eq!(s.count, o.count);
            prop_assert_eq!(b.count_query(&poly, 256).unwrap(), s.count);
            for (x, y) in s.columns.iter().zip(&o.columns) {
                prop_assert_eq!((x.min, x.max), (y.min, y.max));
                prop_assert!(close(x.sum, y.sum, s.count));
            }
        }
    }

    #[test]
    fn adapted_equals_select_for_any_trie(seed in 0u64..1000, budget in 40usize..20_000) {
        let t = table(2000, seed % 5);
        let b = GeoBlock::build(&t, &FilterPredicate::all(), 12).unwrap();
        let spec = AggSpec::all(t.schema());
        let polys = random_polygons(t.domain(), 6, 0.02, 0.25, seed);
        let mut st = StatsTrie::default();
        for p in &polys[..4] {
            st.record_hits(&b.covering(p, 128).unwrap(), &b);
        }
        let trie = AggregateTrie::build(&b, &st, budget).unwrap();
        prop_assert!(trie.bytes_used() <= budget);
        for p in &polys {
            let cov = b.covering(p, 128).unwrap();
            let a = adapted_select_covering(&b, &trie, &cov, &spec, None).unwrap();
            let s = b.select_covering(&cov, &spec).unwrap();
            prop_assert_eq!(a.count, s.count);
            for (x, y) in a.columns.iter().zip(&s.columns) {
                prop_assert_eq!((x.min, x.max), (y.min, y.max));
                prop_assert!(close(x.sum, y.sum, s.count));
            }
        }
    }

    #[test]
    fn trie_is_no_larger_than_four_pointer_encoding_without_single_children(seed in 0u64..1000, budget in 40usize..50_000) {
        let t = table(1500, seed % 3);
        let b = GeoBlock::build(&t, &FilterPredicate::all(), 11).unwrap();
        let mut st = StatsTrie::default();
        for p in random_polygons(t.domain(), 5, 0.02, 0.2, seed) {
            st.record_hits(&b.covering(&p, 64).unwrap(), &b);
        }
        let trie = AggregateTrie::build(&b, &st, budget).unwrap();
        if trie.bytes_used() > trie.four_pointer_bytes().unwrap() {
            prop_assert!(trie.has_single_child_node().unwrap());
        }
    }

    #[test]
    fn rank_is_a_strict_total_order(hits in prop::collection::vec((prop::collection::vec(0u8..4, 0..6), 1u64..5), 1..40)) {
        let mut st = StatsTrie::default();
        for (p, n) in &hits {
            for _ in 0..*n {
                st.increment(CellId::from_path(p).unwrap());
            }
        }
        let ranked = st.rank_cells();
        prop_assert_eq!(ranked.len(), st.len());
        for w in ranked.windows(2) {
            let ka = (std::cmp::Reverse(w[0].score), w[0].level, w[0].cell);
            let kb = (std::cmp::Reverse(w[1].score), w[1].level, w[1].cell);
            prop_assert!(ka < kb);
        }
        prop_assert_eq!(st.rank_cells(), ranked);
    }
}

#[test]
fn full_domain_rectangle_is_root() {
    let d = Domain::NYC;
    let cov = cover_polygon(&Polygon::rectangle(d.rect()).unwrap(), 20, 256, &d).unwrap();
    assert_eq!(cov.cells, vec![CellId::ROOT]);
    assert_eq!(cov.epsilon_m, 0.0);
    let quarter = Rect::new(d.min_lon, d.min_lat, d.min_lon + d.width() / 2.0, d.min_lat + d.height() / 2.0);
    let cov = cover_polygon(&Polygon::rectangle(quarter).unwrap(), 20, 256, &d).unwrap();
    assert_eq!(cov.cells, vec![CellId::from_path(&[0]).unwrap()]);
}
