use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use geoblocks::cellgrid::{Domain, Polygon};
use geoblocks::geoblock::GeoBlock;
use geoblocks::store::synth::{generate_raw, random_polygons, Distribution, SynthConfig};
use geoblocks::store::FilterPredicate;
use geoblocks_service::bench::{replay, Mode, ReplayOptions};
use geoblocks_service::server::{router, AppState, ServeOptions};
use geoblocks_service::workload::WorkloadSpec;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn block() -> GeoBlock {
    let raw = generate_raw(&SynthConfig::new(20_000, Distribution::Clustered { k: 6, spread: 0.02 }, 11));
    let (table, _) = raw.into_point_table(Domain::NYC, false);
    GeoBlock::build(&table, &"fare>=5".parse::<FilterPredicate>().unwrap(), 12).unwrap()
}

fn state(options: ServeOptions) -> Arc<AppState> {
    let mut blocks = BTreeMap::new();
    blocks.insert("taxi".to_string(), block());
    Arc::new(AppState::new(blocks, options))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn full_domain() -> Value {
    Polygon::rectangle(Domain::NYC.rect()).unwrap().to_geojson()
}

#[tokio::test]
async fn full_domain_query_matches_block_totals() {
    let app = router(state(ServeOptions::default()));
    let (s, blocks) = call(&app, "GET", "/blocks", None).await;
    assert_eq!(s, StatusCode::OK);
    let summary = &blocks[0];
    assert_eq!(summary["name"], "taxi");
    let body = json!({ "block": "taxi", "polygon": full_domain(), "aggs": "count,sum:fare,min:fare,max:fare" });
    let (s, r) = call(&app, "POST", "/query?debug_covering=1", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(r["count"], summary["total_count"]);
    assert_eq!(r["result"]["min:fare"], summary["totals"]["fare"]["min"]);
    assert_eq!(r["result"]["max:fare"], summary["totals"]["fare"]["max"]);
    let (a, b) = (r["result"]["sum:fare"].as_f64().unwrap(), summary["totals"]["fare"]["sum"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-9 * b.abs());
    assert_eq!(r["covering"], json!([geoblocks::cellgrid::CellId::ROOT.to_hex()]));
    assert_eq!(r["epsilon_m"], 0.0);

    let body = json!({ "block": "taxi", "polygon": full_domain(), "count_only": true });
    let (s, r) = call(&app, "POST", "/query", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["count"], summary["total_count"]);
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let app = router(state(ServeOptions::default()));
    let open_ring = json!({ "type": "Polygon", "coordinates": [[[-74.0, 40.7], [-73.9, 40.7]]] });
    let (s, r) = call(&app, "POST", "/query", Some(json!({ "block": "taxi", "polygon": open_ring }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(r["error"].is_string());

    let feature = json!({ "type": "Feature", "geometry": full_domain() });
    let (s, _) = call(&app, "POST", "/query", Some(json!({ "block": "taxi", "polygon": feature }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let body = json!({ "block": "taxi", "polygon": full_domain(), "aggs": "median:fare" });
    let (s, _) = call(&app, "POST", "/query", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let body = json!({ "block": "taxi", "polygon": full_domain(), "aggs": "sum:nope" });
    let (s, _) = call(&app, "POST", "/query", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "POST", "/query", Some(json!("not an object"))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "POST", "/admin/refresh-cache", Some(json!({ "block": "taxi", "budget_pct": -1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_blocks_are_not_found() {
    let app = router(state(ServeOptions::default()));
    let (s, _) = call(&app, "POST", "/query", Some(json!({ "block": "nope", "polygon": full_domain() }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/stats/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/admin/refresh-cache", Some(json!({ "block": "nope" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_admin_operation_conflicts() {
    let st = state(ServeOptions::default());
    let app = router(st.clone());
    let guard = st.blocks["taxi"].hold_admin().unwrap();
    let (s, _) = call(&app, "POST", "/admin/refresh-cache", Some(json!({ "block": "taxi" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    drop(guard);
    let (s, r) = call(&app, "POST", "/admin/refresh-cache", Some(json!({ "block": "taxi", "budget_pct": 10.0 }))).await;
    assert_eq!(s, StatusCode::OK, "{r}");
}

#[tokio::test]
async fn http_results_match_library_replay_and_cache_is_transparent() {
    let st = state(ServeOptions { refresh_every: 0, ..ServeOptions::default() });
    let app = router(st.clone());
    let aggs = "count,sum:fare,avg:tip,max:distance";
    let w = WorkloadSpec::synthetic(&Domain::NYC, 20, 0.2, 3, aggs, 5);
    let expected = replay(&w, &st.blocks["taxi"].current(), &ReplayOptions::new(Mode::Uncached)).unwrap();
    let resolved = w.resolve().unwrap();

    let mut run = Vec::new();
    for (name, _) in &resolved.queries {
        let body = json!({ "block": "taxi", "polygon": resolved.polygons[name].to_geojson(), "aggs": aggs });
        let (s, r) = call(&app, "POST", "/query", Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        run.push(r);
    }
    for (r, q) in run.iter().zip(&expected.queries) {
        assert_eq!(r["result"], Value::Object(q.result.clone()));
        assert_eq!(r["cells_visited"], q.cells_visited);
        assert_eq!(r["cache_hits"], 0);
    }

    let (_, stats) = call(&app, "GET", "/stats/taxi", None).await;
    assert_eq!(stats["queries"], resolved.queries.len());
    assert_eq!(stats["hit_rate"], 0.0);
    let (s, refreshed) = call(&app, "POST", "/admin/refresh-cache", Some(json!({ "block": "taxi", "budget_pct": 100.0 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(refreshed["cache"]["cached_cells"].as_u64().unwrap() > 0);

    let mut hits = 0;
    for ((name, _), before) in resolved.queries.iter().zip(&run) {
        let body = json!({ "block": "taxi", "polygon": resolved.polygons[name].to_geojson(), "aggs": aggs });
        let (_, r) = call(&app, "POST", "/query", Some(body)).await;
        assert_eq!(r["count"], before["count"]);
        assert_eq!(r["result"]["max:distance"], before["result"]["max:distance"]);
        for key in ["sum:fare", "avg:tip"] {
            match (r["result"][key].as_f64(), before["result"][key].as_f64()) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{key}: {a} vs {b}"),
                (a, b) => assert!(a.is_none() && b.is_none() && before["count"] == 0, "{key}"),
            }
        }
        hits += r["cache_hits"].as_u64().unwrap();
        let body = json!({ "block": "taxi", "polygon": resolved.polygons[name].to_geojson(), "aggs": aggs, "use_cache": false });
        let (_, r) = call(&app, "POST", "/query", Some(body)).await;
        assert_eq!(r["cache_hits"], 0);
    }
    assert!(hits > 0);
    let (_, stats) = call(&app, "GET", "/stats/taxi", None).await;
    assert!(stats["hit_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(stats["refreshes"], 1);
}

#[tokio::test]
async fn cache_refreshes_automatically() {
    let st = state(ServeOptions { refresh_every: 5, budget_pct: 20.0, ..ServeOptions::default() });
    let app = router(st.clone());
    for p in random_polygons(&Domain::NYC, 12, 0.05, 0.2, 2) {
        let (s, _) = call(&app, "POST", "/query", Some(json!({ "block": "taxi", "polygon": p.to_geojson() }))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, stats) = call(&app, "GET", "/stats/taxi", None).await;
    assert_eq!(stats["refreshes"], 2);
    assert_eq!(stats["queries_since_refresh"], 2);
    assert!(stats["cache"]["cached_cells"].as_u64().unwrap() > 0);
    let (_, blocks) = call(&app, "GET", "/blocks", None).await;
    assert_eq!(blocks[0]["cached_cells"], stats["cache"]["cached_cells"]);
}
