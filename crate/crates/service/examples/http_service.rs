//! Drive the HTTP API in-process: list blocks, query, refresh the cache and
//! read statistics. `geoblocks serve --blocks taxi=block.gbk` exposes the
//! same router on a socket.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use geoblocks::cellgrid::Domain;
use geoblocks::geoblock::GeoBlock;
use geoblocks::store::synth::{generate_raw, random_polygons, Distribution, SynthConfig};
use geoblocks_service::server::{router, AppState, ServeOptions};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    println!("{method} {uri} -> {status}");
    v
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let raw = generate_raw(&SynthConfig::new(100_000, Distribution::Clustered { k: 5, spread: 0.02 }, 1));
    let (table, _) = raw.into_point_table(Domain::NYC, false);
    let mut blocks = BTreeMap::new();
    blocks.insert("taxi".to_string(), GeoBlock::build(&table, &"fare>=5".parse()?, 12)?);
    let app = router(Arc::new(AppState::new(blocks, ServeOptions { refresh_every: 0, ..Default::default() })));

    println!("{:#}", call(&app, "GET", "/blocks", Value::Null).await);
    let poly = random_polygons(&Domain::NYC, 1, 0.1, 0.15, 2).remove(0).to_geojson();
    let q = json!({ "block": "taxi", "polygon": poly, "aggs": "count,avg:fare,max:tip" });
    let r = call(&app, "POST", "/query", q.clone()).await;
    println!("  result {} cache_hits {}", r["result"], r["cache_hits"]);
    let r = call(&app, "POST", "/admin/refresh-cache", json!({ "block": "taxi", "budget_pct": 2.0 })).await;
    println!("  cache {}", r["cache"]);
    let r = call(&app, "POST", "/query", q).await;
    println!("  result {} cache_hits {} of {}", r["result"], r["cache_hits"], r["cells_visited"]);
    println!("{:#}", call(&app, "GET", "/stats/taxi", Value::Null).await);
    Ok(())
}
