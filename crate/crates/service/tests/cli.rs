use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn geoblocks(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_geoblocks"))
        .args(args)
        .current_dir(dir)
        .env("GEOBLOCKS_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    geoblocks(d, &["synth", "--n", "20000", "--dist", "clustered:5:0.03", "--seed", "9", "--out", "raw.csv"]);
    let report = json(&geoblocks(d, &[
        "extract", "--input", "raw.csv", "--schema",
        "fare:numeric,tip:numeric,distance:numeric,passengers:numeric,pickup_time:temporal",
        "--keep-coords", "--out", "base.gbpt",
    ]));
    assert_eq!(report["kept_rows"], 20000);

    let built = json(&geoblocks(d, &["build", "--base", "base.gbpt", "--filter", "fare>=6", "--level", "12", "--out", "b.gbk"]));
    assert!(built["aggregates"].as_u64().unwrap() > 0);

    std::fs::write(
        d.join("p.geojson"),
        r#"{"type":"Polygon","coordinates":[[[-74.05,40.65],[-73.85,40.65],[-73.85,40.85],[-74.05,40.85],[-74.05,40.65]]]}"#,
    )
    .unwrap();
    let q = json(&geoblocks(d, &["query", "--block", "b.gbk", "--polygon", "p.geojson", "--agg", "count,sum:fare,avg:tip", "--stats", "s.gbs"]));
    let c = json(&geoblocks(d, &["query", "--block", "b.gbk", "--polygon", "p.geojson", "--count-only"]));
    assert_eq!(q["count"], c["count"]);
    let bin = json(&geoblocks(d, &[
        "oracle", "--base", "base.gbpt", "--filter", "fare>=6", "--polygon", "p.geojson",
        "--agg", "count,sum:fare,avg:tip", "--method", "binsearch", "--level", "12",
    ]));
    assert_eq!(bin["count"], q["count"]);
    let brute = json(&geoblocks(d, &["oracle", "--base", "base.gbpt", "--filter", "fare>=6", "--polygon", "p.geojson"]));
    assert_eq!(brute["method"], "brute_exact");
    let (exact, approx) = (brute["count"].as_f64().unwrap(), q["count"].as_f64().unwrap());
    assert!((exact - approx).abs() / exact < 0.1, "{exact} vs {approx}");

    let refreshed = json(&geoblocks(d, &["refresh-cache", "--block", "b.gbk", "--stats", "s.gbs", "--budget-pct", "50"]));
    assert!(refreshed["cached_cells"].as_u64().unwrap() > 0);
    let stats = json(&geoblocks(d, &["cache-stats", "--block", "b.gbk"]));
    assert_eq!(stats["cache"]["cached_cells"], refreshed["cached_cells"]);
    let cached = json(&geoblocks(d, &["query", "--block", "b.gbk", "--polygon", "p.geojson", "--agg", "count,sum:fare,avg:tip"]));
    assert_eq!(cached["count"], q["count"]);
    assert!(cached["cache_hits"].as_u64().unwrap() > 0);

    geoblocks(d, &["coarsen", "--block", "b.gbk", "--level", "10", "--out", "c.gbk"]);
    let coarse = json(&geoblocks(d, &["query", "--block", "c.gbk", "--polygon", "p.geojson", "--count-only"]));
    assert!(coarse["epsilon_m"].as_f64().unwrap() >= c["epsilon_m"].as_f64().unwrap());

    geoblocks(d, &["bench", "workload", "--polygons", "10", "--skew-rounds", "4", "--seed", "2", "--out", "w.json"]);
    let replay = json(&geoblocks(d, &[
        "bench", "replay", "--workload", "w.json", "--block", "b.gbk", "--mode", "cached", "--refresh-every", "10", "--base", "base.gbpt",
    ]));
    assert_eq!(replay["mode"], "cached");
    assert_eq!(replay["refreshes"], 1);
    assert_eq!(replay["error"]["per_polygon"].as_array().unwrap().len(), 10);

    std::fs::write(d.join("f.json"), r#"["fare>=30", "fare>=5"]"#).unwrap();
    geoblocks(d, &["bench", "amortize", "--base", "base.gbpt", "--filters", "f.json", "--levels", "8,10", "--runs", "1", "--out", "a.json"]);
    let a = json(&std::fs::read_to_string(d.join("a.json")).unwrap());
    assert_eq!(a["amortization"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_geoblocks"))
        .args(["query", "--block", "missing.gbk", "--polygon", "p.geojson"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.gbk"));
}
