use reidlab_core::bench::{build_tradeoff_report, measure_throughput, RunManifest, TradeoffEntry, TradeoffReport};
use reidlab_core::eval::EvalReport;
use reidlab_core::Error;

fn entry(method: &str, run_id: &str, map: f64) -> TradeoffEntry {
    let throughput = measure_throughput(method, |x: &u64| Ok::<_, Error>(x * 3), &[1u64, 2, 3, 4], 2, 3).unwrap();
    TradeoffEntry {
        method: method.to_string(),
        run_id: run_id.to_string(),
        eval: EvalReport {
            rank1: 0.5,
            rank5: 0.75,
            map,
            num_queries: 4,
            num_skipped: 0,
        },
        throughput,
        feature_dim: 16,
        param_count: None,
    }
}

fn manifest() -> RunManifest {
    RunManifest {
        run_id: "r1".into(),
        ..RunManifest::default()
    }
}

#[test]
fn report_files_round_trip() {
    let report = build_tradeoff_report(
        manifest(),
        vec![entry("a", "r1", 0.2), entry("b", "r1", 0.6), entry("c", "r1", 0.2)],
    )
    .unwrap();
    let order: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(order, ["b", "a", "c"]);

    let dir = tempfile::tempdir().unwrap();
    report.save(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("method,rank1_pct,rank5_pct,map_pct,images_per_sec,feature_dim,param_count")
    );
    assert_eq!(TradeoffReport::rows_from_csv(&csv).unwrap(), report.rows);
    let json: TradeoffReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tradeoff.json")).unwrap()).unwrap();
    assert_eq!(json, report);
    let scatter = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 4);
}

#[test]
fn mismatched_runs_are_rejected() {
    let err = build_tradeoff_report(manifest(), vec![entry("a", "r1", 0.2), entry("b", "r2", 0.3)]).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)));
}

#[test]
fn stored_counters_reproduce_the_rate() {
    let t = entry("a", "r1", 0.1).throughput;
    assert!((t.recomputed_rate() - t.images_per_second).abs() <= 1e-3 * t.images_per_second);
    assert_eq!(t.repetition_rates.len(), 3);
    let (lo, hi) = t.rate_spread();
    assert!(lo <= t.images_per_second && t.images_per_second <= hi);
}
