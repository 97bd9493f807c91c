mod common;

use std::time::Duration;

use axum::http::StatusCode;
use serde_json::{json, Value};

use common::{app_for, call, call_json, fixture_dir, new_session, small_opts, wait_results};
use prime::server::ServerConfig;
use prime_core::features::prune_collinear;
use prime_core::workflow::{score, FilterParams, InputPaths, Inputs};

fn full_years() -> String {
    let o = small_opts();
    json!({ "start_year": o.start_year, "end_year": o.end_year }).to_string()
}

#[tokio::test]
async fn sessions_are_created_with_distinct_ids() {
    let dir = fixture_dir();
    let app = app_for(dir.path(), ServerConfig::default());
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    let (status, body) = call_json(&app, "POST", "/sessions", Some(r#"{"label": "tab 2"}"#)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"], "created");
    assert_eq!(body["label"], "tab 2");
    let (status, body) = call_json(&app, "POST", "/sessions", Some("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "malformed");
}

#[tokio::test]
async fn filter_returns_layers_and_validates() {
    let dir = fixture_dir();
    let app = app_for(dir.path(), ServerConfig::default());
    let id = new_session(&app).await;

    let (status, body) = call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["state"], "scored");
    let layers = body["layers"].as_object().unwrap();
    assert_eq!(layers.len(), 3);
    for kind in ["vulnerability", "adaptability", "resilience"] {
        let url = layers[kind].as_str().unwrap();
        let (status, geo) = call_json(&app, "GET", url, None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(geo["type"], "FeatureCollection");
        assert_eq!(geo["layer"]["hidden_by_default"], true);
        let props = &geo["features"][0]["properties"];
        for key in ["name", "vulnerability", "adaptability", "resilience"] {
            assert!(!props[key].is_null(), "{key}");
        }
        let stats = &body["statistics"][kind];
        assert!(stats["min"].as_f64().unwrap() <= stats["mean"].as_f64().unwrap());
    }
    let (status, csv) = call(&app, "GET", &format!("/sessions/{id}/scores.csv"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 40 * 7);

    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/filter"),
        Some(r#"{"start_year": 1990, "end_year": 2010}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "years");

    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/filter"),
        Some(r#"{"start_year": 2008, "end_year": 2006}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "years");

    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/filter"),
        Some(r#"{"start_year": 2004, "end_year": 2010, "hazard_types": ["Meteor"]}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "hazard_types");

    let (status, body) = call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(r#"{"end_year": 2010}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "start_year");

    let (status, _) = call_json(&app, "POST", "/sessions/nope/filter", Some(&full_years())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn correlation_requires_filter() {
    let dir = fixture_dir();
    let app = app_for(dir.path(), ServerConfig::default());
    let id = new_session(&app).await;
    let (status, _) = call_json(&app, "GET", &format!("/sessions/{id}/correlation"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    let (status, body) = call_json(&app, "GET", &format!("/sessions/{id}/correlation"), None).await;
    assert_eq!(status, StatusCode::OK);
    let values = body["matrix"]["values"].as_array().unwrap();
    let n = values.len();
    assert_eq!(body["retained"].as_array().unwrap().len(), n);
    for i in 0..n {
        for j in 0..n {
            assert_eq!(values[i][j], values[j][i]);
        }
    }
}

#[tokio::test]
async fn prune_matches_library_and_validates_names() {
    let dir = fixture_dir();
    let app = app_for(dir.path(), ServerConfig::default());
    let id = new_session(&app).await;
    let (status, _) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/prune"),
        Some(r#"{"mode": "threshold", "threshold": 0.7}"#),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;

    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/prune"),
        Some(r#"{"mode": "threshold", "threshold": 0.7}"#),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let inputs = Inputs::load(&InputPaths::in_dir(dir.path())).unwrap();
    let o = small_opts();
    let stage = score(&inputs, &FilterParams::years(o.start_year, o.end_year)).unwrap();
    let (_, expected) = prune_collinear(&stage.dataset, 0.7, &[]).unwrap();
    assert_eq!(body, serde_json::to_value(&expected).unwrap());

    let (_, corr) = call_json(&app, "GET", &format!("/sessions/{id}/correlation"), None).await;
    assert_eq!(corr["retained"], body["retained"]);
    assert_eq!(corr["removed"], body["removed"]);

    let all = stage.dataset.feature_names.len();
    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/prune"),
        Some(r#"{"mode": "manual", "names": ["median_rent"]}"#),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["retained"].as_array().unwrap().len(), all - 1);

    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/prune"),
        Some(r#"{"mode": "manual", "names": ["not_a_variable"]}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "names");
}

#[tokio::test(flavor = "multi_thread")]
async fn train_polls_results_and_refilter_invalidates() {
    let dir = fixture_dir();
    let app = app_for(dir.path(), ServerConfig::default());
    let id = new_session(&app).await;
    let train_body = r#"{"families": ["linear"], "seed": 3}"#;

    let (status, _) = call_json(&app, "POST", &format!("/sessions/{id}/train"), Some(train_body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call_json(&app, "GET", &format!("/sessions/{id}/results"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    let (status, body) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/train"),
        Some(r#"{"families": ["linear"], "split_fraction": 1.5}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "split_fraction");

    let (status, handle) = call_json(&app, "POST", &format!("/sessions/{id}/train"), Some(train_body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (status, body) = wait_results(&app, &id).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let groups = body["metrics"]["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 3);
    for row in groups.iter().flat_map(|g| g["rows"].as_array().unwrap()) {
        let mse = row["mse"].as_f64().unwrap();
        let rmse = row["rmse"].as_f64().unwrap();
        assert!((rmse * rmse - mse).abs() <= 1e-12 * mse.max(f64::MIN_POSITIVE));
    }
    assert_eq!(body["causal"]["status"], "not run");

    // A repeated submit hands back the same job.
    let (status, again) = call_json(&app, "POST", &format!("/sessions/{id}/train"), Some(train_body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["job_id"], handle["job_id"]);

    let (status, text) = call(&app, "GET", &format!("/sessions/{id}/results/metrics.txt"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(text).unwrap().contains("Linear Regression | "));
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/results/nothing.json"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, info) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(info["state"], "trained");

    let (status, body) = call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "scored");
    let (status, _) = call_json(&app, "GET", &format!("/sessions/{id}/results"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, info) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(info["state"], "scored");
    assert_eq!(info["job"], Value::Null);
}

#[tokio::test(flavor = "multi_thread")]
async fn mutations_wait_for_running_training() {
    let dir = fixture_dir();
    let spill = tempfile::tempdir().unwrap();
    let config = ServerConfig {
        spill_dir: Some(spill.path().to_owned()),
        ..Default::default()
    };
    let app = app_for(dir.path(), config);
    let id = new_session(&app).await;
    call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    let body = r#"{"families": ["linear"], "targets": ["resilience"], "run_causal": true, "causal_replicates": 30}"#;
    let (status, handle) = call_json(&app, "POST", &format!("/sessions/{id}/train"), Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);

    let (status, err) = call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["message"], "step in progress");
    let (status, again) = call_json(&app, "POST", &format!("/sessions/{id}/train"), Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(again["job_id"], handle["job_id"]);
    // Reads are still served.
    let (status, _) = call_json(&app, "GET", &format!("/sessions/{id}/correlation"), None).await;
    assert_eq!(status, StatusCode::OK);

    let (status, results) = wait_results(&app, &id).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(results["causal"]["status"], "complete");
    let (status, dot) = call(&app, "GET", &format!("/sessions/{id}/results/dag/resilience.dot"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(dot).unwrap().starts_with("digraph"));
    let job = handle["job_id"].as_str().unwrap();
    assert!(spill.path().join(&id).join(job).join("metrics.json").exists());
}

#[tokio::test]
async fn expired_sessions_are_gone() {
    let dir = fixture_dir();
    let config = ServerConfig {
        ttl: Duration::ZERO,
        ..Default::default()
    };
    let app = app_for(dir.path(), config);
    let id = new_session(&app).await;
    let (status, body) = call_json(&app, "POST", &format!("/sessions/{id}/filter"), Some(&full_years())).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(body["error"], "expired");
    let (status, _) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::GONE);
}

#[tokio::test]
async fn dataset_info_and_static_files() {
    let dir = fixture_dir();
    let www = tempfile::tempdir().unwrap();
    std::fs::write(www.path().join("index.html"), "<!doctype html><title>t</title>").unwrap();
    let config = ServerConfig {
        static_dir: Some(www.path().to_owned()),
        ..Default::default()
    };
    let app = app_for(dir.path(), config);
    let (status, info) = call_json(&app, "GET", "/dataset", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["coverage"], json!([2004, 2010]));
    assert_eq!(info["regions"], 40);
    let (status, page) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(page).unwrap().contains("<title>t</title>"));
}
