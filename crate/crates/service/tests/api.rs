use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use fairlens::data::emit_csv_bytes;
use fairlens::data::report::canonical_json;
use fairlens::data::synthetic::{generate_synthetic, GroupSpec, SyntheticSpec};
use fairlens::feasibility::{scenario, scenarios_to_records};
use fairlens::GroupedOutcomes;
use fairlens_service::{app, ServiceConfig};

fn fresh() -> Router {
    app(&ServiceConfig::default()).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

/// Tables 2 and 3 as scored records: predicted failures score .9, predicted successes .1.
fn t23_scored() -> Vec<u8> {
    let mut d = scenarios_to_records(&[scenario("females_t2").unwrap(), scenario("males_t3").unwrap()]).unwrap();
    for r in &mut d.records {
        r.score = Some(if r.yhat.unwrap() { 0.9 } else { 0.1 });
        r.yhat = None;
    }
    emit_csv_bytes(&d).unwrap()
}

fn synthetic9() -> Vec<u8> {
    let d: GroupedOutcomes = generate_synthetic(&SyntheticSpec::new(
        9,
        vec![GroupSpec::new("black", 2000, 0.11, 1.2), GroupSpec::new("white", 1000, 0.06, 0.8)],
    ))
    .unwrap();
    emit_csv_bytes(&d).unwrap()
}

async fn upload(app: &Router, csv: Vec<u8>) -> String {
    let (s, v) = call(app, "POST", "/datasets", csv).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["dataset_id"].as_str().unwrap().to_string()
}

fn group<'a>(report: &'a Value, g: &str) -> &'a Value {
    &report["groups"][g]["quantities"]
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()
}

#[tokio::test]
async fn health_lists_datasets() {
    let app = fresh();
    let (s, v) = call(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["datasets"], json!([]));
    upload(&app, t23_scored()).await;
    let (_, v) = call(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(v["datasets"].as_array().unwrap().len(), 1);
    let (s, _) = call(&app, "GET", "/nope/here", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn upload_is_content_addressed() {
    let app = fresh();
    let a = upload(&app, t23_scored()).await;
    let b = upload(&app, t23_scored()).await;
    assert_eq!(a, b);
    assert_eq!(a, fairlens::data::dataset_hash(&t23_scored()));
}

#[tokio::test]
async fn upload_rejections() {
    let app = fresh();
    let (s, v) = call(&app, "POST", "/datasets", "id,group,y,yhat\na,g,1,1\nb,g,7,0\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["issues"][0]["line"], 3);
    assert_eq!(v["issues"][0]["column"], "y");
    let (s, _) = call(&app, "POST", "/datasets", Body::empty()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_thresholds_reproduce_printed_margins() {
    let app = fresh();
    let id = upload(&app, t23_scored()).await;
    let body = json!({"thresholds": {"female": 0.5, "male": 0.5}}).to_string();
    let (s, r) = call(&app, "POST", &format!("/datasets/{id}/whatif"), body).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(r["schema"], "fairlens-report/1");
    let m = group(&r, "male");
    assert_eq!(m["fnr"], 0.4);
    assert_eq!(m["fail_pred_error"], 0.25);
    assert_eq!(m["success_pred_error"], 0.571429);
    assert_eq!(m["pred_success_share"], 0.466667);
    assert_eq!(group(&r, "female")["fnr"], 0.4);
    assert_eq!(check(&r, "treatment_equality")["satisfied"], false);
    assert_eq!(check(&r, "conditional_procedure_accuracy_equality")["satisfied"], true);
    assert_eq!(r["metadata"]["dataset_hash"], id.as_str());
}

#[tokio::test]
async fn whatif_cost_ratio_sets_common_threshold() {
    let app = fresh();
    let id = upload(&app, synthetic9()).await;
    let uri = format!("/datasets/{id}/whatif");
    let (s, r) = call(&app, "POST", &uri, json!({"cost_ratio": 2.0}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    let th = &r["metadata"]["threshold_policy"]["per_group_threshold"];
    assert_eq!(th["black"], 0.333333);
    assert_eq!(th["white"], 0.333333);
    let explicit = json!({"thresholds": {"black": 1.0 / 3.0, "white": 1.0 / 3.0}}).to_string();
    let (_, e) = call(&app, "POST", &uri, explicit).await;
    assert_eq!(e["groups"], r["groups"]);
    assert_eq!(e["checks"], r["checks"]);
}

#[tokio::test]
async fn whatif_mixing_modes() {
    let app = fresh();
    let id = upload(&app, synthetic9()).await;
    let uri = format!("/datasets/{id}/whatif");
    let (s, r) = call(&app, "POST", &uri, json!({"equalize": "equalized_odds"}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(check(&r, "conditional_procedure_accuracy_equality")["satisfied"], true);
    let policy = r["metadata"]["mixing_policy"].clone();
    assert_eq!(policy["groups"].as_array().unwrap().len(), 2);
    let (s, again) = call(&app, "POST", &uri, json!({"mixing_policy": policy}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{again}");
    assert_eq!(again["groups"], r["groups"]);
    let bad = json!({"mixing_policy": {"groups": [
        {"group": "black", "p0": 0.0, "p1": 1.0},
        {"group": "white", "p0": 0.0, "p1": 1.0},
        {"group": "martian", "p0": 0.0, "p1": 1.0}
    ]}});
    let (s, _) = call(&app, "POST", &uri, bad.to_string()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn whatif_errors() {
    let app = fresh();
    let id = upload(&app, t23_scored()).await;
    let uri = format!("/datasets/{id}/whatif");
    let cases = [
        json!({"thresholds": {"female": 0.5, "male": 0.5, "other": 0.5}}),
        json!({"thresholds": {"female": 0.5}}),
        json!({"thresholds": {"female": 0.5, "male": 0.5}, "cost_ratio": 1.0}),
        json!({}),
        json!({"cost_ratio": -1.0}),
        json!({"thresholds": {"female": 1.5, "male": 0.5}}),
        json!({"bogus": 1}),
    ];
    for body in cases {
        let (s, v) = call(&app, "POST", &uri, body.to_string()).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
        assert!(v["error"].is_string());
    }
    let (s, _) = call(&app, "POST", "/datasets/deadbeef/whatif", json!({"cost_ratio": 1.0}).to_string()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn frontier_endpoints() {
    let app = fresh();
    let id = upload(&app, synthetic9()).await;
    let (s, v) = call(&app, "GET", &format!("/datasets/{id}/frontier?group=black&grid=2"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["threshold"].as_f64().unwrap(), 0.0);
    assert_eq!(rows[1]["threshold"].as_f64().unwrap(), 1.0 + f64::EPSILON);

    let (_, v) = call(&app, "GET", &format!("/datasets/{id}/frontier?group=black&grid=101"), Body::empty()).await;
    let share: Vec<f64> = v["rows"].as_array().unwrap().iter().map(|r| r["pred_fail_share"].as_f64().unwrap()).collect();
    assert_eq!(share.len(), 101);
    assert!(share.windows(2).all(|w| w[1] <= w[0]));

    // the grid=3 midpoint is .5 for every group, the same as a what-if at .5
    let (_, v) = call(&app, "GET", &format!("/datasets/{id}/frontier?group=white&grid=3"), Body::empty()).await;
    let mid = canonical_json(v["rows"][1].clone());
    assert_eq!(mid["threshold"], 0.5);
    let body = json!({"thresholds": {"black": 0.5, "white": 0.5}}).to_string();
    let (_, r) = call(&app, "POST", &format!("/datasets/{id}/whatif"), body).await;
    assert_eq!(mid["table"], r["groups"]["white"]["table"]);
    for key in ["fnr", "fpr", "pred_fail_share", "fail_pred_error", "success_pred_error", "base_rate_fail"] {
        assert_eq!(mid[key], group(&r, "white")[key], "{key}");
    }
    for c in r["checks"].as_array().unwrap() {
        let name = c["name"].as_str().unwrap();
        assert_eq!(mid["disparities"][name], c["max_abs_disparity"], "{name}");
    }
}

#[tokio::test]
async fn frontier_errors() {
    let app = fresh();
    let unscored = emit_csv_bytes(&scenarios_to_records(&[scenario("females_t2").unwrap(), scenario("males_t3").unwrap()]).unwrap()).unwrap();
    let id = upload(&app, unscored).await;
    let (s, _) = call(&app, "GET", &format!("/datasets/{id}/frontier?group=male&grid=5"), Body::empty()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let id = upload(&app, synthetic9()).await;
    let (s, _) = call(&app, "GET", &format!("/datasets/{id}/frontier?group=nobody"), Body::empty()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = call(&app, "GET", "/datasets/abc/frontier?group=black", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn scenario_catalog() {
    let app = fresh();
    let (s, v) = call(&app, "GET", "/scenarios", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 15);
    let (s, v) = call(&app, "GET", "/scenarios/separation_m_t9", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let q = &v["groups"]["male"]["quantities"];
    assert_eq!(q["overall_error"], 0.0);
    assert_eq!(q["fnr"], 0.0);
    assert_eq!(q["fpr"], 0.0);
    assert_eq!(q["fail_pred_error"], 0.0);
    assert_eq!(q["success_pred_error"], 0.0);
    let (s, v) = call(&app, "GET", "/scenarios/nonexistent", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("females_t2"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_replays_are_identical() {
    let app = fresh();
    let id = upload(&app, synthetic9()).await;
    let uri = format!("/datasets/{id}/whatif");
    let body = json!({"thresholds": {"black": 0.42, "white": 0.61}, "tol": 0.02}).to_string();
    let mut handles = Vec::new();
    for _ in 0..50 {
        let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
        handles.push(tokio::spawn(async move {
            let req = Request::builder().method("POST").uri(uri).body(Body::from(body)).unwrap();
            let resp = app.oneshot(req).await.unwrap();
            resp.into_body().collect().await.unwrap().to_bytes()
        }));
    }
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    let fresh_app = fresh();
    upload(&fresh_app, synthetic9()).await;
    let req = Request::builder().method("POST").uri(&uri).body(Body::from(body)).unwrap();
    let other = fresh_app.oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
    assert_eq!(other, bodies[0]);
}

#[tokio::test]
async fn persisted_datasets_reload() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        permissive_cors: true,
    };
    let id = upload(&app(&config).unwrap(), t23_scored()).await;
    assert!(dir.path().join(format!("{id}.csv")).exists());
    std::fs::write(dir.path().join("junk.csv"), "not,a,dataset\n").unwrap();
    let (_, v) = call(&app(&config).unwrap(), "GET", "/health", Body::empty()).await;
    assert_eq!(v["datasets"], json!([id]));
}

#[tokio::test]
async fn serves_over_tcp() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, fresh()).await.unwrap() });
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"GET /health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).await.unwrap();
    assert!(text.starts_with("HTTP/1.1 200"), "{text}");
    assert!(text.contains("\"status\":\"ok\""));
}
