use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use rose::api::{router, AppState};
use rose::conduct::TrialStore;
use serde_json::{json, Value};
use std::process::Command;
use tower::ServiceExt;

struct Client {
    app: axum::Router,
    _dir: tempfile::TempDir,
}

impl Client {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::new(TrialStore::open(dir.path()).unwrap(), 2);
        Client {
            app: router(state),
            _dir: dir,
        }
    }

    async fn call(
        &self,
        method: &str,
        uri: &str,
        body: Option<String>,
    ) -> (StatusCode, Option<String>, String) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header(header::CONTENT_TYPE, "application/json");
        let req = req
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let location = resp
            .headers()
            .get(header::LOCATION)
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, location, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let (s, _, b) = self.call("POST", uri, Some(body.to_string())).await;
        (s, serde_json::from_str(&b).unwrap())
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, _, b) = self.call("GET", uri, None).await;
        (s, serde_json::from_str(&b).unwrap())
    }
}

fn t1_goal() -> Value {
    json!({"p_high": 0.3, "delta": 0.1, "alpha_low": 0.6, "alpha_high": 0.6})
}

#[tokio::test]
async fn design_endpoint() {
    let c = Client::new();
    let (s, v) = c.post("/v1/design", t1_goal()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["design"]["n_low"], 11);
    assert!((v["result"]["design"]["lambda"].as_f64().unwrap() - 0.052).abs() < 5e-4);
    assert_eq!(v["request"]["method"], "normal_approx");

    let mut exact = t1_goal();
    exact["omega"] = json!(0.5);
    exact["method"] = json!("exact");
    let (s, v) = c.post("/v1/design", exact).await;
    assert_eq!(s, StatusCode::OK);
    let d = &v["result"]["design"];
    assert_eq!(
        (d["n1_low"].as_u64(), d["n_low"].as_u64()),
        (Some(10), Some(19))
    );
    assert_eq!(v["request"]["lambda_step"], 0.002);
}

#[tokio::test]
async fn error_statuses() {
    let c = Client::new();
    let (s, v) = c
        .post(
            "/v1/design",
            json!({"p_high": 1.4, "delta": 0.1, "alpha_low": 0.6, "alpha_high": 0.6}),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["status"], 400);
    assert!(!v["errors"].as_array().unwrap().is_empty());
    let (s, _, body) = c.call("POST", "/v1/design", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body.contains("request body"));
    let mut unequal = t1_goal();
    unequal["ratio"] = json!(2.0);
    unequal["method"] = json!("exact");
    assert_eq!(
        c.post("/v1/design", unequal).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let hard = json!({"p_high": 0.5, "delta": 0.1, "alpha_low": 0.99, "alpha_high": 0.99, "method": "exact", "n_cap": 20});
    assert_eq!(
        c.post("/v1/design", hard).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(c.get("/v1/trials/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(c.get("/v1/jobs/nope").await.0, StatusCode::NOT_FOUND);
    let sim = json!({"design_request": t1_goal(), "n_reps": 100});
    assert_eq!(c.post("/v1/simulate", sim).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn trial_lifecycle() {
    let c = Client::new();
    let mut goal = t1_goal();
    goal["omega"] = json!(0.5);
    let (s, v) = c
        .post(
            "/v1/trials",
            json!({"trial_id": "h1", "design_request": goal}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["result"]["version"], 1);
    assert_eq!(
        c.post(
            "/v1/trials",
            json!({"trial_id": "h1", "design_request": goal})
        )
        .await
        .0,
        StatusCode::CONFLICT
    );

    // No data yet.
    let (s, _, _) = c.call("POST", "/v1/trials/h1/decision", None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let records = json!({"expected_version": 1, "records": [
        {"stage": "stage1", "arm": "low", "enrolled": 7, "responses": 2},
        {"stage": "stage1", "arm": "high", "enrolled": 7, "responses": 2}
    ]});
    let (s, v) = c.post("/v1/trials/h1/responses", records.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["version"], 2);
    assert_eq!(
        c.post("/v1/trials/h1/responses", records).await.0,
        StatusCode::CONFLICT
    );

    let (s, v) = c
        .post("/v1/trials/h1/decision", json!({"expected_version": 2}))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["decision"]["kind"], "continue_to_stage_two");
    let records = json!({"records": [
        {"stage": "stage2", "arm": "low", "enrolled": 6, "responses": 1},
        {"stage": "stage2", "arm": "high", "enrolled": 6, "responses": 3}
    ]});
    assert_eq!(
        c.post("/v1/trials/h1/responses", records).await.0,
        StatusCode::OK
    );
    let (s, v) = c
        .post("/v1/trials/h1/decision", json!({"analysis": "final"}))
        .await;
    assert_eq!(s, StatusCode::OK);
    // 5/13 - 3/13 = 0.154 > 0.074
    assert_eq!(v["result"]["decision"]["kind"], "select_high");
    let (s, v) = c.get("/v1/trials/h1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["status"], "closed");
    assert_eq!(v["result"]["decision_log"].as_array().unwrap().len(), 2);
    assert_eq!(
        c.post("/v1/trials/h1/decision", json!({})).await.0,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn simulation_jobs() {
    let c = Client::new();
    let body = json!({"design_request": t1_goal(), "seed": 5, "n_reps": 2000});
    let (s, sync) = c.post("/v1/simulate", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let (s, loc, text) = c
        .call("POST", "/v1/simulate?mode=async", Some(body.to_string()))
        .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let loc = loc.unwrap();
    let id: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(loc, format!("/v1/jobs/{}", id["job_id"].as_str().unwrap()));
    let mut done = Value::Null;
    for _ in 0..500 {
        let (s, v) = c.get(&loc).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] == "done" {
            done = v;
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    assert_eq!(done["result"], sync);
    let (s, _, _) = c
        .call("POST", "/v1/simulate?mode=later", Some(body.to_string()))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let sens = json!({"design_request": t1_goal(), "seed": 5, "n_reps": 500, "analysis": "p_high", "true_p_high_grid": [0.25, 0.35]});
    let (s, v) = c.post("/v1/sensitivity", sens).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["points"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn oc_endpoint() {
    let c = Client::new();
    let design = json!({"stages": "two", "goal": {"p_high": 0.3, "delta": 0.1, "alpha_low": 0.6, "alpha_high": 0.6, "ratio": 1.0, "omega": 0.5},
        "lambda1": 0.1, "lambda": 0.054, "n1_low": 10, "n1_high": 10, "n_low": 19, "n_high": 19, "omega": 0.5,
        "achieved_pcs_low": 0.6, "achieved_pcs_high": 0.6, "method": "exact"});
    let (s, v) = c
        .post(
            "/v1/oc/exact",
            json!({"design": design, "scenarios": [{"p_low": 0.2, "p_high": 0.3}]}),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let sc = &v["result"]["scenarios"][0];
    assert!((sc["prob_select_high"].as_f64().unwrap() - 0.61).abs() < 0.005);
    assert!((sc["pet"].as_f64().unwrap() - 0.40).abs() < 0.005);
    assert!((sc["en"].as_f64().unwrap() - 15.4).abs() < 0.05);
    let (s, _) = c
        .post(
            "/v1/oc/exact",
            json!({"design": design, "design_request": t1_goal()}),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cli_and_http_json_are_identical() {
    let c = Client::new();
    let (_, _, http) = c.call("POST", "/v1/design", Some(json!({"p_high": 0.4, "delta": 0.15, "alpha_low": 0.7, "alpha_high": 0.8, "omega": 0.5}).to_string())).await;
    let out = Command::new(env!("CARGO_BIN_EXE_rose"))
        .args([
            "design",
            "--p-high",
            "0.4",
            "--delta",
            "0.15",
            "--alpha-low",
            "0.7",
            "--alpha-high",
            "0.8",
            "--omega",
            "0.5",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), http);

    let (_, _, http) = c
        .call(
            "POST",
            "/v1/simulate",
            Some(json!({"design_request": t1_goal(), "seed": 9, "n_reps": 1500}).to_string()),
        )
        .await;
    let out = Command::new(env!("CARGO_BIN_EXE_rose"))
        .args([
            "simulate",
            "--p-high",
            "0.3",
            "--delta",
            "0.1",
            "--alpha-low",
            "0.6",
            "--alpha-high",
            "0.6",
            "--seed",
            "9",
            "--reps",
            "1500",
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), http);
}
