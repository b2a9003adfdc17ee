use axum::body::Body;
use axum::http::{Request, StatusCode};
use forge_core::geometry::{default_bank, AttachmentTable};
use forge_core::grammar::{Grammar, Lesions};
use forge_core::inference::{build_space, FitParams, HypothesisSpace, SpaceConfig, TrialView};
use forge_core::token::UniverseCache;
use forge_core::trials::Trial;
use forge_service::{router, AppState, Engine};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

const BANK: [&str; 4] = ["p1", "p2", "p4", "p6"];
const SEED: u64 = 5;

fn trial(exemplars: &[&str]) -> Trial {
    Trial {
        trial_id: "desk".into(),
        bank: BANK.iter().map(|s| s.to_string()).collect(),
        exemplars: exemplars.iter().map(|s| s.to_string()).collect(),
        test_items: vec![],
    }
}

fn engine(with_space: bool) -> Engine {
    let bank = Arc::new(default_bank());
    let table = Arc::new(AttachmentTable::build(&bank));
    let space = if with_space { desk_space(&bank, &table) } else { HypothesisSpace::default() };
    let mut e = Engine::new(bank, table, space, SEED);
    e.fresh_chains = 2;
    e.fresh_steps = 1500;
    e
}

fn desk_space(bank: &Arc<forge_core::geometry::PrimitiveBank>, table: &Arc<AttachmentTable>) -> HypothesisSpace {
    let cache = UniverseCache::new(bank.clone(), table.clone(), 2);
    let rt = trial(&["(p1p2)+1+180"]).resolve(&cache).unwrap();
    build_space(&Grammar::default(), bank, &[rt], &SpaceConfig { chains: 2, steps: 4000, top_k: 60, seed: SEED })
}

struct Client {
    app: axum::Router,
}

impl Client {
    fn new(e: Engine) -> Client {
        Client { app: router(AppState::new(e), &[]) }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn session(&self) -> String {
        let (s, v) = self.call("POST", "/sessions", Some(json!({ "bank": BANK }))).await;
        assert_eq!(s, StatusCode::CREATED);
        v["id"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn health_and_primitives() {
    let c = Client::new(engine(false));
    let (s, v) = c.call("GET", "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    let (s, v) = c.call("GET", "/primitives", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["primitives"].as_array().unwrap().len() >= 9);
    assert_eq!(v["primitives"][0]["name"], "p1");
}

#[tokio::test]
async fn session_crud_and_validation() {
    let c = Client::new(engine(false));
    let (s, _) = c.call("POST", "/sessions", Some(json!({ "bank": ["p1", "nope"] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = c.call("GET", "/sessions/zzz", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = c.call("POST", "/sessions/zzz/exemplars", Some(json!({ "token": "(p1)++0" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let id = c.session().await;
    let (s, v) = c.call("POST", &format!("/sessions/{id}/exemplars"), Some(json!({ "token": "(p1p2)+1+180" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["index"], 0);
    assert_eq!(v["canonical"], "(p1p2)+1+180");
    for bad in ["(p1p2)+99+0", "(p1p9)+1+0", "p1p2+1+0"] {
        let (s, v) = c.call("POST", &format!("/sessions/{id}/exemplars"), Some(json!({ "token": bad }))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}: {v}");
    }
    let (s, _) = c.call("DELETE", &format!("/sessions/{id}/exemplars/3"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = c.call("DELETE", &format!("/sessions/{id}/exemplars/0"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["exemplars"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn inference_needs_exemplars_and_viable_hypotheses() {
    let c = Client::new(engine(false));
    let id = c.session().await;
    for (path, body) in [("infer", json!({})), ("classify", json!({ "token": "(p1)++0" })), ("generate", json!({ "n": 2 }))] {
        let (s, v) = c.call("POST", &format!("/sessions/{id}/{path}"), Some(body)).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{path}: {v}");
    }
    c.call("POST", &format!("/sessions/{id}/exemplars"), Some(json!({ "token": "(p1p2)+1+180" }))).await;
    let (s, v) = c.call("POST", &format!("/sessions/{id}/infer"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(v["code"], "no_viable_hypothesis");
}

#[tokio::test]
async fn posterior_endpoints_match_the_engine() {
    let e = engine(true);
    // oracle: the same space and exemplar evaluated directly
    let cache = UniverseCache::new(e.bank.clone(), e.table.clone(), 2);
    let rt = trial(&["(p1p2)+1+180"]).resolve(&cache).unwrap();
    let view = TrialView::new(&e.space, &rt, &[]);
    let post = view.posterior::<f64>(&FitParams::default(), Lesions::NONE).unwrap();
    let (best, w) = post.ranked()[0];
    let map = e.space.entries()[view.rows[best].entry].sexpr.clone();

    let c = Client::new(e);
    let id = c.session().await;
    c.call("POST", &format!("/sessions/{id}/exemplars"), Some(json!({ "token": "(p1p2)+1+180" }))).await;
    let (s, v) = c.call("POST", &format!("/sessions/{id}/infer"), Some(json!({ "top": 5 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["seed"], SEED);
    assert_eq!(v["version"], forge_service::VERSION);
    let top = &v["hypotheses"][0];
    assert_eq!(top["program"], map);
    assert!((top["weight"].as_f64().unwrap() - w).abs() < 1e-12);
    let prog = map.as_str();
    // a single exemplar is generalized over orientation or attachment
    assert!(prog.starts_with("(rotate (") || prog.contains("(attach p1 p2)") || prog.contains("(attach p2 p1)"), "{prog}");
    let (_, sess) = c.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(sess["cached"], true);

    let (s, v) = c.call("POST", &format!("/sessions/{id}/classify"), Some(json!({ "token": "(p1p2)+1+180" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["probability"].as_f64().unwrap() >= FitParams::default().alpha);

    let (s, v) = c.call("POST", &format!("/sessions/{id}/generate"), Some(json!({ "n": 0 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["tokens"].as_array().unwrap().len(), 0);
    let (_, a) = c.call("POST", &format!("/sessions/{id}/generate"), Some(json!({ "n": 6, "seed": 3 }))).await;
    let (_, b) = c.call("POST", &format!("/sessions/{id}/generate"), Some(json!({ "n": 6, "seed": 3 }))).await;
    assert_eq!(a, b);
    assert_eq!(a["seed"], 3);
    for t in a["tokens"].as_array().unwrap() {
        assert!(t["logprob"].as_f64().unwrap() <= 0.0);
        let (s, _) = c.call("POST", &format!("/sessions/{id}/classify"), Some(json!({ "token": t["token"] }))).await;
        assert_eq!(s, StatusCode::OK);
    }

    let (_, v) = c.call("DELETE", &format!("/sessions/{id}/exemplars/0"), None).await;
    assert_eq!(v["cached"], false);
    let (s, _) = c.call("POST", &format!("/sessions/{id}/infer"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn fresh_chains_run_in_the_background() {
    let c = Client::new(engine(false));
    let id = c.session().await;
    c.call("POST", &format!("/sessions/{id}/exemplars"), Some(json!({ "token": "(p2p4)+1+90" }))).await;
    let (s, v) = c.call("POST", &format!("/sessions/{id}/infer"), Some(json!({ "fresh_mcmc": true }))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let url = v["status_url"].as_str().unwrap().to_string();
    let mut last = Value::Null;
    for _ in 0..600 {
        let (s, v) = c.call("GET", &url, None).await;
        assert_eq!(s, StatusCode::OK);
        last = v;
        if last["status"] != "running" {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    assert_eq!(last["status"], "done", "{last}");
    assert_eq!(last["chains_done"], 2);
    assert!(last["added"].as_u64().unwrap() > 0);
    let (s, v) = c.call("POST", &format!("/sessions/{id}/infer"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(!v["hypotheses"].as_array().unwrap().is_empty());
    let (s, _) = c.call("GET", &format!("/sessions/{id}/jobs/99"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn token_images_and_cors() {
    let c = Client::new(engine(false));
    let req = Request::builder()
        .uri("/tokens/(p1p2)+1+180/image")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = c.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    assert!(resp.headers().contains_key("access-control-allow-origin"));
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[1..4], b"PNG");
    let (s, _) = c.call("GET", "/tokens/(p1p2)+77+0/image", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
