//! REST facade over the induction engine.
//!
//! The engine core (bank, attachment table, precomputed hypothesis space and
//! fitted parameters) is shared read-only. Each session owns its exemplar
//! list, any hypotheses found by its own background chains, and a posterior
//! cache that is dropped whenever either changes.

mod error;
mod session;

pub use error::ApiError;
pub use session::{Job, JobStatus, Session};

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use dashmap::DashMap;
use forge_core::geometry::{render_canvas, AttachmentTable, PrimitiveBank, Rgb};
use forge_core::grammar::Grammar;
use forge_core::inference::{FitParams, HypothesisSpace};
use forge_core::token::{parse_token, UniverseCache};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const IMAGE_PX: usize = 80;

/// Immutable engine state shared by every session.
pub struct Engine {
    pub bank: Arc<PrimitiveBank>,
    pub table: Arc<AttachmentTable>,
    pub cache: UniverseCache,
    pub space: Arc<HypothesisSpace>,
    /// Named parameter sets a session can select; must contain `"default"`.
    pub params: BTreeMap<String, FitParams>,
    pub grammar: Grammar,
    pub seed: u64,
    /// Chain settings for `fresh_mcmc` requests.
    pub fresh_chains: usize,
    pub fresh_steps: usize,
    pub fresh_top_k: usize,
}

impl Engine {
    pub fn new(bank: Arc<PrimitiveBank>, table: Arc<AttachmentTable>, space: HypothesisSpace, seed: u64) -> Engine {
        Engine {
            cache: UniverseCache::new(bank.clone(), table.clone(), 16),
            bank,
            table,
            space: Arc::new(space),
            params: BTreeMap::from([("default".to_string(), FitParams::default())]),
            grammar: Grammar::default(),
            seed,
            fresh_chains: 3,
            fresh_steps: 20_000,
            fresh_top_k: 200,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub sessions: Arc<DashMap<String, Arc<RwLock<Session>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(engine: Engine) -> AppState {
        AppState { engine: Arc::new(engine), sessions: Arc::new(DashMap::new()), next_id: Arc::new(AtomicU64::new(1)) }
    }

    fn session(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        self.sessions.get(id).map(|s| s.clone()).ok_or_else(|| ApiError::NotFound(format!("session {id}")))
    }
}

/// All routes, with CORS open to `origins` (any origin when empty).
pub fn router(state: AppState, origins: &[String]) -> Router {
    let cors = if origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
        CorsLayer::new().allow_origin(AllowOrigin::list(list))
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/primitives", get(primitives))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/exemplars", post(add_exemplar))
        .route("/sessions/{id}/exemplars/{i}", delete(delete_exemplar))
        .route("/sessions/{id}/infer", post(infer))
        .route("/sessions/{id}/jobs/{job}", get(job_status))
        .route("/sessions/{id}/classify", post(classify))
        .route("/sessions/{id}/generate", post(generate))
        .route("/tokens/{token}/image", get(token_image))
        .layer(cors)
        .with_state(state)
}

type ApiResult<T> = Result<T, ApiError>;

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok", "version": VERSION }))
}

#[derive(Serialize)]
struct PrimitiveInfo {
    name: String,
    color: Rgb,
    triangles: usize,
}

async fn primitives(State(st): State<AppState>) -> Json<Value> {
    let bank = &st.engine.bank;
    let list: Vec<PrimitiveInfo> = bank
        .ids()
        .map(|p| PrimitiveInfo { name: bank.name(p).to_string(), color: bank.color(p), triangles: bank.get(p).wedges().len() })
        .collect();
    Json(json!({ "primitives": list, "version": VERSION }))
}

#[derive(Deserialize)]
struct NewSession {
    bank: Vec<String>,
    #[serde(default)]
    params: Option<String>,
}

async fn create_session(State(st): State<AppState>, Json(req): Json<NewSession>) -> ApiResult<(StatusCode, Json<Value>)> {
    let params_name = req.params.unwrap_or_else(|| "default".to_string());
    let params = *st
        .engine
        .params
        .get(&params_name)
        .ok_or_else(|| ApiError::BadRequest(format!("unknown parameter set {params_name:?}")))?;
    let prims = req
        .bank
        .iter()
        .map(|n| st.engine.bank.resolve(n).map_err(|e| ApiError::BadRequest(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if prims.is_empty() {
        return Err(ApiError::BadRequest("a session needs at least one primitive".into()));
    }
    let universe = st.engine.cache.get(&prims).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let id = format!("s{}", st.next_id.fetch_add(1, Ordering::Relaxed));
    let s = Session::new(id.clone(), req.bank, universe, params_name, params);
    let body = s.describe();
    st.sessions.insert(id, Arc::new(RwLock::new(s)));
    Ok((StatusCode::CREATED, Json(body)))
}

fn read(s: &RwLock<Session>) -> std::sync::RwLockReadGuard<'_, Session> {
    s.read().unwrap_or_else(|e| e.into_inner())
}

fn write(s: &RwLock<Session>) -> std::sync::RwLockWriteGuard<'_, Session> {
    s.write().unwrap_or_else(|e| e.into_inner())
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let body = read(&s).describe();
    Ok(Json(body))
}

#[derive(Deserialize)]
struct TokenReq {
    token: String,
}

async fn add_exemplar(State(st): State<AppState>, Path(id): Path<String>, Json(req): Json<TokenReq>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let mut s = write(&s);
    let (index, canonical) = s.add_exemplar(&req.token, &st.engine)?;
    Ok(Json(json!({ "index": index, "canonical": canonical, "session": s.describe() })))
}

async fn delete_exemplar(State(st): State<AppState>, Path((id, i)): Path<(String, usize)>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let mut s = write(&s);
    s.remove_exemplar(i)?;
    Ok(Json(s.describe()))
}

#[derive(Deserialize, Default)]
struct InferReq {
    #[serde(default)]
    top: Option<usize>,
    #[serde(default)]
    fresh_mcmc: bool,
}

async fn infer(State(st): State<AppState>, Path(id): Path<String>, body: Option<Json<InferReq>>) -> ApiResult<Response> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let s = st.session(&id)?;
    if req.fresh_mcmc {
        let job = session::start_job(s, st.engine.clone())?;
        let url = format!("/sessions/{id}/jobs/{job}");
        return Ok((StatusCode::ACCEPTED, Json(json!({ "job": job, "status_url": url, "version": VERSION })))
            .into_response());
    }
    let engine = st.engine.clone();
    let top = req.top.unwrap_or(10);
    let body = tokio::task::spawn_blocking(move || -> ApiResult<Value> {
        let cached = write(&s).posterior(&engine)?;
        let hyps: Vec<Value> = cached
            .post
            .ranked()
            .into_iter()
            .take(top)
            .map(|(i, w)| {
                let row = &cached.view.rows[i];
                json!({ "program": cached.space.entries()[row.entry].sexpr, "weight": w, "size": row.size })
            })
            .collect();
        Ok(json!({
            "hypotheses": hyps,
            "considered": cached.view.rows.len(),
            "revision": cached.revision,
            "version": VERSION,
            "seed": engine.seed,
        }))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(body).into_response())
}

async fn job_status(State(st): State<AppState>, Path((id, job)): Path<(String, u64)>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let j = read(&s).jobs.get(&job).cloned().ok_or_else(|| ApiError::NotFound(format!("job {job}")))?;
    Ok(Json(j.describe()))
}

async fn classify(State(st): State<AppState>, Path(id): Path<String>, Json(req): Json<TokenReq>) -> ApiResult<Json<Value>> {
    let s = st.session(&id)?;
    let engine = st.engine.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = write(&s);
        let y = s.lookup(&req.token, &engine)?;
        let cached = s.posterior(&engine)?;
        let p = cached.post.classify(&cached.view, y, s.params.alpha, s.params.beta);
        Ok(Json(json!({
            "token": cached.view.universe.string(y),
            "probability": p,
            "revision": cached.revision,
            "version": VERSION,
            "seed": engine.seed,
        })))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Deserialize)]
struct GenerateReq {
    n: usize,
    #[serde(default)]
    seed: Option<u64>,
}

const MAX_GENERATE: usize = 10_000;

async fn generate(State(st): State<AppState>, Path(id): Path<String>, Json(req): Json<GenerateReq>) -> ApiResult<Json<Value>> {
    if req.n > MAX_GENERATE {
        return Err(ApiError::BadRequest(format!("n is capped at {MAX_GENERATE}")));
    }
    let s = st.session(&id)?;
    let engine = st.engine.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = write(&s);
        let seed = req.seed.unwrap_or(engine.seed);
        let cached = s.posterior(&engine)?;
        let alpha = s.params.alpha;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens: Vec<Value> = (0..req.n)
            .map(|_| {
                let y = cached.post.sample_predictive(&cached.view, alpha, &mut rng);
                json!({
                    "token": cached.view.universe.string(y),
                    "logprob": cached.post.predictive_logprob(&cached.view, y, alpha),
                })
            })
            .collect();
        Ok(Json(json!({ "tokens": tokens, "revision": cached.revision, "version": VERSION, "seed": seed })))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn token_image(State(st): State<AppState>, Path(token): Path<String>) -> ApiResult<Response> {
    let e = &st.engine;
    let t = parse_token(&token, &e.bank, &e.table).map_err(|err| ApiError::BadRequest(err.to_string()))?;
    let palette: Vec<Rgb> = e.bank.ids().map(|p| e.bank.color(p)).collect();
    let r = render_canvas(&t.cells, &palette, IMAGE_PX).map_err(|err| ApiError::BadRequest(err.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], r.to_png()).into_response())
}
