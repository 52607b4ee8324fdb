//! JSON-over-HTTP session API, versioned under `/v1`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use advice_core::data::{Dataset, Example, Split};
use advice_core::lang::{oov_fraction, render_corrective, render_restrictive, AdviceKind, AdviceSentence, NamedRegion};
use advice_core::protocols::{AdvisorEvent, Input, ProtocolError, ProtocolKind, Session, SessionExample};
use advice_core::world::{Direction, Head, Quadrant};
use advice_core::{Error, Rng};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::registry::ModelRegistry;
use crate::store::{SessionStore, StoredResponse};

/// Above this fraction of unknown words, advice text is rejected.
pub const MAX_OOV: f64 = 0.5;

pub struct AppState {
    pub registry: Arc<ModelRegistry>,
    pub data: Arc<Dataset>,
    pub store: SessionStore,
    /// Draws random examples and session seeds; seeded from `--seed`.
    rng: Mutex<Rng>,
}

impl AppState {
    pub fn new(registry: Arc<ModelRegistry>, data: Arc<Dataset>, store: SessionStore, seed: u64) -> Self {
        Self {
            registry,
            data,
            store,
            rng: Mutex::new(Rng::named(seed, "service")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Vec<String>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            expected: None,
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn illegal(e: &ProtocolError) -> Self {
        Self {
            expected: Some(e.expected.clone()),
            ..Self::new(StatusCode::CONFLICT, "illegal_event", e.message.clone())
        }
    }

    fn body(&self) -> Value {
        serde_json::to_value(self).expect("error bodies serialize")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Protocol(p) => ApiError::illegal(&p),
            Error::MissingModel(m) => ApiError::not_found(format!("model not loaded: {m}")),
            Error::Lang(l) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "untokenizable_advice", l.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type Reply = Result<(StatusCode, Value), ApiError>;

/// Session JSON plus the inputs it will accept next.
#[derive(Serialize)]
struct SessionView<'a> {
    #[serde(flatten)]
    session: &'a Session,
    expected: Vec<&'static str>,
}

fn view(s: &Session) -> Value {
    serde_json::to_value(SessionView {
        session: s,
        expected: s.expected(),
    })
    .expect("sessions serialize")
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/advice", post(advice))
        .route("/v1/sessions/{id}/retry", post(retry))
        .route("/v1/sessions/{id}/accept", post(accept))
        .route("/v1/models", get(models))
        .route("/v1/examples/{id}", get(example))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn idempotency_key(headers: &HeaderMap, scope: &str) -> Result<Option<String>, ApiError> {
    match headers.get("idempotency-key") {
        None => Ok(None),
        Some(v) => {
            let k = v
                .to_str()
                .map_err(|_| ApiError::bad_request("Idempotency-Key must be visible ASCII"))?;
            if k.is_empty() || k.len() > 255 {
                return Err(ApiError::bad_request("Idempotency-Key must be 1-255 characters"));
            }
            Ok(Some(format!("{scope}\u{0}{k}")))
        }
    }
}

fn respond(r: Reply) -> Response {
    match r {
        Ok((status, body)) => (status, Json(body)).into_response(),
        Err(e) => e.into_response(),
    }
}

fn stored(r: &Reply) -> StoredResponse {
    match r {
        Ok((s, b)) => StoredResponse {
            status: s.as_u16(),
            body: b.clone(),
        },
        Err(e) => StoredResponse {
            status: e.status,
            body: e.body(),
        },
    }
}

fn replayed(s: StoredResponse) -> Response {
    let status = StatusCode::from_u16(s.status).unwrap_or(StatusCode::OK);
    (status, Json(s.body)).into_response()
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    protocol: Option<ProtocolKind>,
    example_id: Option<String>,
    #[serde(default)]
    random: bool,
    /// Role → model id the caller expects the session to use.
    #[serde(default)]
    models: BTreeMap<String, String>,
    seed: Option<u64>,
}

async fn create_session(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let key = match idempotency_key(&headers, "POST /v1/sessions") {
        Ok(k) => k,
        Err(e) => return e.into_response(),
    };
    let Some(key) = key else {
        return respond(do_create(&st, &body));
    };
    let _guard = st.store.create_guard();
    if let Some(r) = st.store.remembered(&key) {
        return replayed(r);
    }
    let r = do_create(&st, &body);
    st.store.remember(key, stored(&r));
    respond(r)
}

fn do_create(st: &AppState, body: &Bytes) -> Reply {
    let req: CreateRequest = parse_body(body)?;
    let protocol = req
        .protocol
        .ok_or_else(|| ApiError::bad_request("protocol is required"))?;
    let models = st.registry.models();
    let ids = models.ids_for(protocol);
    for (role, id) in &req.models {
        if st.registry.get(id).is_none() {
            return Err(ApiError::not_found(format!("unknown model {id}")));
        }
        if ids.get(role) != Some(id) {
            return Err(ApiError::not_found(format!("model {id} is not the {role} of a {protocol} session")));
        }
    }
    models.check(protocol)?;
    let (example, draw_seed) = {
        let mut rng = st.rng.lock().unwrap_or_else(|e| e.into_inner());
        let ex = match (&req.example_id, req.random) {
            (Some(_), true) => return Err(ApiError::bad_request("give example_id or random, not both")),
            (Some(id), false) if id != "random" => st
                .data
                .find(id)
                .map(|(_, e)| e.clone())
                .ok_or_else(|| ApiError::not_found(format!("unknown example {id}")))?,
            _ => {
                let pool = if st.data.test.is_empty() { &st.data.train } else { &st.data.test };
                rng.choose(pool)
                    .cloned()
                    .ok_or_else(|| ApiError::not_found("dataset has no examples"))?
            }
        };
        (ex, rng.next_u64())
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = req.seed.unwrap_or(draw_seed);
    let session = Session::new(id.clone(), protocol, SessionExample::from(&example), models, seed);
    let s = st.store.create(session, models)?;
    Ok((
        StatusCode::CREATED,
        json!({
            "session_id": id,
            "board": s.example.world,
            "prediction": s.current(),
            "session": view(&s),
        }),
    ))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.store.snapshot(&id) {
        Some(s) => (StatusCode::OK, Json(view(&s))).into_response(),
        None => ApiError::not_found(format!("unknown session {id}")).into_response(),
    }
}

/// Runs one feedback transition with session locking and idempotency.
fn transition(
    st: &AppState,
    id: &str,
    action: &str,
    headers: &HeaderMap,
    events: impl FnOnce(&Session) -> Result<Vec<AdvisorEvent>, ApiError>,
) -> Response {
    let key = match idempotency_key(headers, &format!("POST /v1/sessions/{id}/{action}")) {
        Ok(k) => k,
        Err(e) => return e.into_response(),
    };
    let Some(cell) = st.store.get(id) else {
        return ApiError::not_found(format!("unknown session {id}")).into_response();
    };
    let mut guard = cell.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(k) = &key {
        if let Some(r) = st.store.remembered(k) {
            return replayed(r);
        }
    }
    let r: Reply = (|| {
        let evs = events(&guard)?;
        let s = st.store.apply_locked(&mut guard, Input::Feedback(evs), st.registry.models())?;
        Ok((
            StatusCode::OK,
            json!({ "prediction": s.current(), "session": view(&s) }),
        ))
    })();
    if let Some(k) = key {
        st.store.remember(k, stored(&r));
    }
    respond(r)
}

fn not_accepted(s: &Session, what: &str) -> ApiError {
    let expected: Vec<String> = s.expected().iter().map(|e| e.to_string()).collect();
    ApiError::illegal(&ProtocolError {
        message: format!("{what} is not accepted by this {} session in its current phase", s.protocol),
        expected,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdviceRequest {
    head: Option<Head>,
    text: Option<String>,
}

/// Canonical sentences the grounders understand, offered when text is rejected.
pub fn supported_phrasings(st: &AppState, protocol: ProtocolKind, head: Head) -> Vec<String> {
    let ts = st.registry.models().eval_templates();
    let mut rng = Rng::new(0, 0);
    match protocol {
        ProtocolKind::Corrective => Direction::ALL.iter().map(|&d| render_corrective(d, ts, &mut rng).text).collect(),
        _ => Quadrant::ALL
            .iter()
            .map(|&q| render_restrictive(head, NamedRegion::Quadrant(q), ts, &mut rng).text)
            .collect(),
    }
}

async fn advice(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let st2 = st.clone();
    transition(&st, &id, "advice", &headers, move |s| {
        let req: AdviceRequest = parse_body(&body)?;
        let head = req.head.ok_or_else(|| ApiError::bad_request("head is required"))?;
        let text = req.text.unwrap_or_default();
        let kind = match s.protocol {
            ProtocolKind::Restrictive => AdviceKind::Restrictive,
            ProtocolKind::Corrective => AdviceKind::Corrective,
            _ => return Err(not_accepted(s, "advice")),
        };
        if !s.expected().iter().any(|e| e.ends_with("advice")) {
            return Err(not_accepted(s, "advice"));
        }
        let vocab = &st2
            .registry
            .models()
            .predictor(s.protocol)?
            .frozen()
            .ok_or_else(|| ApiError::from(Error::Contract("advice predictor has no advice trunk".into())))?
            .vocab;
        let oov = oov_fraction(&text, vocab);
        if text.trim().is_empty() || oov > MAX_OOV {
            let hint = supported_phrasings(&st2, s.protocol, head);
            let message = if text.trim().is_empty() {
                "advice text is empty".to_string()
            } else {
                format!("{:.0}% of the advice words are unknown; try one of: {}", oov * 100.0, hint.join(" | "))
            };
            let mut e = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "untokenizable_advice", message);
            e.expected = Some(hint);
            return Err(e);
        }
        Ok(vec![AdvisorEvent::advice(head, AdviceSentence::free_text(&text, kind))])
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadRequest {
    head: Option<Head>,
}

fn heads(req: &HeadRequest) -> Vec<Head> {
    match req.head {
        Some(h) => vec![h],
        None => Head::BOTH.to_vec(),
    }
}

async fn retry(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    transition(&st, &id, "retry", &headers, move |s| {
        let req: HeadRequest = parse_body(&body)?;
        if !s.expected().contains(&"retry") {
            return Err(not_accepted(s, "retry"));
        }
        Ok(heads(&req).into_iter().map(AdvisorEvent::retry).collect())
    })
}

async fn accept(State(st): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    transition(&st, &id, "accept", &headers, move |s| {
        let req: HeadRequest = parse_body(&body)?;
        if !s.expected().contains(&"accept") {
            return Err(not_accepted(s, "accept"));
        }
        Ok(heads(&req).into_iter().map(AdvisorEvent::accept).collect())
    })
}

async fn models(State(st): State<Arc<AppState>>) -> Response {
    let body = json!({
        "models": st.registry.entries(),
        "protocols": st.registry.availability(),
    });
    (StatusCode::OK, Json(body)).into_response()
}

#[derive(Serialize)]
struct ExampleView<'a> {
    split: Split,
    #[serde(flatten)]
    example: &'a Example,
    block_length: f64,
}

async fn example(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.data.find(&id) {
        Some((split, e)) => {
            let v = ExampleView {
                split,
                example: e,
                block_length: st.data.block_length,
            };
            (StatusCode::OK, Json(v)).into_response()
        }
        None => ApiError::not_found(format!("unknown example {id}")).into_response(),
    }
}

