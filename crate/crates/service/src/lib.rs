//! HTTP API over exploration sessions.
//!
//! Every mutating endpoint goes through the engine and appends to the
//! session's event log; text generation runs as polled jobs.

pub mod error;
pub mod store;
pub mod view;

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use cuegraph_core::engine::{Action, Actor, EngineError, ExplorationSession, Operand};
use cuegraph_core::export::{graph_dot, graph_json};
use cuegraph_core::metrics::{analyze, AnalysisOptions, DEFAULT_FLOW_THRESHOLD};
use cuegraph_core::prompt::{Category, TemplateKind};
use cuegraph_core::provider::{GenerationRequest, Provider};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use error::{ApiError, ErrorBody};
pub use store::{SessionStore, StoreError};
pub use view::ApiSessionView;

/// Header carrying the client's display name, recorded as the event actor.
pub const CLIENT_HEADER: &str = "x-client-name";

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTicket {
    pub id: String,
    pub kind: String,
    pub session: String,
    pub prompt: String,
    pub status: JobStatus,
    /// Response id once done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    session: String,
    revision: usize,
    resource: String,
}

struct CacheEntry {
    annotation: String,
    events: usize,
    body: String,
}

pub struct AppState {
    store: SessionStore,
    provider: Option<Arc<dyn Provider>>,
    jobs: Mutex<BTreeMap<String, JobTicket>>,
    cache: Mutex<HashMap<CacheKey, CacheEntry>>,
}

impl AppState {
    pub fn new(store: SessionStore, provider: Option<Arc<dyn Provider>>) -> Arc<Self> {
        Arc::new(Self {
            store,
            provider,
            jobs: Mutex::new(BTreeMap::new()),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn session(&self, id: &str) -> ApiResult<store::SessionHandle> {
        self.store.get(id).ok_or_else(|| ApiError::not_found("session", id))
    }

    /// Runs `f` under the session's lock and persists the result on success.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut ExplorationSession) -> Result<T, EngineError>) -> ApiResult<(T, ApiSessionView)> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        let out = f(&mut session)?;
        self.store.persist(&session).map_err(storage_error)?;
        Ok((out, ApiSessionView::of(&session)))
    }

    fn set_job(&self, ticket: &JobTicket) {
        self.jobs.lock().expect("jobs lock").insert(ticket.id.clone(), ticket.clone());
    }

    /// Queues generation for `prompt` and answers it in the background.
    fn spawn_generation(self: &Arc<Self>, session: &str, prompt_id: &str, prompt_text: String) -> ApiResult<JobTicket> {
        let provider = self.provider.clone().ok_or_else(ApiError::provider_unavailable)?;
        let ticket = JobTicket {
            id: format!("job-{}", uuid::Uuid::new_v4().simple()),
            kind: "generation".into(),
            session: session.to_string(),
            prompt: prompt_id.to_string(),
            status: JobStatus::Queued,
            result: None,
            error: None,
        };
        self.set_job(&ticket);
        let state = self.clone();
        let mut job = ticket.clone();
        tokio::spawn(async move {
            job.status = JobStatus::Running;
            state.set_job(&job);
            let provider_id = provider.id();
            let generated = tokio::task::spawn_blocking(move || provider.generate(&GenerationRequest::new(&prompt_text)))
                .await
                .expect("generation task does not panic");
            let outcome = generated.map_err(EngineError::from).map_err(ApiError::from).and_then(|text| {
                state
                    .mutate(&job.session, |s| {
                        s.ingest_response(&job.prompt, &text, &provider_id).map(|r| r.id.clone())
                    })
                    .map(|(id, _)| id)
            });
            match outcome {
                Ok(response) => {
                    job.status = JobStatus::Done;
                    job.result = Some(response);
                }
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.body);
                }
            }
            state.set_job(&job);
        });
        Ok(ticket)
    }
}

fn storage_error(e: io::Error) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
}

fn actor(headers: &HeaderMap) -> Actor {
    match headers.get(CLIENT_HEADER).and_then(|v| v.to_str().ok()).map(str::trim) {
        Some(name) if !name.is_empty() => Actor::named(name),
        _ => Actor::human(),
    }
}

/// JSON body whose rejections use the common error shape.
struct Body<T>(T);

impl<S, T> axum::extract::FromRequest<S> for Body<T>
where
    Json<T>: axum::extract::FromRequest<S, Rejection = axum::extract::rejection::JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(value) = Json::<T>::from_request(req, state).await?;
        Ok(Body(value))
    }
}

#[derive(Deserialize)]
struct CreateSession {
    paragraph: String,
}

#[derive(Deserialize)]
struct PasteResponse {
    prompt_id: String,
    text: String,
    #[serde(default)]
    provider: Option<String>,
}

#[derive(Deserialize)]
struct TriageBody {
    category: Category,
}

#[derive(Deserialize, Default)]
struct NextThreadBody {
    #[serde(default)]
    root: Option<String>,
}

fn generate_by_default() -> bool {
    true
}

#[derive(Deserialize)]
struct DetailBody {
    kind: TemplateKind,
    #[serde(default)]
    about: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default = "generate_by_default")]
    generate: bool,
}

#[derive(Deserialize)]
struct SelectBody {
    cues: Vec<String>,
}

#[derive(Deserialize)]
struct CombineBody {
    first: Operand,
    second: Operand,
    kind: TemplateKind,
    #[serde(default = "generate_by_default")]
    generate: bool,
}

#[derive(Deserialize)]
struct RewriteBody {
    text: String,
}

#[derive(Deserialize)]
struct AnnotationBody {
    text: String,
}

#[derive(Deserialize, Default)]
struct GraphQuery {
    #[serde(default)]
    revision: Option<usize>,
    #[serde(default)]
    format: Option<String>,
}

#[derive(Deserialize, Default)]
struct MetricsQuery {
    #[serde(default)]
    revision: Option<usize>,
    #[serde(default)]
    flow_threshold: Option<usize>,
}

#[derive(Serialize)]
struct PromptIssued {
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    thread: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    job: Option<JobTicket>,
    session: ApiSessionView,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/document", get(get_document))
        .route("/sessions/{id}/responses", post(paste_response))
        .route("/sessions/{id}/jobs/critique", post(critique_job))
        .route("/sessions/{id}/cues/{cue}/triage", post(triage))
        .route("/sessions/{id}/threads/next", post(next_thread))
        .route("/sessions/{id}/threads/{tid}/detail", post(detail))
        .route("/sessions/{id}/threads/{tid}/select", post(select))
        .route("/sessions/{id}/combine", post(combine))
        .route("/sessions/{id}/rewrite", post(rewrite))
        .route("/sessions/{id}/terminate", post(terminate))
        .route("/sessions/{id}/annotations/{revision}", put(put_annotation))
        .route("/sessions/{id}/graph", get(get_graph))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/jobs/{id}", get(get_job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "unknown-route", "no such endpoint") })
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn create_session(State(state): State<Arc<AppState>>, Body(body): Body<CreateSession>) -> ApiResult<Response> {
    let session = ExplorationSession::start(&body.paragraph)?;
    let view = ApiSessionView::of(&session);
    state.store.insert(session).map_err(storage_error)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.store.ids())
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ApiSessionView>> {
    let handle = state.session(&id)?;
    let session = handle.lock().expect("session lock");
    Ok(Json(ApiSessionView::of(&session)))
}

async fn get_document(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = state.session(&id)?;
    let doc = handle.lock().expect("session lock").export();
    Ok(([(header::CONTENT_TYPE, "application/json")], doc).into_response())
}

async fn paste_response(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<PasteResponse>,
) -> ApiResult<Json<ApiSessionView>> {
    let provider = body.provider.unwrap_or_else(|| "manual".into());
    let (_, view) = state.mutate(&id, |s| s.ingest_response(&body.prompt_id, &body.text, &provider).map(|_| ()))?;
    Ok(Json(view))
}

async fn critique_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let (prompt_id, text) = {
        let handle = state.session(&id)?;
        let session = handle.lock().expect("session lock");
        let pending = session
            .unanswered()
            .into_iter()
            .rev()
            .find(|p| p.kind == TemplateKind::Critique)
            .map(|p| (p.id.clone(), p.text.clone()));
        pending.ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "no-pending-critique", "the latest critique is already answered")
        })?
    };
    let ticket = state.spawn_generation(&id, &prompt_id, text)?;
    Ok((StatusCode::ACCEPTED, Json(ticket)).into_response())
}

async fn triage(
    State(state): State<Arc<AppState>>,
    Path((id, cue)): Path<(String, String)>,
    headers: HeaderMap,
    Body(body): Body<TriageBody>,
) -> ApiResult<Json<ApiSessionView>> {
    let (_, view) = state.mutate(&id, |s| {
        s.apply(
            actor(&headers),
            Action::Triage {
                cue,
                category: body.category,
            },
        )
    })?;
    Ok(Json(view))
}

async fn next_thread(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    // the body is optional here
    let root = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice::<NextThreadBody>(&body)
            .map_err(|e| ApiError::validation(e.to_string()))?
            .root
    };
    let (outcome, view) = state.mutate(&id, |s| s.apply(actor(&headers), Action::SelectThread { root }))?;
    Ok(Json(json!({ "thread": outcome.thread, "session": view })))
}

/// Applies an action that issues a prompt and optionally starts its job.
fn issue_prompt(state: &Arc<AppState>, id: &str, actor: Actor, action: Action, generate: bool) -> ApiResult<Response> {
    if generate && state.provider.is_none() {
        return Err(ApiError::provider_unavailable());
    }
    let ((outcome, text), view) = state.mutate(id, |s| {
        let outcome = s.apply(actor, action)?;
        let prompt = outcome.prompt.clone().expect("action issues a prompt");
        let text = s.prompt(&prompt).expect("prompt exists").text.clone();
        Ok((outcome, text))
    })?;
    let prompt = outcome.prompt.expect("action issues a prompt");
    let job = generate.then(|| state.spawn_generation(id, &prompt, text)).transpose()?;
    let body = PromptIssued {
        prompt,
        thread: outcome.thread,
        job,
        session: view,
    };
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn detail(
    State(state): State<Arc<AppState>>,
    Path((id, thread)): Path<(String, String)>,
    headers: HeaderMap,
    Body(body): Body<DetailBody>,
) -> ApiResult<Response> {
    let action = Action::RequestDetailing {
        thread,
        kind: body.kind,
        about: body.about,
        text: body.text,
    };
    issue_prompt(&state, &id, actor(&headers), action, body.generate)
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path((id, thread)): Path<(String, String)>,
    headers: HeaderMap,
    Body(body): Body<SelectBody>,
) -> ApiResult<Json<ApiSessionView>> {
    let (_, view) = state.mutate(&id, |s| s.apply(actor(&headers), Action::SelectCues { thread, cues: body.cues }))?;
    Ok(Json(view))
}

async fn combine(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Body(body): Body<CombineBody>,
) -> ApiResult<Response> {
    let action = Action::Combine {
        first: body.first,
        second: body.second,
        kind: body.kind,
    };
    issue_prompt(&state, &id, actor(&headers), action, body.generate)
}

async fn rewrite(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Body(body): Body<RewriteBody>,
) -> ApiResult<Json<ApiSessionView>> {
    let (_, view) = state.mutate(&id, |s| s.apply(actor(&headers), Action::Rewrite { text: body.text }))?;
    Ok(Json(view))
}

async fn terminate(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<ApiSessionView>> {
    let (_, view) = state.mutate(&id, |s| s.apply(actor(&headers), Action::Terminate))?;
    Ok(Json(view))
}

async fn put_annotation(
    State(state): State<Arc<AppState>>,
    Path((id, revision)): Path<(String, String)>,
    Body(body): Body<AnnotationBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let revision: usize = revision
        .parse()
        .map_err(|_| ApiError::validation(format!("revision `{revision}` is not a number")))?;
    let (graph, _) = state.mutate(&id, |s| s.attach_annotation(revision, &body.text))?;
    Ok(Json(json!({
        "revision": revision,
        "concepts": graph.len(),
        "relationships": graph.relationship_count(),
    })))
}

/// Serves a derived resource from the cache, recomputing it when the
/// annotation or the event log changed.
fn cached(
    state: &AppState,
    id: &str,
    revision: Option<usize>,
    resource: &str,
    render: impl FnOnce(&ExplorationSession, &cuegraph_core::graph::ConceptGraph) -> ApiResult<String>,
) -> ApiResult<String> {
    let handle = state.session(id)?;
    let session = handle.lock().expect("session lock");
    let revision = revision.unwrap_or(session.current_revision().index);
    let annotation = match session.paragraphs().get(revision) {
        None => return Err(EngineError::UnknownRevision(revision).into()),
        Some(_) => session.annotation(revision).map(str::to_string).ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "no-annotation",
                format!("revision {revision} has no annotation yet"),
            )
            .with_details(json!({
                "hint": format!("PUT /sessions/{id}/annotations/{revision} with {{\"text\": <annotation document>}}")
            }))
        })?,
    };
    let key = CacheKey {
        session: id.to_string(),
        revision,
        resource: resource.to_string(),
    };
    let events = session.events().len();
    if let Some(hit) = state.cache.lock().expect("cache lock").get(&key) {
        if hit.annotation == annotation && hit.events == events {
            return Ok(hit.body.clone());
        }
    }
    let graph = session.graph(revision)?.expect("annotation exists");
    let body = render(&session, &graph)?;
    state.cache.lock().expect("cache lock").insert(
        key,
        CacheEntry {
            annotation,
            events,
            body: body.clone(),
        },
    );
    Ok(body)
}

async fn get_graph(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<GraphQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let format = query.format.as_deref().unwrap_or("json");
    let (content_type, render): (&str, fn(&cuegraph_core::graph::ConceptGraph) -> String) = match format {
        "json" => ("application/json", graph_json),
        "dot" => ("text/vnd.graphviz", graph_dot),
        other => return Err(ApiError::validation(format!("unknown graph format `{other}` (json or dot)"))),
    };
    let body = cached(&state, &id, query.revision, &format!("graph.{format}"), |_, g| Ok(render(g)))?;
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}

async fn get_metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<MetricsQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let threshold = query.flow_threshold.unwrap_or(DEFAULT_FLOW_THRESHOLD);
    let body = cached(&state, &id, query.revision, &format!("metrics.{threshold}"), |session, graph| {
        let explored = session.explored_cue_labels();
        let options = AnalysisOptions {
            flow_threshold: threshold,
            explored_cues: Some(&explored),
            ..AnalysisOptions::default()
        };
        Ok(analyze(graph, &options)?.to_json())
    })?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobTicket>> {
    let jobs = state.jobs.lock().expect("jobs lock");
    jobs.get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}
