//! HTTP service for live sessions with a human responder.
//!
//! | method | path | |
//! |---|---|---|
//! | `GET` | `/scenarios` | shipped scenarios |
//! | `POST` | `/sessions` | body [`CreateSession`], returns [`StatusView`] |
//! | `GET` | `/sessions/{id}/status` | [`StatusView`] |
//! | `GET` | `/sessions/{id}/query` | [`QueryView`]; `202` + `Retry-After` while computing |
//! | `POST` | `/sessions/{id}/choice` | body [`ChoiceRequest`], returns [`StatusView`] |
//! | `GET` | `/sessions/{id}/result` | [`ResultView`] once finished |
//!
//! Errors are `{"error": "...", "field": "..."}` with `field` only present
//! for config problems. Unknown sessions give `404`, requests in the wrong
//! state `409`, a choice other than 1 or 2 `400` and a bad config or
//! unknown scenario `422`.
//!
//! The two options are shown in a random order so the current tours are not
//! always option 1. Repeating the last answer (same iteration and option) is
//! a no-op that returns the current status.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tourpref_core::querygen::QueryContext;
use tourpref_core::rewards::visit_counts;
use tourpref_core::session::{
    apply_choice, init_session, propose, ConfigError, PendingQuery, SessionError, TraceRecord,
};
use tourpref_core::{
    Choice, DecaySet, Environment, GreedyPlanner, LoopConfig, Point, SessionState, TourSet,
};

use crate::scenario_file::{list_scenarios, load_scenario, parse_scenario, ScenarioFile};
use crate::trace::{to_jsonl, write_trace};

const BUILTIN_COASTLINE: &str = include_str!("../scenarios/coastline.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingChoice,
    Computing,
    Finished,
}

struct LiveSession {
    id: String,
    scenario: String,
    env: Arc<Environment>,
    config: LoopConfig,
    state: SessionState,
    status: Status,
    /// Whether option 1 on screen is the candidate rather than the current tours.
    swapped: bool,
    order_rng: ChaCha8Rng,
    last_answer: Option<(usize, u8)>,
    error: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    scenarios: BTreeMap<String, ScenarioSource>,
    sessions: Mutex<HashMap<String, Arc<Mutex<LiveSession>>>>,
    trace_dir: Option<PathBuf>,
    decays: DecaySet,
}

#[derive(Clone)]
enum ScenarioSource {
    Builtin(&'static str),
    File(PathBuf),
}

impl AppState {
    /// Serves the built-in scenarios plus every `*.json` in `scenario_dir`.
    /// Finished traces go to `trace_dir` as `<id>.jsonl` when given.
    pub fn new(scenario_dir: Option<PathBuf>, trace_dir: Option<PathBuf>) -> anyhow::Result<Self> {
        let mut scenarios = BTreeMap::new();
        scenarios.insert("coastline".to_string(), ScenarioSource::Builtin(BUILTIN_COASTLINE));
        if let Some(dir) = scenario_dir {
            for (name, path) in list_scenarios(&dir)? {
                scenarios.insert(name, ScenarioSource::File(path));
            }
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                scenarios,
                sessions: Mutex::new(HashMap::new()),
                trace_dir,
                decays: DecaySet::default(),
            }),
        })
    }

    fn load(&self, name: &str) -> Result<(ScenarioFile, Environment), ApiError> {
        let source = self
            .inner
            .scenarios
            .get(name)
            .ok_or_else(|| ApiError::invalid("scenario", format!("unknown scenario {name:?}")))?;
        let loaded = match source {
            ScenarioSource::Builtin(text) => {
                parse_scenario(text).and_then(|f| f.build().map(|env| (f, env)))
            }
            ScenarioSource::File(path) => load_scenario(path),
        };
        loaded.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")))
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenarios", get(list))
        .route("/sessions", post(create))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/choice", post(choice))
        .route("/sessions/{id}/result", get(result))
        .with_state(state)
}

pub async fn serve(port: u16, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), field: None }
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
            field: Some(field.into()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: &self.message, field: self.field.as_deref() };
        (self.status, Json(body)).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn config_field(e: &ConfigError) -> &'static str {
    match e {
        ConfigError::RegionsSampled => "config.n_regions_sampled",
        ConfigError::CutProbability => "config.static_cut_prob",
        ConfigError::InfoSamples => "config.info_samples",
        ConfigError::ModelBeta => "config.model_beta",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub scenario: String,
    #[serde(default)]
    pub config: LoopConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceRequest {
    /// The `iteration` of the query being answered.
    pub iteration: usize,
    /// 1 or 2, as displayed.
    pub chosen: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub id: String,
    pub scenario: String,
    pub status: Status,
    pub iteration: usize,
    pub max_iterations: usize,
    /// Number of cuts in the polyhedron.
    pub cuts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub regions: usize,
    pub robots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionView {
    pub id: u64,
    pub center: Point,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TourView {
    pub robot: usize,
    pub vertices: Vec<usize>,
    pub path: Vec<Point>,
    pub length: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCount {
    pub region_id: u64,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    /// 1 or 2.
    pub option: u8,
    pub tours: Vec<TourView>,
    pub total_length: f64,
    pub visit_counts: Vec<RegionCount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub id: String,
    pub iteration: usize,
    pub max_iterations: usize,
    pub depot: Point,
    pub regions: Vec<RegionView>,
    pub options: Vec<OptionView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    pub id: String,
    pub tours: Vec<TourView>,
    pub visit_counts: Vec<RegionCount>,
    pub trace: Vec<TraceRecord>,
    /// The same trace as JSON lines.
    pub trace_jsonl: String,
}

impl LiveSession {
    fn status_view(&self) -> StatusView {
        StatusView {
            id: self.id.clone(),
            scenario: self.scenario.clone(),
            status: self.status,
            iteration: self.state.iteration,
            max_iterations: self.config.max_iterations,
            cuts: self.state.cuts.cuts().len(),
            error: self.error.clone(),
        }
    }

    fn tour_views(&self, tours: &TourSet) -> Vec<TourView> {
        tours
            .tours
            .iter()
            .map(|t| TourView {
                robot: t.robot,
                vertices: t.vertices.clone(),
                path: t.vertices.iter().map(|&v| self.env.vertices()[v].position).collect(),
                length: t.length,
                budget: self.env.budget(t.robot),
            })
            .collect()
    }

    fn counts(&self, tours: &TourSet) -> Result<Vec<RegionCount>, ApiError> {
        let counts = visit_counts(tours, &self.env).map_err(internal)?;
        Ok(self
            .env
            .regions()
            .iter()
            .zip(counts)
            .map(|(r, count)| RegionCount { region_id: r.id, count })
            .collect())
    }

    fn option_view(&self, option: u8, tours: &TourSet) -> Result<OptionView, ApiError> {
        Ok(OptionView {
            option,
            tours: self.tour_views(tours),
            total_length: tours.tours.iter().map(|t| t.length).sum(),
            visit_counts: self.counts(tours)?,
        })
    }

    fn displayed<'p>(&self, pending: &'p PendingQuery) -> [&'p TourSet; 2] {
        if self.swapped {
            [&pending.second, &pending.first]
        } else {
            [&pending.first, &pending.second]
        }
    }

    fn to_choice(&self, displayed: u8) -> Choice {
        match (displayed == 1, self.swapped) {
            (true, false) | (false, true) => Choice::First,
            _ => Choice::Second,
        }
    }

    /// Installs the outcome of a proposal computed off the lock.
    fn finish_proposal(&mut self, state: SessionState, outcome: Result<bool, SessionError>) {
        self.state = state;
        match outcome {
            Ok(true) => {
                self.swapped = self.order_rng.random::<bool>();
                self.status = Status::AwaitingChoice;
            }
            Ok(false) => self.status = Status::Finished,
            Err(e) => {
                self.error = Some(e.to_string());
                self.status = Status::Finished;
            }
        }
    }
}

fn compute_next(
    mut state: SessionState,
    env: &Environment,
    config: &LoopConfig,
    decays: &DecaySet,
) -> (SessionState, Result<bool, SessionError>) {
    let planner = GreedyPlanner::new(decays.clone());
    let ctx = QueryContext { env, planner: &planner, decays };
    let outcome = propose(&mut state, &ctx, config).map(|q| q.is_some());
    (state, outcome)
}

async fn persist(app: &AppState, session: &LiveSession) {
    if session.status != Status::Finished {
        return;
    }
    if let Some(dir) = &app.inner.trace_dir {
        let path = dir.join(format!("{}.jsonl", session.id));
        if let Err(e) = write_trace(&path, &session.state.trace) {
            log::warn!("could not write trace for {}: {e:#}", session.id);
        }
    }
}

async fn list(State(app): State<AppState>) -> Result<Json<Vec<ScenarioInfo>>, ApiError> {
    let mut out = Vec::new();
    for name in app.inner.scenarios.keys() {
        let (_, env) = app.load(name)?;
        out.push(ScenarioInfo {
            name: name.clone(),
            regions: env.num_regions(),
            robots: env.num_robots(),
        });
    }
    Ok(Json(out))
}

async fn create(State(app): State<AppState>, body: Bytes) -> Result<Json<StatusView>, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let req: CreateSession = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::invalid(path, e.inner().to_string())
    })?;
    req.config
        .validate()
        .map_err(|e| ApiError::invalid(config_field(&e), e.to_string()))?;
    let (_, env) = app.load(&req.scenario)?;
    let env = Arc::new(env);
    let config = req.config;

    let (state, outcome) = {
        let env = env.clone();
        let config = config.clone();
        let decays = app.inner.decays.clone();
        tokio::task::spawn_blocking(move || {
            let planner = GreedyPlanner::new(decays.clone());
            let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
            let state = init_session(&ctx, &config)?;
            Ok::<_, SessionError>(compute_next(state, &env, &config, &decays))
        })
        .await
        .map_err(internal)?
        .map_err(internal)?
    };

    let id = uuid::Uuid::new_v4().to_string();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut session = LiveSession {
        id: id.clone(),
        scenario: req.scenario,
        env,
        config,
        state: state.clone(),
        status: Status::Computing,
        swapped: false,
        order_rng,
        last_answer: None,
        error: None,
    };
    session.finish_proposal(state, outcome);
    persist(&app, &session).await;
    let view = session.status_view();
    log::info!("session {id} created on {}", session.scenario);
    app.inner
        .sessions
        .lock()
        .await
        .insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(view))
}

async fn status(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<StatusView>, ApiError> {
    let session = app.session(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.status_view()))
}

async fn query(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.session(&id).await?;
    let s = session.lock().await;
    match s.status {
        Status::Finished => Err(ApiError::new(StatusCode::CONFLICT, "session is finished")),
        Status::Computing => Ok((
            StatusCode::ACCEPTED,
            [(header::RETRY_AFTER, "1")],
            Json(s.status_view()),
        )
            .into_response()),
        Status::AwaitingChoice => {
            let pending = s
                .state
                .pending
                .as_ref()
                .ok_or_else(|| internal("awaiting a choice without a pending query"))?;
            let [a, b] = s.displayed(pending);
            let view = QueryView {
                id: s.id.clone(),
                iteration: s.state.iteration,
                max_iterations: s.config.max_iterations,
                depot: s.env.depot_position(),
                regions: s
                    .env
                    .regions()
                    .iter()
                    .map(|r| RegionView { id: r.id, center: r.center, points: r.points.clone() })
                    .collect(),
                options: vec![s.option_view(1, a)?, s.option_view(2, b)?],
            };
            Ok(Json(view).into_response())
        }
    }
}

async fn choice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StatusView>, ApiError> {
    let session = app.session(&id).await?;
    let req: ChoiceRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if req.chosen != 1 && req.chosen != 2 {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("chosen must be 1 or 2, got {}", req.chosen),
        ));
    }

    let (state, env, config) = {
        let mut s = session.lock().await;
        if s.last_answer == Some((req.iteration, req.chosen)) {
            return Ok(Json(s.status_view()));
        }
        if s.status != Status::AwaitingChoice {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("session is {:?}, not awaiting a choice", s.status),
            ));
        }
        if req.iteration != s.state.iteration {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("iteration {} is not the open query {}", req.iteration, s.state.iteration),
            ));
        }
        let chosen = s.to_choice(req.chosen);
        let s = &mut *s;
        apply_choice(&mut s.state, &s.env, &s.config, chosen, None).map_err(internal)?;
        s.last_answer = Some((req.iteration, req.chosen));
        s.status = Status::Computing;
        (s.state.clone(), s.env.clone(), s.config.clone())
    };

    let app2 = app.clone();
    let session2 = session.clone();
    tokio::spawn(async move {
        let decays = app2.inner.decays.clone();
        let joined =
            tokio::task::spawn_blocking(move || compute_next(state, &env, &config, &decays)).await;
        let mut s = session2.lock().await;
        match joined {
            Ok((state, outcome)) => s.finish_proposal(state, outcome),
            Err(e) => {
                s.error = Some(format!("query computation failed: {e}"));
                s.status = Status::Finished;
            }
        }
        persist(&app2, &s).await;
    });

    let s = session.lock().await;
    Ok(Json(s.status_view()))
}

async fn result(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<ResultView>, ApiError> {
    let session = app.session(&id).await?;
    let s = session.lock().await;
    if s.status != Status::Finished {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is not finished"));
    }
    Ok(Json(ResultView {
        id: s.id.clone(),
        tours: s.tour_views(&s.state.t_curr),
        visit_counts: s.counts(&s.state.t_curr)?,
        trace: s.state.trace.clone(),
        trace_jsonl: to_jsonl(&s.state.trace).map_err(internal)?,
    }))
}
