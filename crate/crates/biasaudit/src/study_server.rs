//! HTTP backend for the human "name that dataset" study.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/study` | |
//! | POST | `/sessions` | `{ "user_id"?: token }` |
//! | GET | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/next` | |
//! | POST | `/sessions/{id}/answers` | `{ "question_id", "choice" }` |
//! | GET | `/sessions/{id}/result` | |
//! | POST | `/sessions/{id}/questionnaire` | questionnaire fields |
//! | GET | `/browse` | `dataset`, `page`, `page_size` |
//! | GET | `/stats/histogram` | `bin_width` |
//! | GET | `/images/{hash}` | |
//!
//! Images are addressed by the SHA-256 of their PNG bytes, so a question
//! reveals neither its image id nor its dataset. Ground truth appears only in
//! `/result`, once a session is complete. Every state change is appended to
//! `events.jsonl`; on restart sessions are recreated from their seeds and the
//! recorded answers replayed.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biasaudit_core::dataset::sample_split;
use biasaudit_core::study::{
    aggregate_histogram, DatasetPool, Histogram, Questionnaire, SessionAccuracy, SessionStatus, Study, StudyConfig,
    StudySession,
};
use biasaudit_core::{DatasetManifest, StudyError};
use serde::{Deserialize, Serialize};

use crate::config::DatasetEntry;
use crate::error::{Error, IoContext, Result};
use crate::experiment::{open_dataset, DynSource};
use crate::ingest::{encode_png, sha256_hex};
use crate::manifest::read_jsonl;
use crate::store::now_ms;

/// Study service file (YAML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyServiceConfig {
    #[serde(default)]
    pub study: StudyConfig,
    /// Sources for every dataset named in `study.datasets`.
    pub datasets: Vec<DatasetEntry>,
    /// Training images per dataset; the browse pool is drawn from these.
    pub n_train: usize,
    /// Validation images per dataset; questions are drawn from these.
    pub n_val: usize,
    #[serde(default)]
    pub split_seed: u64,
}

impl StudyServiceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg: Self = serde_yaml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            d.resolve_paths(base);
        }
        Ok(cfg)
    }
}

struct DatasetImages {
    manifest: DatasetManifest,
    source: DynSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionCreated { session_id: String, user_id: String, at_ms: u64 },
    Answer { session_id: String, question_id: String, choice: String, timestamp_ms: u64 },
    Questionnaire { session_id: String, questionnaire: Questionnaire },
}

/// Shared service state.
pub struct StudyService {
    study: Study,
    datasets: Vec<DatasetImages>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<StudySession>>>>,
    /// `(dataset, image_id)` → content hash, filled as images are first shown.
    hashes: Mutex<HashMap<(usize, String), String>>,
    image_dir: Option<PathBuf>,
    images: Mutex<HashMap<String, Arc<Vec<u8>>>>,
    log: Option<Mutex<File>>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let code = match e {
            StudyError::DuplicateAnswer(_) | StudyError::NotActive | StudyError::NotCompleted => StatusCode::CONFLICT,
            StudyError::NoSessions => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        Self(code, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn not_found(what: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what}"))
}

fn valid_token(s: &str) -> bool {
    (1..=64).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    /// 1-based position in the session.
    pub index: usize,
    pub image: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerView {
    pub question_id: String,
    pub choice: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub datasets: Vec<String>,
    pub status: SessionStatus,
    pub answered: usize,
    pub total: usize,
    pub answers: Vec<AnswerView>,
    pub current: Option<QuestionView>,
    pub questionnaire: Option<Questionnaire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextView {
    pub question: Option<QuestionView>,
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowseImage {
    pub image: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowsePage {
    pub dataset: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub images: Vec<BrowseImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedAnswer {
    pub question_id: String,
    pub image: String,
    pub choice: String,
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    #[serde(flatten)]
    pub accuracy: SessionAccuracy,
    pub answers: Vec<RevealedAnswer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyInfo {
    pub datasets: Vec<String>,
    pub questions: usize,
    pub browse_per_dataset: usize,
}

impl StudyService {
    /// Builds the study from a service config. With `data_dir`, events and
    /// rendered images persist there and earlier sessions are restored.
    pub fn from_config(cfg: &StudyServiceConfig, data_dir: Option<&Path>) -> Result<Self> {
        let mut datasets = Vec::new();
        let mut pools = Vec::new();
        for id in &cfg.study.datasets {
            let entry = cfg
                .datasets
                .iter()
                .find(|d| &d.id == id)
                .ok_or_else(|| Error::Format(format!("study dataset `{id}` has no source entry")))?;
            let (manifest, source) = open_dataset(entry)?;
            let split = sample_split(&manifest, cfg.n_train, cfg.n_val, cfg.split_seed)?;
            let ids = |idx: &[usize]| idx.iter().map(|&i| manifest.record(i).image_id.clone()).collect();
            pools.push(DatasetPool { dataset_id: id.clone(), train: ids(&split.train_indices), validation: ids(&split.val_indices) });
            datasets.push((manifest, source));
        }
        let study = Study::new(cfg.study.clone(), &pools)?;
        Self::new(study, datasets, data_dir)
    }

    pub fn new(study: Study, datasets: Vec<(DatasetManifest, DynSource)>, data_dir: Option<&Path>) -> Result<Self> {
        let datasets = datasets.into_iter().map(|(manifest, source)| DatasetImages { manifest, source }).collect();
        let mut svc = Self {
            study,
            datasets,
            sessions: RwLock::new(BTreeMap::new()),
            hashes: Mutex::new(HashMap::new()),
            image_dir: None,
            images: Mutex::new(HashMap::new()),
            log: None,
        };
        if let Some(dir) = data_dir {
            let image_dir = dir.join("images");
            std::fs::create_dir_all(&image_dir).at(&image_dir)?;
            svc.image_dir = Some(image_dir);
            let path = dir.join("events.jsonl");
            if path.exists() {
                for event in read_jsonl::<Event>(&path)? {
                    svc.replay(event)?;
                }
            }
            svc.log = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(&path).at(&path)?));
        }
        Ok(svc)
    }

    fn replay(&self, event: Event) -> Result<()> {
        let bad = |m: String| Error::Format(format!("events.jsonl: {m}"));
        match event {
            Event::SessionCreated { session_id, user_id, .. } => {
                let s = self.study.create_session(session_id.clone(), user_id);
                self.sessions.write().expect("sessions lock").insert(session_id, Arc::new(Mutex::new(s)));
            }
            Event::Answer { session_id, question_id, choice, timestamp_ms } => {
                let s = self.session(&session_id).ok_or_else(|| bad(format!("unknown session {session_id}")))?;
                let mut s = s.lock().expect("session lock");
                s.submit_answer(&question_id, &choice, timestamp_ms)?;
            }
            Event::Questionnaire { session_id, questionnaire } => {
                let s = self.session(&session_id).ok_or_else(|| bad(format!("unknown session {session_id}")))?;
                s.lock().expect("session lock").set_questionnaire(questionnaire);
            }
        }
        Ok(())
    }

    fn append(&self, event: &Event) -> Result<()> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(event)?;
            line.push('\n');
            let mut f = log.lock().expect("log lock");
            f.write_all(line.as_bytes()).at("events.jsonl")?;
            f.sync_data().at("events.jsonl")?;
        }
        Ok(())
    }

    pub fn study(&self) -> &Study {
        &self.study
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<StudySession>>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    /// Completed sessions' accuracies, in session-id order.
    pub fn completed_accuracies(&self) -> Vec<f64> {
        let sessions: Vec<_> = self.sessions.read().expect("sessions lock").values().cloned().collect();
        sessions.iter().filter_map(|s| s.lock().expect("session lock").accuracy().ok().map(|a| a.accuracy)).collect()
    }

    /// Content hash of a pool image, rendering and storing it on first use.
    fn image_hash(&self, dataset: usize, image_id: &str) -> Result<String> {
        let key = (dataset, image_id.to_string());
        if let Some(h) = self.hashes.lock().expect("hash lock").get(&key) {
            return Ok(h.clone());
        }
        let d = &self.datasets[dataset];
        let index = d
            .manifest
            .index_of(image_id)
            .ok_or_else(|| Error::Format(format!("image `{image_id}` missing from its manifest")))?;
        let png = encode_png(&d.source.load(d.manifest.record(index))?);
        let hash = sha256_hex(&png);
        if let Some(dir) = &self.image_dir {
            let path = dir.join(format!("{hash}.png"));
            if !path.exists() {
                let tmp = dir.join(format!("{hash}.tmp{}", std::process::id()));
                std::fs::write(&tmp, &png).at(&tmp)?;
                std::fs::rename(&tmp, &path).at(&path)?;
            }
        }
        self.images.lock().expect("image lock").insert(hash.clone(), Arc::new(png));
        self.hashes.lock().expect("hash lock").insert(key, hash.clone());
        Ok(hash)
    }

    fn image_bytes(&self, hash: &str) -> Option<Arc<Vec<u8>>> {
        if let Some(b) = self.images.lock().expect("image lock").get(hash) {
            return Some(b.clone());
        }
        if !(hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_hexdigit())) {
            return None;
        }
        let bytes = std::fs::read(self.image_dir.as_ref()?.join(format!("{hash}.png"))).ok()?;
        Some(Arc::new(bytes))
    }

    fn question_view(&self, s: &StudySession) -> Result<Option<QuestionView>> {
        let Some(q) = s.next_question() else { return Ok(None) };
        let index = s.questions.iter().position(|x| x.question_id == q.question_id).expect("own question") + 1;
        let image = self.image_hash(q.dataset, &q.image_id)?;
        Ok(Some(QuestionView { question_id: q.question_id.clone(), index, image_url: format!("/images/{image}"), image }))
    }

    fn session_view(&self, s: &StudySession) -> Result<SessionView> {
        Ok(SessionView {
            session_id: s.session_id.clone(),
            user_id: s.user_id.clone(),
            datasets: s.datasets.clone(),
            status: s.status,
            answered: s.answers.len(),
            total: s.questions.len(),
            answers: s
                .answers
                .iter()
                .map(|a| AnswerView { question_id: a.question_id.clone(), choice: a.choice.clone() })
                .collect(),
            current: self.question_view(s)?,
            questionnaire: s.questionnaire.clone(),
        })
    }

    pub fn create_session(&self, user_id: Option<String>) -> std::result::Result<SessionView, ApiError> {
        let user_id = match user_id {
            Some(u) if valid_token(&u) => u,
            Some(_) => return Err(ApiError(StatusCode::BAD_REQUEST, "user_id must be an opaque token [A-Za-z0-9_-]{1,64}".into())),
            None => uuid::Uuid::new_v4().simple().to_string(),
        };
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        self.append(&Event::SessionCreated { session_id: session_id.clone(), user_id: user_id.clone(), at_ms: now_ms() })?;
        let s = self.study.create_session(session_id.clone(), user_id);
        let view = self.session_view(&s)?;
        self.sessions.write().expect("sessions lock").insert(session_id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    /// Resubmitting an identical answer is accepted as a no-op so clients
    /// can retry safely.
    pub fn submit_answer(&self, session_id: &str, question_id: &str, choice: &str) -> std::result::Result<NextView, ApiError> {
        let s = self.session(session_id).ok_or_else(|| not_found("session"))?;
        let mut s = s.lock().expect("session lock");
        let repeat = s.answers.iter().any(|a| a.question_id == question_id && a.choice == choice);
        if !repeat {
            let timestamp_ms = now_ms();
            // Validate before logging so the log only holds accepted answers.
            let mut probe = s.clone();
            probe.submit_answer(question_id, choice, timestamp_ms)?;
            self.append(&Event::Answer {
                session_id: session_id.into(),
                question_id: question_id.into(),
                choice: choice.into(),
                timestamp_ms,
            })?;
            *s = probe;
        }
        Ok(NextView { question: self.question_view(&s)?, answered: s.answers.len(), total: s.questions.len() })
    }

    pub fn set_questionnaire(&self, session_id: &str, q: Questionnaire) -> std::result::Result<SessionView, ApiError> {
        if q.difficulty.is_some_and(|d| !(1..=5).contains(&d))
            || q.expected_model_accuracy.is_some_and(|a| !(0.0..=100.0).contains(&a))
        {
            return Err(ApiError(StatusCode::BAD_REQUEST, "difficulty must be 1-5 and accuracy 0-100".into()));
        }
        let s = self.session(session_id).ok_or_else(|| not_found("session"))?;
        let mut s = s.lock().expect("session lock");
        self.append(&Event::Questionnaire { session_id: session_id.into(), questionnaire: q.clone() })?;
        s.set_questionnaire(q);
        Ok(self.session_view(&s)?)
    }

    pub fn result(&self, session_id: &str) -> std::result::Result<ResultView, ApiError> {
        let s = self.session(session_id).ok_or_else(|| not_found("session"))?;
        let s = s.lock().expect("session lock");
        let accuracy = s.accuracy()?;
        let answers = s
            .answers
            .iter()
            .map(|a| {
                let q = s.question(&a.question_id).expect("answers reference questions");
                Ok(RevealedAnswer {
                    question_id: a.question_id.clone(),
                    image: self.image_hash(q.dataset, &q.image_id)?,
                    choice: a.choice.clone(),
                    truth: s.datasets[q.dataset].clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResultView { accuracy, answers })
    }

    pub fn browse(&self, dataset: &str, page: usize, page_size: usize) -> std::result::Result<BrowsePage, ApiError> {
        let d = self.study.dataset_index(dataset).ok_or_else(|| not_found("dataset"))?;
        let page_size = page_size.clamp(1, 200);
        let images = self
            .study
            .browse_page(d, page, page_size)
            .iter()
            .map(|id| {
                let image = self.image_hash(d, id)?;
                Ok(BrowseImage { image_url: format!("/images/{image}"), image })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BrowsePage { dataset: dataset.into(), page, page_size, total: self.study.browse_pool(d).len(), images })
    }

    pub fn histogram(&self, bin_width: f64) -> std::result::Result<Histogram, ApiError> {
        if !(bin_width > 0.0 && bin_width <= 100.0) {
            return Err(ApiError(StatusCode::BAD_REQUEST, "bin_width must be in (0, 100]".into()));
        }
        Ok(aggregate_histogram(&self.completed_accuracies(), bin_width)?)
    }
}

#[derive(Deserialize)]
struct CreateBody {
    user_id: Option<String>,
}

#[derive(Deserialize)]
struct AnswerBody {
    question_id: String,
    choice: String,
}

#[derive(Deserialize)]
struct BrowseQuery {
    dataset: String,
    #[serde(default)]
    page: usize,
    #[serde(default = "default_page_size")]
    page_size: usize,
}

fn default_page_size() -> usize {
    24
}

#[derive(Deserialize)]
struct HistogramQuery {
    #[serde(default = "default_bin_width")]
    bin_width: f64,
}

fn default_bin_width() -> f64 {
    5.0
}

type Shared = Arc<StudyService>;

async fn info(State(svc): State<Shared>) -> Json<StudyInfo> {
    let c = &svc.study.config;
    Json(StudyInfo { datasets: c.datasets.clone(), questions: c.questions, browse_per_dataset: c.browse_per_dataset })
}

async fn create(State(svc): State<Shared>, body: Option<Json<CreateBody>>) -> std::result::Result<(StatusCode, Json<SessionView>), ApiError> {
    let user_id = body.and_then(|Json(b)| b.user_id);
    Ok((StatusCode::CREATED, Json(svc.create_session(user_id)?)))
}

async fn show(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = svc.session(&id).ok_or_else(|| not_found("session"))?;
    let s = s.lock().expect("session lock");
    Ok(Json(svc.session_view(&s)?))
}

async fn next(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<NextView> {
    let s = svc.session(&id).ok_or_else(|| not_found("session"))?;
    let s = s.lock().expect("session lock");
    Ok(Json(NextView { question: svc.question_view(&s)?, answered: s.answers.len(), total: s.questions.len() }))
}

async fn answer(State(svc): State<Shared>, UrlPath(id): UrlPath<String>, Json(b): Json<AnswerBody>) -> ApiResult<NextView> {
    Ok(Json(svc.submit_answer(&id, &b.question_id, &b.choice)?))
}

async fn result(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<ResultView> {
    Ok(Json(svc.result(&id)?))
}

async fn questionnaire(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(q): Json<Questionnaire>,
) -> ApiResult<SessionView> {
    Ok(Json(svc.set_questionnaire(&id, q)?))
}

async fn browse(State(svc): State<Shared>, Query(q): Query<BrowseQuery>) -> ApiResult<BrowsePage> {
    Ok(Json(svc.browse(&q.dataset, q.page, q.page_size)?))
}

async fn histogram(State(svc): State<Shared>, Query(q): Query<HistogramQuery>) -> ApiResult<Histogram> {
    Ok(Json(svc.histogram(q.bin_width)?))
}

async fn image(State(svc): State<Shared>, UrlPath(hash): UrlPath<String>) -> Response {
    match svc.image_bytes(&hash) {
        Some(bytes) => (
            [(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")],
            bytes.as_ref().clone(),
        )
            .into_response(),
        None => not_found("image").into_response(),
    }
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/study", get(info))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/result", get(result))
        .route("/sessions/{id}/questionnaire", post(questionnaire))
        .route("/browse", get(browse))
        .route("/stats/histogram", get(histogram))
        .route("/images/{hash}", get(image))
        .with_state(svc)
}

pub async fn serve(svc: Shared, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.at(format!("bind {addr}"))?;
    axum::serve(listener, router(svc)).await.at(format!("serve {addr}"))
}
