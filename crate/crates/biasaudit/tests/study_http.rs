use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use biasaudit::config::DatasetEntry;
use biasaudit::study_server::{router, StudyService, StudyServiceConfig};
use biasaudit_core::study::StudyConfig;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower::ServiceExt;

const DATASETS: [&str; 3] = ["yfcc", "cc", "datacomp"];

fn config() -> StudyServiceConfig {
    StudyServiceConfig {
        study: StudyConfig {
            datasets: DATASETS.map(String::from).to_vec(),
            browse_per_dataset: 50,
            questions: 100,
            seed: 11,
        },
        datasets: DATASETS
            .iter()
            .zip(["alpha", "beta", "gamma"])
            .map(|(id, style)| DatasetEntry::synthetic(id, style, 120, 3))
            .collect(),
        n_train: 60,
        n_val: 40,
        split_seed: 2,
    }
}

fn service(dir: &Path) -> Arc<StudyService> {
    Arc::new(StudyService::from_config(&config(), Some(dir)).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, user: &str) -> String {
    let (status, v) = json_call(app, "POST", "/sessions", Some(json!({ "user_id": user }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

/// The server's hidden truth for a question, read directly from the service.
fn truth(svc: &StudyService, session: &str, question_id: &str) -> (String, String) {
    let s = svc.session(session).unwrap();
    let s = s.lock().unwrap();
    let q = s.question(question_id).unwrap();
    (s.datasets[q.dataset].clone(), q.image_id.clone())
}

fn assert_no_truth(question: &Value, truth: &(String, String)) {
    let keys: BTreeSet<&str> = question.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["question_id", "index", "image", "image_url"]));
    for field in ["question_id", "image", "image_url"] {
        let v = question[field].as_str().unwrap();
        assert!(!v.contains(&truth.1), "{field} exposes the image id");
        assert!(!DATASETS.contains(&v), "{field} is a dataset name");
    }
    assert!(question["image_url"].as_str().unwrap().starts_with("/images/"));
}

/// Answers every remaining question, picking the wrong dataset every third
/// time. Returns the hand-counted number of correct answers.
async fn answer_all(app: &Router, svc: &StudyService, session: &str) -> usize {
    let mut correct = 0;
    let mut i = 0;
    loop {
        let (status, next) = json_call(app, "GET", &format!("/sessions/{session}/next"), None).await;
        assert_eq!(status, StatusCode::OK);
        if next["question"].is_null() {
            break;
        }
        let qid = next["question"]["question_id"].as_str().unwrap().to_string();
        let t = truth(svc, session, &qid);
        assert_no_truth(&next["question"], &t);
        let choice = if i % 3 == 0 { DATASETS.iter().find(|d| **d != t.0).unwrap().to_string() } else { t.0.clone() };
        correct += usize::from(choice == t.0);
        let (status, after) =
            json_call(app, "POST", &format!("/sessions/{session}/answers"), Some(json!({ "question_id": qid, "choice": choice }))).await;
        assert_eq!(status, StatusCode::OK, "{after}");
        if !after["question"].is_null() {
            let next_q = after["question"]["question_id"].as_str().unwrap();
            assert_no_truth(&after["question"], &truth(svc, session, next_q));
        }
        i += 1;
    }
    assert_eq!(i, 100);
    correct
}

#[tokio::test]
async fn hundred_question_session_scores_like_a_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let app = router(svc.clone());

    let (_, info) = json_call(&app, "GET", "/study", None).await;
    assert_eq!(info["questions"], 100);
    let session = create(&app, "participant-1").await;
    let (_, view) = json_call(&app, "GET", &format!("/sessions/{session}"), None).await;
    assert_eq!(view["total"], 100);
    assert_eq!(view["answered"], 0);

    let correct = answer_all(&app, &svc, &session).await;
    let (status, result) = json_call(&app, "GET", &format!("/sessions/{session}/result"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(result["correct"], correct);
    assert_eq!(result["total"], 100);
    assert!((result["accuracy"].as_f64().unwrap() - correct as f64).abs() < 1e-9);
    let per: Vec<u64> = result["per_dataset"].as_array().unwrap().iter().map(|d| d["total"].as_u64().unwrap()).collect();
    assert_eq!(per, [33, 33, 34]);
    let revealed = result["answers"].as_array().unwrap();
    assert_eq!(revealed.len(), 100);
    let hand: usize = revealed.iter().filter(|a| a["choice"] == a["truth"]).count();
    assert_eq!(hand, correct);

    let (status, h) = json_call(&app, "GET", "/stats/histogram?bin_width=10", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h["n"], 1);
    assert_eq!(h["bins"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn restart_restores_a_half_finished_session() {
    let dir = tempfile::tempdir().unwrap();
    let session;
    let current;
    {
        let svc = service(dir.path());
        let app = router(svc.clone());
        session = create(&app, "resumer").await;
        for _ in 0..37 {
            let (_, next) = json_call(&app, "GET", &format!("/sessions/{session}/next"), None).await;
            let qid = next["question"]["question_id"].as_str().unwrap().to_string();
            let body = json!({ "question_id": qid, "choice": "cc" });
            assert_eq!(call(&app, "POST", &format!("/sessions/{session}/answers"), Some(body)).await.0, StatusCode::OK);
        }
        let q = json!({ "expected_model_accuracy": 60.0, "difficulty": 4, "patterns": "colour casts" });
        assert_eq!(call(&app, "POST", &format!("/sessions/{session}/questionnaire"), Some(q)).await.0, StatusCode::OK);
        current = json_call(&app, "GET", &format!("/sessions/{session}"), None).await.1;
    }
    let svc = service(dir.path());
    let app = router(svc.clone());
    let (status, restored) = json_call(&app, "GET", &format!("/sessions/{session}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(restored, current);
    assert_eq!(restored["answered"], 37);
    assert_eq!(restored["questionnaire"]["difficulty"], 4);
    let url = restored["current"]["image_url"].as_str().unwrap();
    assert_eq!(call(&app, "GET", url, None).await.0, StatusCode::OK);
    answer_all_remaining(&app, &session).await;
    assert_eq!(json_call(&app, "GET", &format!("/sessions/{session}/result"), None).await.0, StatusCode::OK);
}

async fn answer_all_remaining(app: &Router, session: &str) {
    loop {
        let (_, next) = json_call(app, "GET", &format!("/sessions/{session}/next"), None).await;
        let Some(qid) = next["question"]["question_id"].as_str() else { break };
        let body = json!({ "question_id": qid, "choice": "yfcc" });
        assert_eq!(call(app, "POST", &format!("/sessions/{session}/answers"), Some(body)).await.0, StatusCode::OK);
    }
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(service(dir.path()));
    assert_eq!(call(&app, "GET", "/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/stats/histogram", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/stats/histogram?bin_width=0", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/browse?dataset=laion", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", &format!("/images/{}", "0".repeat(64)), None).await.0, StatusCode::NOT_FOUND);
    let (status, _) = json_call(&app, "POST", "/sessions", Some(json!({ "user_id": "alice@example.com" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let s = create(&app, "errs").await;
    let (_, next) = json_call(&app, "GET", &format!("/sessions/{s}/next"), None).await;
    let qid = next["question"]["question_id"].as_str().unwrap().to_string();
    let answer = |choice: &str| Some(json!({ "question_id": qid, "choice": choice }));
    let uri = format!("/sessions/{s}/answers");
    assert_eq!(call(&app, "POST", &uri, answer("laion")).await.0, StatusCode::BAD_REQUEST);
    let (status, first) = json_call(&app, "POST", &uri, answer("cc")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, again) = json_call(&app, "POST", &uri, answer("cc")).await;
    assert_eq!((status, &again), (StatusCode::OK, &first));
    assert_eq!(again["answered"], 1);
    let (status, err) = json_call(&app, "POST", &uri, answer("yfcc")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(err["error"].is_string());
    let unknown = Some(json!({ "question_id": "q-unknown", "choice": "cc" }));
    assert_eq!(call(&app, "POST", &uri, unknown).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", &format!("/sessions/{s}/result"), None).await.0, StatusCode::CONFLICT);
    let q = Some(json!({ "difficulty": 9 }));
    assert_eq!(call(&app, "POST", &format!("/sessions/{s}/questionnaire"), q).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn browse_pages_serve_content_addressed_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(service(dir.path()));
    let mut seen = BTreeSet::new();
    for page in 0..3 {
        let (status, p) = json_call(&app, "GET", &format!("/browse?dataset=cc&page={page}&page_size=24"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(p["total"], 50);
        for img in p["images"].as_array().unwrap() {
            assert!(seen.insert(img["image"].as_str().unwrap().to_string()));
        }
    }
    assert_eq!(seen.len(), 50);
    let hash = seen.iter().next().unwrap();
    let (status, bytes) = call(&app, "GET", &format!("/images/{hash}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&bytes[1..4], b"PNG");
    assert_eq!(&hex::encode(Sha256::digest(&bytes)), hash);
    let (_, clamped) = json_call(&app, "GET", "/browse?dataset=cc&page_size=5000", None).await;
    assert_eq!(clamped["page_size"], 200);
}

#[tokio::test]
async fn same_user_gets_the_same_questions() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let app = router(svc.clone());
    let a = create(&app, "repeat").await;
    let b = create(&app, "repeat").await;
    let c = create(&app, "someone-else").await;
    let images = |id: &str| -> Vec<String> {
        let s = svc.session(id).unwrap();
        let s = s.lock().unwrap();
        s.questions.iter().map(|q| q.image_id.clone()).collect()
    };
    assert_ne!(a, b);
    assert_eq!(images(&a), images(&b));
    assert_ne!(images(&a), images(&c));
    let (_, anon) = json_call(&app, "POST", "/sessions", None).await;
    assert_eq!(anon["user_id"].as_str().unwrap().len(), 32);
}
