//! "Name that dataset" human study: question sampling, answers and
//! accuracy statistics. Timestamps are supplied by the caller.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::hash::{hash64, hash64_pair, Hasher64};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub datasets: Vec<String>,
    pub browse_per_dataset: usize,
    pub questions: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            datasets: ["yfcc", "cc", "datacomp"].map(String::from).to_vec(),
            browse_per_dataset: 500,
            questions: 100,
            seed: 0,
        }
    }
}

/// Candidate image ids of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPool {
    pub dataset_id: String,
    /// Labeled training images users may browse.
    pub train: Vec<String>,
    /// Held-out images questions are drawn from.
    pub validation: Vec<String>,
}

/// Splits `total` into `k` shares differing by at most one; with equal
/// remainders the extra units go to the highest indices (100 / 3 → 33, 33, 34).
pub fn balanced_quotas(total: usize, k: usize) -> Vec<usize> {
    let (base, extra) = (total / k, total % k);
    (0..k).map(|i| base + usize::from(i >= k - extra)).collect()
}

/// A study: fixed browse pools plus the validation candidates questions are
/// drawn from (never overlapping the browse pools).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    browse: Vec<Vec<String>>,
    candidates: Vec<Vec<String>>,
}

impl Study {
    pub fn new(config: StudyConfig, pools: &[DatasetPool]) -> Result<Self, StudyError> {
        if config.datasets.len() < 2 {
            return Err(StudyError::TooFewDatasets);
        }
        let quotas = balanced_quotas(config.questions, config.datasets.len());
        let mut browse = Vec::new();
        let mut candidates = Vec::new();
        for (d, id) in config.datasets.iter().enumerate() {
            let pool = pools
                .iter()
                .find(|p| &p.dataset_id == id)
                .ok_or_else(|| StudyError::InsufficientImages { dataset: id.clone(), need: quotas[d], have: 0 })?;
            let mut train = pool.train.clone();
            train.sort();
            train.dedup();
            let n = config.browse_per_dataset.min(train.len());
            CounterRng::new(hash64(config.seed, &format!("browse/{id}"))).partial_shuffle(&mut train, n);
            train.truncate(n);
            train.sort();
            let shown: BTreeSet<&String> = train.iter().collect();
            let mut val: Vec<String> = pool.validation.iter().filter(|v| !shown.contains(v)).cloned().collect();
            val.sort();
            val.dedup();
            if val.len() < quotas[d] {
                return Err(StudyError::InsufficientImages { dataset: id.clone(), need: quotas[d], have: val.len() });
            }
            browse.push(train);
            candidates.push(val);
        }
        Ok(Self { config, browse, candidates })
    }

    pub fn datasets(&self) -> &[String] {
        &self.config.datasets
    }

    pub fn dataset_index(&self, dataset_id: &str) -> Option<usize> {
        self.config.datasets.iter().position(|d| d == dataset_id)
    }

    pub fn browse_pool(&self, dataset: usize) -> &[String] {
        &self.browse[dataset]
    }

    pub fn browse_page(&self, dataset: usize, page: usize, page_size: usize) -> &[String] {
        let pool = &self.browse[dataset];
        let start = (page * page_size).min(pool.len());
        &pool[start..(start + page_size).min(pool.len())]
    }

    /// Balanced, seeded by `(study seed, user_id)`.
    pub fn create_session(&self, session_id: impl Into<String>, user_id: impl Into<String>) -> StudySession {
        let session_id = session_id.into();
        let user_id = user_id.into();
        let key = hash64(self.config.seed, &user_id);
        let quotas = balanced_quotas(self.config.questions, self.config.datasets.len());
        let mut questions = Vec::with_capacity(self.config.questions);
        for (d, &quota) in quotas.iter().enumerate() {
            let mut pool = self.candidates[d].clone();
            CounterRng::new(hash64_pair(key, d as u64)).partial_shuffle(&mut pool, quota);
            questions.extend(pool.into_iter().take(quota).map(|image_id| (image_id, d)));
        }
        CounterRng::new(key).fork(u64::MAX).shuffle(&mut questions);
        let questions = questions
            .into_iter()
            .map(|(image_id, dataset)| {
                let question_id =
                    format!("{:016x}", Hasher64::new().str(&session_id).str(&image_id).finish());
                Question { question_id, image_id, dataset }
            })
            .collect();
        StudySession {
            session_id,
            user_id,
            datasets: self.config.datasets.clone(),
            questions,
            answers: Vec::new(),
            questionnaire: None,
            status: SessionStatus::Active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    /// Opaque id shown to the participant instead of the image id.
    pub question_id: String,
    pub image_id: String,
    /// Ground truth as an index into the session's datasets.
    pub dataset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub image_id: String,
    pub choice: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Questionnaire {
    /// Participant's guess of a trained model's accuracy, in percent.
    pub expected_model_accuracy: Option<f64>,
    /// 1 (easy) to 5 (hard).
    pub difficulty: Option<u8>,
    pub patterns: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub session_id: String,
    pub user_id: String,
    pub datasets: Vec<String>,
    pub questions: Vec<Question>,
    pub answers: Vec<Answer>,
    pub questionnaire: Option<Questionnaire>,
    pub status: SessionStatus,
}

impl StudySession {
    pub fn is_answered(&self, question_id: &str) -> bool {
        self.answers.iter().any(|a| a.question_id == question_id)
    }

    /// First unanswered question in session order.
    pub fn next_question(&self) -> Option<&Question> {
        self.questions.iter().find(|q| !self.is_answered(&q.question_id))
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    /// Records an answer; the session completes with the last one.
    pub fn submit_answer(&mut self, question_id: &str, choice: &str, timestamp_ms: u64) -> Result<&Answer, StudyError> {
        if self.status != SessionStatus::Active {
            return Err(StudyError::NotActive);
        }
        let image_id = self
            .question(question_id)
            .ok_or_else(|| StudyError::UnknownImage(question_id.into()))?
            .image_id
            .clone();
        if self.is_answered(question_id) {
            return Err(StudyError::DuplicateAnswer(question_id.into()));
        }
        if !self.datasets.iter().any(|d| d == choice) {
            return Err(StudyError::InvalidChoice(choice.into()));
        }
        self.answers.push(Answer { question_id: question_id.into(), image_id, choice: choice.into(), timestamp_ms });
        if self.answers.len() == self.questions.len() {
            self.status = SessionStatus::Completed;
        }
        Ok(self.answers.last().expect("just pushed"))
    }

    pub fn set_questionnaire(&mut self, q: Questionnaire) {
        self.questionnaire = Some(q);
    }

    pub fn accuracy(&self) -> Result<SessionAccuracy, StudyError> {
        if self.status != SessionStatus::Completed {
            return Err(StudyError::NotCompleted);
        }
        let mut per_dataset: Vec<DatasetAccuracy> = self
            .datasets
            .iter()
            .map(|d| DatasetAccuracy { dataset: d.clone(), correct: 0, total: 0, accuracy: 0.0 })
            .collect();
        for a in &self.answers {
            let q = self.question(&a.question_id).expect("answers reference questions");
            let row = &mut per_dataset[q.dataset];
            row.total += 1;
            row.correct += usize::from(self.datasets[q.dataset] == a.choice);
        }
        for row in &mut per_dataset {
            row.accuracy = if row.total == 0 { 0.0 } else { row.correct as f64 / row.total as f64 * 100.0 };
        }
        let correct: usize = per_dataset.iter().map(|r| r.correct).sum();
        let total = self.answers.len();
        Ok(SessionAccuracy { accuracy: correct as f64 / total as f64 * 100.0, correct, total, per_dataset })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAccuracy {
    pub dataset: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionAccuracy {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_dataset: Vec<DatasetAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Half-open `[lo, hi)` bins covering `[0, 100]`; 100 falls in the last.
    pub bins: Vec<HistogramBin>,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

impl Histogram {
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.bins.iter().filter(|b| b.lo >= lo && b.hi <= hi).map(|b| b.count).sum()
    }
}

/// Histogram of session accuracies (percent).
pub fn aggregate_histogram(accuracies: &[f64], bin_width: f64) -> Result<Histogram, StudyError> {
    if accuracies.is_empty() {
        return Err(StudyError::NoSessions);
    }
    let n_bins = libm::ceil(100.0 / bin_width) as usize;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin { lo: i as f64 * bin_width, hi: ((i + 1) as f64 * bin_width).min(100.0), count: 0 })
        .collect();
    for &a in accuracies {
        let i = ((a.clamp(0.0, 100.0) / bin_width) as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    Ok(Histogram { bin_width, bins, n, mean, median })
}
