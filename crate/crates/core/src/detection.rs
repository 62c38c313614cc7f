//! Knowledge-seeking turn detection.
//!
//! A turn is knowledge-seeking when the scorer's probability for its last
//! user utterance is strictly above the tuned threshold.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dialogue::LabeledCorpus;
use crate::entity::normalize_entity_name;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::linear::{LinearModel, TrainConfig, TrainReport};
use crate::model_file::{ModelFile, ModelKind};

/// Scores a single text. Built-in and gateway-backed scorers implement this.
pub trait TextScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64>;
}

impl TextScorer for LinearModel {
    fn score(&self, text: &str) -> Result<f64> {
        Ok(self.probability(text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Corpus,
    KbQuestion,
    KbQuestionItReplaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSample {
    pub utterance: String,
    pub label: bool,
    pub provenance: Provenance,
}

/// Every KB question as a positive sample, plus an "it" variant for each
/// question that names its own entity.
pub fn augment_detection_data(kb: &KnowledgeBase) -> Vec<DetectionSample> {
    let mut out = Vec::new();
    for (_, entity, snippet) in kb.iter() {
        out.push(DetectionSample {
            utterance: snippet.question.clone(),
            label: true,
            provenance: Provenance::KbQuestion,
        });
        let Some(surface) = entity.name.as_deref() else {
            continue;
        };
        let normalized = normalize_entity_name(surface);
        let replaced = replace_with_it(&snippet.question, surface)
            .or_else(|| replace_with_it(&snippet.question, &normalized));
        if let Some(utterance) = replaced {
            out.push(DetectionSample {
                utterance,
                label: true,
                provenance: Provenance::KbQuestionItReplaced,
            });
        }
    }
    out
}

/// Replace the first case-insensitive, word-bounded occurrence of `name`
/// (with a directly preceding "the") by "it".
pub(crate) fn replace_with_it(text: &str, name: &str) -> Option<String> {
    let name = name.trim();
    if name.is_empty() {
        return None;
    }
    let lower = text.to_lowercase();
    let needle = name.to_lowercase();
    if lower.len() != text.len() {
        return None;
    }
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    let mut from = 0;
    while let Some(rel) = lower[from..].find(&needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before = lower[..start].chars().next_back();
        let after = lower[end..].chars().next();
        if !is_word(before) && !is_word(after) {
            let mut cut = start;
            if lower[..start].ends_with("the ") {
                let art = start - 4;
                if !is_word(lower[..art].chars().next_back()) {
                    cut = art;
                }
            }
            let it = if cut == 0 { "It" } else { "it" };
            return Some(format!("{}{}{}", &text[..cut], it, &text[end..]));
        }
        from = start + needle.len().max(1);
        while !lower.is_char_boundary(from) {
            from += 1;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub score: f64,
    pub knowledge_seeking: bool,
}

/// Positive iff `p > threshold`.
pub fn decide(p: f64, threshold: f64) -> bool {
    p > threshold
}

#[derive(Clone)]
pub struct DetectionModel {
    scorer: Arc<dyn TextScorer>,
    threshold: f64,
}

impl std::fmt::Debug for DetectionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DetectionModel")
            .field("threshold", &self.threshold)
            .finish_non_exhaustive()
    }
}

impl DetectionModel {
    pub fn new(scorer: Arc<dyn TextScorer>, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(DetectionModel { scorer, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    pub fn scorer(&self) -> &Arc<dyn TextScorer> {
        &self.scorer
    }

    pub fn detect(&self, utterance: &str) -> Result<Detection> {
        let score = self.scorer.score(utterance)?;
        Ok(Detection {
            score,
            knowledge_seeking: decide(score, self.threshold),
        })
    }

    /// Score the validation items and move the threshold to the F1 optimum.
    pub fn tune(&mut self, validation: &[(String, bool)]) -> Result<ThresholdChoice> {
        let scores = validation
            .iter()
            .map(|(u, _)| self.scorer.score(u))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = validation.iter().map(|(_, y)| *y).collect();
        let choice = tune_threshold(&scores, &labels)?;
        self.threshold = choice.threshold;
        Ok(choice)
    }

    pub fn to_file(&self, model: &LinearModel) -> ModelFile {
        ModelFile {
            kind: ModelKind::Detector,
            threshold: Some(self.threshold),
            model: model.clone(),
        }
    }

    /// Built-in model from a persisted file.
    pub fn from_file(file: ModelFile) -> Result<(Self, Arc<LinearModel>)> {
        let file = file.expect_kind(ModelKind::Detector)?;
        let model = Arc::new(file.model);
        let det = DetectionModel::new(model.clone(), file.threshold.unwrap_or(0.5))?;
        Ok((det, model))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold {t} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// F1-optimal threshold over {0, 1} and the midpoints between adjacent
/// distinct scores. Ties go to the smallest threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::Alignment {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if !(labels.iter().any(|y| *y) && labels.iter().any(|y| !*y)) {
        return Err(Error::DegenerateValidation);
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    // positives_at_or_below[i] = positives among the first i sorted items
    let mut pos_prefix = Vec::with_capacity(pairs.len() + 1);
    pos_prefix.push(0usize);
    for (_, y) in &pairs {
        pos_prefix.push(pos_prefix.last().unwrap() + usize::from(*y));
    }
    let total_pos = *pos_prefix.last().unwrap();

    let mut candidates = vec![0.0, 1.0];
    for w in sorted.windows(2) {
        if w[0] != w[1] {
            candidates.push(w[0] + (w[1] - w[0]) / 2.0);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = ThresholdChoice {
        threshold: candidates[0],
        f1: f64::NEG_INFINITY,
    };
    for t in candidates {
        // Items with score > t are predicted positive.
        let below = sorted.partition_point(|s| *s <= t);
        let predicted = sorted.len() - below;
        let tp = total_pos - pos_prefix[below];
        let fp = predicted - tp;
        let fn_ = total_pos - tp;
        let f1 = f1_from_counts(tp, fp, fn_);
        if f1 > best.f1 {
            best = ThresholdChoice { threshold: t, f1 };
        }
    }
    Ok(best)
}

pub(crate) fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Train the built-in hashed n-gram logistic scorer.
pub fn train_detector(
    samples: &[DetectionSample],
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<(DetectionModel, Arc<LinearModel>, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::DegenerateTraining("no detection samples".into()));
    }
    let pairs: Vec<(String, bool)> = samples
        .iter()
        .map(|s| (s.utterance.clone(), s.label))
        .collect();
    let (model, report) = LinearModel::train_binary(&pairs, cfg)?;
    let model = Arc::new(model);
    let det = DetectionModel::new(model.clone(), threshold)?;
    Ok((det, model, report))
}

/// The final user utterance of every sample with its gold label.
pub fn corpus_samples(corpus: &LabeledCorpus) -> Vec<DetectionSample> {
    corpus
        .dialogues()
        .zip(corpus.labels())
        .map(|(d, l)| DetectionSample {
            utterance: d.last_user_utterance().to_string(),
            label: l.target,
            provenance: Provenance::Corpus,
        })
        .collect()
}

/// `(utterance, label)` pairs for threshold tuning.
pub fn validation_pairs(corpus: &LabeledCorpus) -> Vec<(String, bool)> {
    corpus_samples(corpus)
        .into_iter()
        .map(|s| (s.utterance, s.label))
        .collect()
}
