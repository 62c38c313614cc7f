//! Training every built-in model from a labelled corpus, and keeping the
//! resulting model files together in one directory.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::detection::{self, augment_detection_data, tune_threshold, DetectionModel, ThresholdChoice};
use crate::dialogue::LabeledCorpus;
use crate::domain::{self, DomainClassifier};
use crate::entity::{EntityTracker, TrackingConfig};
use crate::error::{Error, Result};
use crate::gateway::BuiltinHandler;
use crate::kb::KnowledgeBase;
use crate::linear::{LinearModel, TrainConfig, TrainReport};
use crate::model_file::{ModelFile, ModelKind};
use crate::pipeline::Models;
use crate::ranker::{corpus_positives, train_ranker, LexicalRanker, RankerConfig};

pub const DETECTOR_FILE: &str = "detector.kgsm";
pub const DOMAIN_FILE: &str = "domain.kgsm";
pub const RANKER_FILE: &str = "ranker.kgsm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub detector: TrainConfig,
    /// Add KB questions (and their "it" variants) as detection positives.
    pub augment_detection: bool,
    pub domain: TrainConfig,
    pub ranker: RankerConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            detector: TrainConfig::default(),
            augment_detection: true,
            domain: TrainConfig::default(),
            ranker: RankerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub detector: TrainReport,
    pub threshold: ThresholdChoice,
    pub domain: TrainReport,
    pub ranker: TrainReport,
}

/// The three built-in models and the tuned detection threshold.
#[derive(Debug, Clone)]
pub struct BuiltinModels {
    pub detector: Arc<LinearModel>,
    pub threshold: f64,
    pub domain: Arc<LinearModel>,
    pub ranker: Arc<LexicalRanker>,
}

impl BuiltinModels {
    pub fn models(&self) -> Result<Models> {
        Ok(Models {
            detector: DetectionModel::new(self.detector.clone(), self.threshold)?,
            domain: DomainClassifier::new(self.domain.clone()),
            ranker: self.ranker.clone(),
            generator: None,
        })
    }

    /// Gateway handler that answers with these models.
    pub fn handler(&self) -> BuiltinHandler {
        BuiltinHandler {
            detector: Some(self.detector.clone()),
            domain: Some(self.domain.clone()),
            ranker: Some(self.ranker.clone()),
            follow_up: None,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let det = ModelFile {
            kind: ModelKind::Detector,
            threshold: Some(self.threshold),
            model: (*self.detector).clone(),
        };
        det.save(dir.join(DETECTOR_FILE))?;
        DomainClassifier::to_file(&self.domain).save(dir.join(DOMAIN_FILE))?;
        self.ranker.to_file().save(dir.join(RANKER_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            ModelFile::load(&path).map_err(|e| match e {
                Error::Io(io) => Error::Validation(format!("cannot read {}: {io}", path.display())),
                other => other,
            })
        };
        let (det, detector) = DetectionModel::from_file(read(DETECTOR_FILE)?)?;
        let (_, domain) = DomainClassifier::from_file(read(DOMAIN_FILE)?)?;
        let ranker = LexicalRanker::from_file(read(RANKER_FILE)?, kb)?;
        Ok(BuiltinModels {
            detector,
            threshold: det.threshold(),
            domain,
            ranker: Arc::new(ranker),
        })
    }
}

/// Detection training samples: corpus utterances, plus KB questions when
/// `augment` is set.
pub fn detection_training_set(kb: &KnowledgeBase, train: &LabeledCorpus, augment: bool) -> Vec<detection::DetectionSample> {
    let mut samples = detection::corpus_samples(train);
    if augment {
        samples.extend(augment_detection_data(kb));
    }
    samples
}

/// Train the detector and tune its threshold on `validation`.
pub fn train_detector(
    kb: &KnowledgeBase,
    train: &LabeledCorpus,
    validation: &LabeledCorpus,
    cfg: &TrainingConfig,
) -> Result<(Arc<LinearModel>, ThresholdChoice, TrainReport)> {
    let samples = detection_training_set(kb, train, cfg.augment_detection);
    let (_, model, report) = detection::train_detector(&samples, &cfg.detector, 0.5)?;
    let pairs = detection::validation_pairs(validation);
    let scores: Vec<f64> = pairs.iter().map(|(u, _)| model.probability(u)).collect();
    let labels: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
    let choice = tune_threshold(&scores, &labels)?;
    Ok((model, choice, report))
}

pub fn train_builtin(
    kb: &KnowledgeBase,
    train: &LabeledCorpus,
    validation: &LabeledCorpus,
    cfg: &TrainingConfig,
    tracking: &TrackingConfig,
) -> Result<(BuiltinModels, TrainingSummary)> {
    let (detector, threshold, det_report) = train_detector(kb, train, validation, cfg)?;
    let (_, domain, dom_report) = domain::train_domain_classifier(&domain::corpus_samples(train), &cfg.domain)?;
    let tracker = EntityTracker::new(kb, tracking.clone());
    let (ranker, rank_report) = train_ranker(&corpus_positives(train), kb, &tracker, &cfg.ranker)?;
    Ok((
        BuiltinModels {
            detector,
            threshold: threshold.threshold,
            domain,
            ranker: Arc::new(ranker),
        },
        TrainingSummary {
            detector: det_report,
            threshold,
            domain: dom_report,
            ranker: rank_report,
        },
    ))
}
