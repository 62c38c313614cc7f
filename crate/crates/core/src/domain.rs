//! Three-way domain classification (train / taxi / others) over the whole
//! dialogue context, and attraction-domain data augmentation.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, LabeledCorpus, Speaker, Turn};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::linear::{argmax, LinearModel, TrainConfig, TrainReport};
use crate::model_file::{ModelFile, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainLabel {
    Train,
    Taxi,
    Others,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 3] = [DomainLabel::Train, DomainLabel::Taxi, DomainLabel::Others];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// KB domain searched directly for this label; `None` for `Others`.
    pub fn kb_domain(self) -> Option<&'static str> {
        match self {
            DomainLabel::Train => Some("train"),
            DomainLabel::Taxi => Some("taxi"),
            DomainLabel::Others => None,
        }
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainLabel::Train => "train",
            DomainLabel::Taxi => "taxi",
            DomainLabel::Others => "others",
        })
    }
}

/// Train and taxi keep their own class; every entity-bearing domain is
/// merged into `Others`.
pub fn gold_domain_label(domain: &str) -> DomainLabel {
    match domain.to_lowercase().as_str() {
        "train" => DomainLabel::Train,
        "taxi" => DomainLabel::Taxi,
        _ => DomainLabel::Others,
    }
}

pub trait DomainScorer: Send + Sync {
    /// Probability per class, indexed by [`DomainLabel::index`].
    fn distribution(&self, d: &Dialogue) -> Result<[f64; 3]>;
}

impl DomainScorer for LinearModel {
    fn distribution(&self, d: &Dialogue) -> Result<[f64; 3]> {
        let p = LinearModel::distribution(self, &d.render());
        p.try_into()
            .map_err(|_| Error::Config("domain model must have exactly three outputs".into()))
    }
}

#[derive(Clone)]
pub struct DomainClassifier {
    scorer: Arc<dyn DomainScorer>,
}

impl fmt::Debug for DomainClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainClassifier").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainPrediction {
    pub label: DomainLabel,
    pub distribution: [f64; 3],
}

impl DomainClassifier {
    pub fn new(scorer: Arc<dyn DomainScorer>) -> Self {
        DomainClassifier { scorer }
    }

    pub fn from_file(file: ModelFile) -> Result<(Self, Arc<LinearModel>)> {
        let file = file.expect_kind(ModelKind::Domain)?;
        if file.model.classes != 3 {
            return Err(Error::ModelFormat("domain model must have three outputs".into()));
        }
        let model = Arc::new(file.model);
        Ok((DomainClassifier::new(model.clone()), model))
    }

    pub fn to_file(model: &LinearModel) -> ModelFile {
        ModelFile {
            kind: ModelKind::Domain,
            threshold: None,
            model: model.clone(),
        }
    }

    pub fn classify(&self, d: &Dialogue) -> Result<DomainPrediction> {
        let distribution = self.scorer.distribution(d)?;
        let sum: f64 = distribution.iter().sum();
        if distribution.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Protocol(format!(
                "domain scorer returned an invalid distribution {distribution:?}"
            )));
        }
        Ok(DomainPrediction {
            label: DomainLabel::ALL[argmax(&distribution)],
            distribution,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainProvenance {
    Corpus,
    AttractionAugmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSample {
    pub context: Dialogue,
    pub label: DomainLabel,
    pub provenance: DomainProvenance,
}

pub const ATTRACTION_SLOT: &str = "attraction-name";

/// Annotated slot value inside one turn, in character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub slot: String,
}

/// Per dialogue, per turn, the annotated spans.
pub type SlotAnnotations = Vec<Vec<Vec<SlotSpan>>>;

/// For every source dialogue that carries an attraction-name span, swap in a
/// random attraction entity from the KB and replace the final user turn with
/// one of that entity's FAQ questions. All outputs are labelled `Others`.
pub fn augment_attraction_dialogues(
    source: &[Dialogue],
    slots: &SlotAnnotations,
    kb: &KnowledgeBase,
    seed: u64,
) -> Result<Vec<DomainSample>> {
    if source.len() != slots.len() {
        return Err(Error::Alignment {
            left: source.len(),
            right: slots.len(),
        });
    }
    if !kb.has_domain("attraction") {
        return Err(Error::MissingDomain("attraction".into()));
    }
    let pool: Vec<_> = kb
        .named_entities()
        .filter(|(d, e)| *d == "attraction" && !e.docs.is_empty())
        .map(|(_, e)| e)
        .collect();
    if pool.is_empty() {
        return Err(Error::MissingDomain("attraction".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, (dialogue, turn_spans)) in source.iter().zip(slots).enumerate() {
        if turn_spans.len() != dialogue.len() {
            return Err(Error::Validation(format!(
                "dialogue {i}: {} turns but {} span lists",
                dialogue.len(),
                turn_spans.len()
            )));
        }
        let has_attraction = turn_spans
            .iter()
            .flatten()
            .any(|s| s.slot == ATTRACTION_SLOT);
        if !has_attraction {
            continue;
        }
        let entity = pool[rng.gen_range(0..pool.len())];
        let name = entity.name.as_deref().unwrap_or_default();
        let question = &entity.docs[rng.gen_range(0..entity.docs.len())].question;

        let mut turns: Vec<Turn> = Vec::with_capacity(dialogue.len());
        for (t, (turn, spans)) in dialogue.turns().iter().zip(turn_spans).enumerate() {
            let text = substitute_spans(&turn.text, spans, name)
                .map_err(|e| Error::Validation(format!("dialogue {i} turn {t}: {e}")))?;
            turns.push(Turn {
                speaker: turn.speaker,
                text,
            });
        }
        let last = turns.last_mut().expect("dialogue is non-empty");
        debug_assert_eq!(last.speaker, Speaker::User);
        last.text = question.clone();
        out.push(DomainSample {
            context: Dialogue::new(turns)?,
            label: DomainLabel::Others,
            provenance: DomainProvenance::AttractionAugmented,
        });
    }
    Ok(out)
}

fn substitute_spans(text: &str, spans: &[SlotSpan], value: &str) -> std::result::Result<String, String> {
    let mut spans: Vec<&SlotSpan> = spans.iter().filter(|s| s.slot == ATTRACTION_SLOT).collect();
    if spans.is_empty() {
        return Ok(text.to_string());
    }
    spans.sort_by_key(|s| s.char_start);
    let chars = text.chars().count();
    let mut prev_end = 0;
    for s in &spans {
        if s.char_start > s.char_end || s.char_end > chars || s.char_start < prev_end {
            return Err(format!(
                "span {}..{} is out of bounds or overlapping",
                s.char_start, s.char_end
            ));
        }
        prev_end = s.char_end;
    }
    let byte_at = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
    let mut out = String::with_capacity(text.len() + value.len());
    let mut cursor = 0;
    for s in spans {
        let (b0, b1) = (byte_at(s.char_start), byte_at(s.char_end));
        out.push_str(&text[cursor..b0]);
        out.push_str(value);
        cursor = b1;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Train the built-in softmax scorer on labelled dialogues.
pub fn train_domain_classifier(
    samples: &[DomainSample],
    cfg: &TrainConfig,
) -> Result<(DomainClassifier, Arc<LinearModel>, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::DegenerateTraining("no domain samples".into()));
    }
    let pairs: Vec<(String, usize)> = samples
        .iter()
        .map(|s| (s.context.render(), s.label.index()))
        .collect();
    let (model, report) = LinearModel::train_multiclass(&pairs, 3, cfg)?;
    let model = Arc::new(model);
    Ok((DomainClassifier::new(model.clone()), model, report))
}

/// Knowledge-seeking samples labelled by the domain of their first gold snippet.
pub fn corpus_samples(corpus: &LabeledCorpus) -> Vec<DomainSample> {
    corpus
        .dialogues()
        .zip(corpus.labels())
        .filter_map(|(d, l)| {
            l.gold_knowledge().first().map(|r| DomainSample {
                context: d.clone(),
                label: gold_domain_label(&r.domain),
                provenance: DomainProvenance::Corpus,
            })
        })
        .collect()
}
