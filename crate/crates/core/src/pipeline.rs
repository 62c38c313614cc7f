//! End-to-end turn processing: detection, hierarchical candidate filtering,
//! ranking and grounded response generation.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionModel};
use crate::dialogue::{Dialogue, TurnLabel};
use crate::domain::{DomainClassifier, DomainLabel, DomainPrediction};
use crate::entity::{EntityTracker, NormalizationConfig, TrackingConfig, DEFAULT_MATCH_THRESHOLD};
use crate::error::{Error, Result, Stage};
use crate::kb::{EntityRef, KnowledgeBase, SnippetRef};
use crate::ranker::{rank, RankInput, RankedCandidates, RelevanceScorer, DEFAULT_CONTEXT_TOKENS};

pub const DEFAULT_FOLLOW_UP: &str = "Is there anything else I can help you with?";
/// Number of ranked snippets written per prediction.
pub const PREDICTION_DEPTH: usize = 5;

pub trait ResponseGenerator: Send + Sync {
    /// `context` is the rendered dialogue, `answer` the selected snippet's answer.
    fn generate(&self, context: &str, answer: &str) -> Result<String>;
}

/// The answer verbatim, then the follow-up sentence.
pub fn template_response(answer: &str, follow_up: &str) -> Result<String> {
    let answer = answer.trim();
    if answer.is_empty() {
        return Err(Error::Precondition("cannot ground a response on an empty answer".into()));
    }
    let follow_up = follow_up.trim();
    Ok(if follow_up.is_empty() {
        answer.to_string()
    } else {
        format!("{answer} {follow_up}")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Template,
    Gateway,
}

/// Candidates used when the turn is about hotels, restaurants or
/// attractions but no entity could be tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// Every snippet of every domain that has named entities.
    #[default]
    EntityDomains,
    /// Every snippet in the knowledge base.
    WholeKb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the threshold stored with the detector when set.
    pub detection_threshold: Option<f64>,
    pub entity_threshold: f64,
    /// Whitespace-token budget for entity tracking; `None` scans the whole dialogue.
    pub entity_context_tokens: Option<usize>,
    pub place_names: Vec<String>,
    pub fallback: FallbackPolicy,
    pub candidate_cap: Option<usize>,
    pub context_tokens: usize,
    pub generator: GeneratorMode,
    pub follow_up: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detection_threshold: None,
            entity_threshold: DEFAULT_MATCH_THRESHOLD,
            entity_context_tokens: None,
            place_names: NormalizationConfig::default().place_names,
            fallback: FallbackPolicy::EntityDomains,
            candidate_cap: None,
            context_tokens: DEFAULT_CONTEXT_TOKENS,
            generator: GeneratorMode::Template,
            follow_up: DEFAULT_FOLLOW_UP.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Some(t) = self.detection_threshold {
            if !in_unit(t) {
                return Err(Error::Config(format!("detection threshold {t} outside [0, 1]")));
            }
        }
        if !in_unit(self.entity_threshold) {
            return Err(Error::Config(format!(
                "entity threshold {} outside [0, 1]",
                self.entity_threshold
            )));
        }
        if self.candidate_cap == Some(0) {
            return Err(Error::Config("candidate cap must be at least 1".into()));
        }
        if self.context_tokens == 0 {
            return Err(Error::Config("context token budget must be at least 1".into()));
        }
        Ok(())
    }

    pub fn tracking(&self) -> TrackingConfig {
        TrackingConfig {
            threshold: self.entity_threshold,
            context_tokens: self.entity_context_tokens,
            normalization: NormalizationConfig {
                place_names: self.place_names.clone(),
            },
        }
    }
}

/// Models behind each stage. Built-in and gateway-backed implementations
/// are interchangeable.
#[derive(Clone)]
pub struct Models {
    pub detector: DetectionModel,
    pub domain: DomainClassifier,
    pub ranker: Arc<dyn RelevanceScorer>,
    /// Required in [`GeneratorMode::Gateway`].
    pub generator: Option<Arc<dyn ResponseGenerator>>,
}

impl fmt::Debug for Models {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Models")
            .field("detector", &self.detector)
            .field("domain", &self.domain)
            .field("generator", &self.generator.is_some())
            .finish_non_exhaustive()
    }
}

/// How the candidate set was narrowed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Route {
    /// Domain-level snippets of train or taxi.
    Domain { domain: String },
    /// Snippets of tracked entities, most recent mention first.
    Entities { entities: Vec<EntityRef> },
    /// Nothing tracked; see [`FallbackPolicy`].
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub domain: DomainPrediction,
    pub route: Route,
    pub ranked: RankedCandidates,
    /// Relevance-scorer invocations for this turn.
    pub scorer_calls: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTiming {
    pub detection: Duration,
    pub domain: Duration,
    pub entity: Duration,
    pub ranking: Duration,
    pub generation: Duration,
}

impl StageTiming {
    pub fn total(&self) -> Duration {
        self.detection + self.domain + self.entity + self.ranking + self.generation
    }

    fn add(&mut self, other: &StageTiming) {
        self.detection += other.detection;
        self.domain += other.domain;
        self.entity += other.entity;
        self.ranking += other.ranking;
        self.generation += other.generation;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnResult {
    pub knowledge_seeking: bool,
    pub detection: Detection,
    pub selected: Option<Selection>,
    pub response: Option<String>,
    pub timing: StageTiming,
    pub scorer_calls: usize,
}

impl TurnResult {
    /// The turn as a DSTC9-style label: top-ranked snippets and response.
    pub fn prediction(&self) -> TurnLabel {
        match (&self.selected, &self.response) {
            (Some(sel), Some(resp)) => TurnLabel::positive(
                sel.ranked.refs().take(PREDICTION_DEPTH).cloned().collect(),
                resp.clone(),
            ),
            _ => TurnLabel::negative(),
        }
    }
}

struct CountingScorer<'a> {
    inner: &'a dyn RelevanceScorer,
    calls: AtomicUsize,
}

impl RelevanceScorer for CountingScorer<'_> {
    fn score(&self, input: &RankInput) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(input)
    }
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

pub struct Pipeline<'kb> {
    kb: &'kb KnowledgeBase,
    tracker: EntityTracker,
    models: Models,
    config: PipelineConfig,
}

impl fmt::Debug for Pipeline<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("snippets", &self.kb.len())
            .field("models", &self.models)
            .field("config", &self.config)
            .finish()
    }
}

impl<'kb> Pipeline<'kb> {
    pub fn new(kb: &'kb KnowledgeBase, mut models: Models, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        if let Some(t) = config.detection_threshold {
            models.detector = models.detector.with_threshold(t)?;
        }
        if config.generator == GeneratorMode::Gateway && models.generator.is_none() {
            return Err(Error::Config("gateway generation selected but no generator configured".into()));
        }
        Ok(Pipeline {
            kb,
            tracker: EntityTracker::new(kb, config.tracking()),
            models,
            config,
        })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.kb
    }

    pub fn tracker(&self) -> &EntityTracker {
        &self.tracker
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Candidate snippets for a domain label and a most-recent-first list
    /// of entities. Entities are only consulted for [`DomainLabel::Others`].
    pub fn filter(&self, label: DomainLabel, entities: &[EntityRef]) -> Result<(Route, Vec<SnippetRef>)> {
        let (route, mut refs) = match label.kb_domain() {
            Some(domain) => {
                if !self.kb.has_domain(domain) {
                    return Err(Error::MissingDomain(domain.to_string()));
                }
                let refs = self.kb.candidates_for(domain, None)?;
                (Route::Domain { domain: domain.to_string() }, refs)
            }
            None if !entities.is_empty() => {
                let mut refs = Vec::new();
                for e in entities {
                    refs.extend(self.kb.entity_refs(e)?);
                }
                (
                    Route::Entities {
                        entities: entities.to_vec(),
                    },
                    refs,
                )
            }
            None => {
                let refs = match self.config.fallback {
                    FallbackPolicy::WholeKb => self.kb.all_refs(),
                    FallbackPolicy::EntityDomains => {
                        let mut refs = Vec::new();
                        for domain in self.entity_domains() {
                            refs.extend(self.kb.candidates_for(domain, None)?);
                        }
                        refs
                    }
                };
                (Route::Fallback, refs)
            }
        };
        if let Some(cap) = self.config.candidate_cap {
            refs.truncate(cap);
        }
        Ok((route, refs))
    }

    fn entity_domains(&self) -> Vec<&str> {
        self.kb
            .domain_names()
            .filter(|d| {
                self.kb
                    .entities(d)
                    .is_some_and(|mut es| es.any(|e| !e.is_domain_level()))
            })
            .collect()
    }

    /// Candidates when the gold domain and entity are known.
    pub fn oracle_candidates(&self, gold: &SnippetRef) -> Result<Vec<SnippetRef>> {
        let label = crate::domain::gold_domain_label(&gold.domain);
        self.filter(label, &[gold.entity()]).map(|(_, refs)| refs)
    }

    fn select_timed(&self, d: &Dialogue, timing: &mut StageTiming) -> Result<Selection> {
        let domain = timed(&mut timing.domain, || self.models.domain.classify(d))
            .map_err(|e| e.at(Stage::DomainClassification))?;
        let entities: Vec<EntityRef> = if domain.label == DomainLabel::Others {
            timed(&mut timing.entity, || self.tracker.track(d))
                .into_iter()
                .rev()
                .map(|m| m.entity_ref)
                .collect()
        } else {
            Vec::new()
        };
        let (route, candidates) = self
            .filter(domain.label, &entities)
            .map_err(|e| e.at(Stage::EntityTracking))?;
        let counter = CountingScorer {
            inner: self.models.ranker.as_ref(),
            calls: AtomicUsize::new(0),
        };
        let ranked = timed(&mut timing.ranking, || {
            rank(&counter, d, &candidates, self.kb, self.config.context_tokens)
        })
        .map_err(|e| e.at(Stage::Ranking))?;
        Ok(Selection {
            domain,
            route,
            ranked,
            scorer_calls: counter.calls.into_inner(),
        })
    }

    /// Classify the domain, narrow the candidates and rank them.
    pub fn select_knowledge(&self, d: &Dialogue) -> Result<Selection> {
        self.select_timed(d, &mut StageTiming::default())
    }

    pub fn generate_response(&self, d: &Dialogue, answer: &str) -> Result<String> {
        match self.config.generator {
            GeneratorMode::Template => template_response(answer, &self.config.follow_up),
            GeneratorMode::Gateway => {
                if answer.trim().is_empty() {
                    return Err(Error::Precondition("cannot ground a response on an empty answer".into()));
                }
                let generator = self
                    .models
                    .generator
                    .as_ref()
                    .ok_or_else(|| Error::Config("no generator configured".into()))?;
                generator.generate(&d.render(), answer)
            }
        }
    }

    pub fn run_turn(&self, d: &Dialogue) -> Result<TurnResult> {
        let mut timing = StageTiming::default();
        let detection = timed(&mut timing.detection, || {
            self.models.detector.detect(d.last_user_utterance())
        })
        .map_err(|e| e.at(Stage::Detection))?;
        if !detection.knowledge_seeking {
            return Ok(TurnResult {
                knowledge_seeking: false,
                detection,
                selected: None,
                response: None,
                timing,
                scorer_calls: 0,
            });
        }
        let selection = self.select_timed(d, &mut timing)?;
        let top = selection.ranked.top().ok_or(Error::EmptyCandidates)?;
        let answer = &self.kb.resolve(top)?.answer;
        let response = timed(&mut timing.generation, || self.generate_response(d, answer))
            .map_err(|e| e.at(Stage::Generation))?;
        Ok(TurnResult {
            knowledge_seeking: true,
            detection,
            scorer_calls: selection.scorer_calls,
            selected: Some(selection),
            response: Some(response),
            timing,
        })
    }

    /// Run every dialogue on `workers` threads (0 = rayon's default).
    /// Results keep input order; failures are recorded per sample.
    pub fn batch_run(&self, dialogues: &[Dialogue], workers: usize) -> Result<BatchOutput> {
        let start = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<TurnResult>> =
            pool.install(|| dialogues.par_iter().map(|d| self.run_turn(d)).collect());

        let mut report = BatchReport {
            samples: dialogues.len(),
            exhaustive_calls: dialogues.len() * self.kb.len(),
            ..BatchReport::default()
        };
        let mut stage_totals = StageTiming::default();
        for r in &results {
            match r {
                Ok(t) => {
                    report.succeeded += 1;
                    report.knowledge_seeking += usize::from(t.knowledge_seeking);
                    report.scorer_calls += t.scorer_calls;
                    stage_totals.add(&t.timing);
                }
                Err(_) => report.failed += 1,
            }
        }
        report.call_ratio = if report.exhaustive_calls == 0 {
            0.0
        } else {
            report.scorer_calls as f64 / report.exhaustive_calls as f64
        };
        report.stage_time = stage_totals;
        report.wall_time = start.elapsed();
        Ok(BatchOutput { results, report })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchReport {
    pub samples: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub knowledge_seeking: usize,
    /// Relevance-scorer invocations across all samples.
    pub scorer_calls: usize,
    /// Calls needed to score every snippet for every sample.
    pub exhaustive_calls: usize,
    pub call_ratio: f64,
    pub stage_time: StageTiming,
    pub wall_time: Duration,
}

impl fmt::Display for BatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "samples {}  ok {}  failed {}  knowledge-seeking {}",
            self.samples, self.succeeded, self.failed, self.knowledge_seeking
        )?;
        writeln!(
            f,
            "scorer calls {} of {} exhaustive (ratio {:.4})",
            self.scorer_calls, self.exhaustive_calls, self.call_ratio
        )?;
        let s = &self.stage_time;
        write!(
            f,
            "time: detection {:.3}s  domain {:.3}s  entity {:.3}s  ranking {:.3}s  generation {:.3}s  wall {:.3}s",
            s.detection.as_secs_f64(),
            s.domain.as_secs_f64(),
            s.entity.as_secs_f64(),
            s.ranking.as_secs_f64(),
            s.generation.as_secs_f64(),
            self.wall_time.as_secs_f64()
        )
    }
}

#[derive(Debug)]
pub struct BatchOutput {
    pub results: Vec<Result<TurnResult>>,
    pub report: BatchReport,
}

impl BatchOutput {
    /// One label per sample; failed samples are written as non-knowledge turns.
    pub fn predictions(&self) -> Vec<TurnLabel> {
        self.results
            .iter()
            .map(|r| r.as_ref().map_or_else(|_| TurnLabel::negative(), TurnResult::prediction))
            .collect()
    }

    pub fn errors(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }
}
