//! Knowledge matching: score candidate snippets against a dialogue context.
//!
//! The built-in scorer is a linear combination of four lexical features,
//! learned with a pairwise hinge loss over positives and sampled negatives.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{render_turns, Dialogue, LabeledCorpus};
use crate::entity::{normalize_entity_name, normalize_utterance, EntityTracker};
use crate::error::{Error, Result};
use crate::kb::{EntityRef, KnowledgeBase, SnippetRef, DOMAIN_LEVEL_ENTITY};
use crate::linear::{LinearModel, TrainReport};
use crate::model_file::{ModelFile, ModelKind};
use crate::text::word_tokens;

/// Separates the fields of a flattened ranking input.
pub const SEPARATOR: &str = " </s> ";
pub const DEFAULT_CONTEXT_TOKENS: usize = 128;
pub const FEATURE_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankInput {
    /// One `Speaker: text` line per turn.
    pub context_text: String,
    pub domain: String,
    pub entity_name: Option<String>,
    pub question: String,
    pub answer: String,
}

impl RankInput {
    /// Context, domain, entity name (when present), question and answer
    /// joined by [`SEPARATOR`].
    pub fn flatten(&self) -> String {
        let mut parts: Vec<&str> = vec![&self.context_text, &self.domain];
        if let Some(name) = &self.entity_name {
            parts.push(name);
        }
        parts.push(&self.question);
        parts.push(&self.answer);
        parts.join(SEPARATOR)
    }

    /// Inverse of [`RankInput::flatten`].
    pub fn from_flat(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(SEPARATOR).collect();
        let (context, domain, entity, question, answer) = match parts.as_slice() {
            [c, d, q, a] => (c, d, None, q, a),
            [c, d, e, q, a] => (c, d, Some(e.to_string()), q, a),
            _ => {
                return Err(Error::Protocol(format!(
                    "flattened ranking input has {} fields",
                    parts.len()
                )))
            }
        };
        Ok(RankInput {
            context_text: context.to_string(),
            domain: domain.to_string(),
            entity_name: entity,
            question: question.to_string(),
            answer: answer.to_string(),
        })
    }

    /// Text of the last `User:` line of the context.
    pub fn last_user_utterance(&self) -> &str {
        self.context_text
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("User: "))
            .unwrap_or(&self.context_text)
    }

    /// The last two context lines with their speaker tags removed.
    pub fn recent_exchange(&self) -> String {
        let lines: Vec<&str> = self.context_text.lines().collect();
        let start = lines.len().saturating_sub(2);
        lines[start..]
            .iter()
            .map(|l| l.split_once(": ").map_or(*l, |(_, t)| t))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn build_input(d: &Dialogue, r: &SnippetRef, kb: &KnowledgeBase, context_tokens: usize) -> Result<RankInput> {
    let snippet = kb.resolve(r)?;
    let entity = kb
        .entity(&r.domain, &r.entity_id)
        .ok_or_else(|| Error::Lookup(format!("unknown entity {}", r.entity())))?;
    let context_text = render_turns(&d.context_window(context_tokens));
    let sanitize = |s: &str| s.replace(SEPARATOR.trim(), " ");
    Ok(RankInput {
        context_text: sanitize(&context_text),
        domain: r.domain.clone(),
        entity_name: if r.entity_id == DOMAIN_LEVEL_ENTITY {
            None
        } else {
            entity.name.as_deref().map(sanitize)
        },
        question: sanitize(&snippet.question),
        answer: sanitize(&snippet.answer),
    })
}

pub trait RelevanceScorer: Send + Sync {
    fn score(&self, input: &RankInput) -> Result<f64>;
}

/// Smoothed TF-IDF over the KB's question+answer documents.
#[derive(Clone)]
pub struct TfIdf {
    idf: HashMap<String, f64>,
    unseen_idf: f64,
}

impl TfIdf {
    pub fn fit(kb: &KnowledgeBase) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for (_, _, sn) in kb.iter() {
            n += 1;
            let terms: HashSet<String> = word_tokens(&format!("{} {}", sn.question, sn.answer))
                .into_iter()
                .collect();
            for t in terms {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((n as f64 + 1.0) / (d as f64 + 1.0)).ln() + 1.0))
            .collect();
        TfIdf {
            idf,
            unseen_idf: (n as f64 + 1.0).ln() + 1.0,
        }
    }

    /// Term weights in term order, so sums over them are reproducible.
    fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut v: BTreeMap<String, f64> = BTreeMap::new();
        for t in word_tokens(text) {
            *v.entry(t).or_insert(0.0) += 1.0;
        }
        for (t, w) in v.iter_mut() {
            *w *= self.idf.get(t).copied().unwrap_or(self.unseen_idf);
        }
        v
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let dot: f64 = va
            .iter()
            .filter_map(|(t, x)| vb.get(t).map(|y| x * y))
            .sum();
        let na: f64 = va.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

impl fmt::Debug for TfIdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TfIdf")
            .field("terms", &self.idf.len())
            .field("unseen_idf", &self.unseen_idf)
            .finish()
    }
}

/// Built-in relevance scorer: `w · features(input)`.
#[derive(Debug, Clone)]
pub struct LexicalRanker {
    tfidf: Arc<TfIdf>,
    pub weights: [f64; FEATURE_COUNT],
}

impl LexicalRanker {
    pub fn new(kb: &KnowledgeBase, weights: [f64; FEATURE_COUNT]) -> Self {
        LexicalRanker {
            tfidf: Arc::new(TfIdf::fit(kb)),
            weights,
        }
    }

    pub fn with_weights(&self, weights: [f64; FEATURE_COUNT]) -> Self {
        LexicalRanker {
            tfidf: self.tfidf.clone(),
            weights,
        }
    }

    /// `[cos(context, Q+A), cos(last user utterance, Q), entity named in the
    /// recent exchange, question-length prior]`
    pub fn features(&self, input: &RankInput) -> [f64; FEATURE_COUNT] {
        let qa = format!("{} {}", input.question, input.answer);
        let context_qa = self.tfidf.cosine(&input.context_text, &qa);
        let query_q = self.tfidf.cosine(input.last_user_utterance(), &input.question);
        let entity = match &input.entity_name {
            Some(name) => {
                let name = normalize_utterance(&normalize_entity_name(name));
                let recent = normalize_utterance(&input.recent_exchange());
                f64::from(contains_phrase(&recent, &name))
            }
            None => 0.0,
        };
        let q_len = word_tokens(&input.question).len() as f64;
        let length_prior = 1.0 / (1.0 + (1.0 + q_len).ln());
        [context_qa, query_q, entity, length_prior]
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            kind: ModelKind::Ranker,
            threshold: None,
            model: LinearModel {
                dim: FEATURE_COUNT,
                classes: 1,
                bias: vec![0.0],
                weights: self.weights.to_vec(),
            },
        }
    }

    pub fn from_file(file: ModelFile, kb: &KnowledgeBase) -> Result<Self> {
        let file = file.expect_kind(ModelKind::Ranker)?;
        let weights: [f64; FEATURE_COUNT] = file
            .model
            .weights
            .as_slice()
            .try_into()
            .map_err(|_| Error::ModelFormat(format!("ranker needs {FEATURE_COUNT} weights")))?;
        Ok(LexicalRanker::new(kb, weights))
    }
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    let hay: Vec<&str> = haystack.split_whitespace().collect();
    let needle: Vec<&str> = phrase.split_whitespace().collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

fn dot(w: &[f64; FEATURE_COUNT], f: &[f64; FEATURE_COUNT]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

impl RelevanceScorer for LexicalRanker {
    fn score(&self, input: &RankInput) -> Result<f64> {
        Ok(dot(&self.weights, &self.features(input)))
    }
}

/// Candidates ordered by non-increasing score.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RankedCandidates {
    pub items: Vec<(SnippetRef, f64)>,
}

impl RankedCandidates {
    pub fn top(&self) -> Option<&SnippetRef> {
        self.items.first().map(|(r, _)| r)
    }

    pub fn refs(&self) -> impl Iterator<Item = &SnippetRef> {
        self.items.iter().map(|(r, _)| r)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Score every candidate and sort by descending score; equal scores keep
/// their input order. Duplicate refs are scored once.
pub fn rank(
    scorer: &dyn RelevanceScorer,
    d: &Dialogue,
    candidates: &[SnippetRef],
    kb: &KnowledgeBase,
    context_tokens: usize,
) -> Result<RankedCandidates> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut seen = HashSet::with_capacity(candidates.len());
    let mut items = Vec::with_capacity(candidates.len());
    for r in candidates {
        if !seen.insert(r) {
            continue;
        }
        let input = build_input(d, r, kb, context_tokens)?;
        items.push((r.clone(), scorer.score(&input)?));
    }
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(RankedCandidates { items })
}

/// Pairwise ranking loss `max(0, margin - s_pos + s_neg)`.
pub fn hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - s_pos + s_neg).max(0.0)
}

/// Strategy `i` (index `i-1` in `ratios`):
/// 1. any snippet in the KB;
/// 2. snippets of other entities in the positive's domain;
/// 3. other snippets of the positive's entity;
/// 4. snippets of other entities mentioned in the same dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegativeSamplingConfig {
    pub ratios: [f64; 4],
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for NegativeSamplingConfig {
    fn default() -> Self {
        NegativeSamplingConfig {
            ratios: [0.1, 0.1, 0.1, 0.7],
            negatives_per_positive: 4,
            seed: 17,
        }
    }
}

impl NegativeSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("sampling ratios must lie in [0, 1]".into()));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("sampling ratios sum to {sum}, not 1")));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawnNegative {
    pub snippet: SnippetRef,
    /// Strategy chosen by the ratio draw (1-based).
    pub drawn_strategy: usize,
    /// Strategy whose pool supplied the snippet after fallback.
    pub used_strategy: usize,
}

/// Pools for mixed negative sampling over one knowledge base.
pub struct NegativeSampler<'a> {
    kb: &'a KnowledgeBase,
    all: Vec<SnippetRef>,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        NegativeSampler {
            kb,
            all: kb.all_refs(),
        }
    }

    fn pool(&self, strategy: usize, positive: &SnippetRef, mentioned: &[EntityRef]) -> Vec<SnippetRef> {
        let gt = positive.entity();
        let keep = |r: &SnippetRef| r != positive;
        match strategy {
            1 => self.all.iter().filter(|r| keep(r)).cloned().collect(),
            2 => self
                .all
                .iter()
                .filter(|r| r.domain == positive.domain && r.entity_id != positive.entity_id)
                .cloned()
                .collect(),
            3 => self.kb.entity_refs(&gt).unwrap_or_default().into_iter().filter(keep).collect(),
            _ => {
                let mut seen = HashSet::new();
                mentioned
                    .iter()
                    .filter(|e| **e != gt && seen.insert((*e).clone()))
                    .flat_map(|e| self.kb.entity_refs(e).unwrap_or_default())
                    .filter(keep)
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng>(
        &self,
        positive: &SnippetRef,
        mentioned: &[EntityRef],
        cfg: &NegativeSamplingConfig,
        rng: &mut R,
    ) -> Result<Vec<DrawnNegative>> {
        cfg.validate()?;
        let mut pools: [Option<Vec<SnippetRef>>; 4] = Default::default();
        let mut out = Vec::with_capacity(cfg.negatives_per_positive);
        for _ in 0..cfg.negatives_per_positive {
            let drawn = draw_strategy(&cfg.ratios, rng);
            let mut used = drawn;
            loop {
                let pool = pools[used - 1].get_or_insert_with(|| self.pool(used, positive, mentioned));
                if !pool.is_empty() {
                    let pick = pool[rng.gen_range(0..pool.len())].clone();
                    out.push(DrawnNegative {
                        snippet: pick,
                        drawn_strategy: drawn,
                        used_strategy: used,
                    });
                    break;
                }
                if used == 1 {
                    return Err(Error::DegenerateTraining(
                        "knowledge base has no snippet other than the positive".into(),
                    ));
                }
                used -= 1;
            }
        }
        Ok(out)
    }
}

fn draw_strategy<R: Rng>(ratios: &[f64; 4], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 1;
    for (i, p) in ratios.iter().enumerate() {
        if *p > 0.0 {
            last_nonzero = i + 1;
        }
        acc += p;
        if u < acc && *p > 0.0 {
            return i + 1;
        }
    }
    last_nonzero
}

/// Draw `cfg.negatives_per_positive` negatives for one positive, seeded by
/// `cfg.seed`.
pub fn sample_negatives(
    positive: &SnippetRef,
    kb: &KnowledgeBase,
    mentioned: &[EntityRef],
    cfg: &NegativeSamplingConfig,
) -> Result<Vec<SnippetRef>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(NegativeSampler::new(kb)
        .sample(positive, mentioned, cfg, &mut rng)?
        .into_iter()
        .map(|n| n.snippet)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub context_tokens: usize,
    pub sampling: NegativeSamplingConfig,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            margin: 1.0,
            epochs: 10,
            learning_rate: 0.1,
            context_tokens: DEFAULT_CONTEXT_TOKENS,
            sampling: NegativeSamplingConfig::default(),
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("hinge margin must be positive".into()));
        }
        if self.epochs == 0 || !(self.learning_rate > 0.0) || self.context_tokens == 0 {
            return Err(Error::Config(
                "epochs, learning_rate and context_tokens must be positive".into(),
            ));
        }
        self.sampling.validate()
    }
}

impl fmt::Display for RankerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "margin={} epochs={} lr={} ratios={:?} negatives={}",
            self.margin, self.epochs, self.learning_rate, self.sampling.ratios, self.sampling.negatives_per_positive
        )
    }
}

/// Learn the lexical scorer's weights by pairwise hinge-loss SGD. Each epoch
/// redraws the negatives of every positive.
pub fn train_ranker(
    positives: &[(Dialogue, SnippetRef)],
    kb: &KnowledgeBase,
    tracker: &EntityTracker,
    cfg: &RankerConfig,
) -> Result<(LexicalRanker, TrainReport)> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::DegenerateTraining("no positive training pairs".into()));
    }
    let base = LexicalRanker::new(kb, [0.0; FEATURE_COUNT]);
    let sampler = NegativeSampler::new(kb);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampling.seed);

    struct Prepared<'d> {
        dialogue: &'d Dialogue,
        positive: SnippetRef,
        features: [f64; FEATURE_COUNT],
        mentioned: Vec<EntityRef>,
    }
    let prepared = positives
        .iter()
        .map(|(d, r)| {
            let input = build_input(d, r, kb, cfg.context_tokens)?;
            Ok(Prepared {
                dialogue: d,
                positive: r.clone(),
                features: base.features(&input),
                mentioned: tracker.all_mentions(d).into_iter().map(|m| m.entity_ref).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut weights = [0.0; FEATURE_COUNT];
    let mut feature_cache: HashMap<(usize, SnippetRef), [f64; FEATURE_COUNT]> = HashMap::new();
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut pairs) = (0.0, 0usize);
        for &i in &order {
            let p = &prepared[i];
            let negatives = sampler.sample(&p.positive, &p.mentioned, &cfg.sampling, &mut rng)?;
            for neg in negatives {
                let key = (i, neg.snippet);
                let f_neg = match feature_cache.get(&key) {
                    Some(f) => *f,
                    None => {
                        let input = build_input(p.dialogue, &key.1, kb, cfg.context_tokens)?;
                        let f = base.features(&input);
                        feature_cache.insert(key, f);
                        f
                    }
                };
                let loss = hinge_loss(dot(&weights, &p.features), dot(&weights, &f_neg), cfg.margin);
                total += loss;
                pairs += 1;
                if loss > 0.0 {
                    for k in 0..FEATURE_COUNT {
                        weights[k] += cfg.learning_rate * (p.features[k] - f_neg[k]);
                    }
                }
            }
        }
        curve.push(total / pairs as f64);
    }

    let ranker = base.with_weights(weights);
    // Training accuracy: fraction of positives ranked first among their own
    // entity's snippets (or domain for domain-level knowledge).
    let mut correct = 0usize;
    for p in &prepared {
        let cands = kb.entity_refs(&p.positive.entity())?;
        let ranked = rank(&ranker, p.dialogue, &cands, kb, cfg.context_tokens)?;
        correct += usize::from(ranked.top() == Some(&p.positive));
    }
    Ok((
        ranker,
        TrainReport {
            loss_curve: curve,
            train_accuracy: correct as f64 / prepared.len() as f64,
        },
    ))
}

/// Knowledge-seeking samples paired with their first gold snippet.
pub fn corpus_positives(corpus: &LabeledCorpus) -> Vec<(Dialogue, SnippetRef)> {
    corpus
        .dialogues()
        .zip(corpus.labels())
        .filter_map(|(d, l)| l.gold_knowledge().first().map(|r| (d.clone(), r.clone())))
        .collect()
}
