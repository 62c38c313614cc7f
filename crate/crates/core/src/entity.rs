//! Entity-name normalization and fuzzy n-gram entity tracking.
//!
//! Every knowledge-base entity name is normalized once. Each utterance of a
//! dialogue is normalized the same way (minus place-name stripping), then
//! every window of `n` tokens is compared with every `n`-token entity name
//! using the `2M/T` ratio, where `M` is the length of the longest common
//! substring and `T` the combined length. Windows above the threshold count
//! as mentions; the three most recently mentioned entities are returned.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dialogue::Dialogue;
use crate::kb::{EntityRef, KnowledgeBase};
use crate::text::{collapse_whitespace, spell_out_numbers};

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.95;
pub const MAX_TRACKED_ENTITIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    /// Place names stripped from the end of entity names.
    pub place_names: Vec<String>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            place_names: vec![
                "Fisherman's Wharf".to_string(),
                "San Francisco".to_string(),
                "Cambridge".to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub threshold: f64,
    /// Restrict the scan to the most recent turns fitting this many
    /// whitespace tokens. `None` scans the whole dialogue.
    pub context_tokens: Option<usize>,
    pub normalization: NormalizationConfig,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            threshold: DEFAULT_MATCH_THRESHOLD,
            context_tokens: None,
            normalization: NormalizationConfig::default(),
        }
    }
}

/// Normalize an entity name with the default place-name list.
pub fn normalize_entity_name(name: &str) -> String {
    normalize_entity_name_with(name, &NormalizationConfig::default())
}

pub fn normalize_entity_name_with(name: &str, cfg: &NormalizationConfig) -> String {
    let mut s = collapse_whitespace(name);
    s = replace_ampersand(&s);
    s = keep_first_part(&s);
    s = split_guesthouse(&s);
    s = strip_trailing_places(&s, &cfg.place_names);
    s = spell_out_numbers(&s);
    collapse_whitespace(&s.to_lowercase())
}

/// Utterance-side normalization: ampersand, guesthouse and number rules,
/// lowercase, and punctuation (except apostrophes) turned into spaces.
pub fn normalize_utterance(text: &str) -> String {
    let s = replace_ampersand(text);
    let s = split_guesthouse(&s);
    let s = spell_out_numbers(&s);
    matchable(&s)
}

fn matchable(s: &str) -> String {
    let spaced: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    collapse_whitespace(&spaced)
}

fn replace_ampersand(s: &str) -> String {
    if s.contains('&') {
        collapse_whitespace(&s.replace('&', " and "))
    } else {
        s.to_string()
    }
}

fn keep_first_part(s: &str) -> String {
    let cut = [" - ", ", ", "/"]
        .iter()
        .filter_map(|sep| s.find(sep))
        .min();
    match cut {
        Some(pos) if !s[..pos].trim().is_empty() => s[..pos].trim().to_string(),
        _ => s.to_string(),
    }
}

fn split_guesthouse(s: &str) -> String {
    const NEEDLE: &str = "guesthouse";
    let lower = s.to_lowercase();
    if lower.len() != s.len() || !lower.contains(NEEDLE) {
        // Byte offsets only line up when lowercasing keeps lengths.
        return if lower.contains(NEEDLE) {
            lower.replace(NEEDLE, "guest house")
        } else {
            s.to_string()
        };
    }
    let mut out = String::with_capacity(s.len() + 4);
    let mut last = 0;
    for (pos, _) in lower.match_indices(NEEDLE) {
        out.push_str(&s[last..pos]);
        let orig = &s[pos..pos + NEEDLE.len()];
        out.push_str(&orig[..5]);
        out.push(' ');
        out.push_str(&orig[5..]);
        last = pos + NEEDLE.len();
    }
    out.push_str(&s[last..]);
    out
}

fn strip_trailing_places(s: &str, places: &[String]) -> String {
    let mut current = s.to_string();
    loop {
        let lower = current.to_lowercase();
        let mut stripped = None;
        for place in places {
            let place = collapse_whitespace(&place.to_lowercase());
            if place.is_empty() || lower.len() <= place.len() || !lower.ends_with(&place) {
                continue;
            }
            let head = &lower[..lower.len() - place.len()];
            if head.ends_with(' ') && current.is_char_boundary(head.len()) {
                let rest = current[..head.len()].trim_end();
                if !rest.is_empty() {
                    stripped = Some(rest.to_string());
                    break;
                }
            }
        }
        match stripped {
            Some(next) if lower.len() == current.len() => current = next,
            _ => return current,
        }
    }
}

/// `2M/T` where `M` is the character length of the longest contiguous
/// common substring and `T` the summed character lengths.
pub fn match_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    ratio_chars(&a, &b)
}

fn ratio_chars(a: &[char], b: &[char]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * longest_common_substring(a, b) as f64 / total as f64
}

pub(crate) fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEntity {
    pub entity_ref: EntityRef,
    pub surface: String,
    pub normalized: String,
    pub token_count: usize,
    match_form: Vec<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityMention {
    pub entity_ref: EntityRef,
    /// Character offset of the match in the normalized context, utterances
    /// joined by a single newline.
    pub char_start: usize,
    pub ratio: f64,
}

/// Normalized names of every named entity in a knowledge base, grouped for
/// window matching. Built once per knowledge base.
#[derive(Debug, Clone)]
pub struct EntityTracker {
    entities: Vec<NormalizedEntity>,
    /// token count → entity indices sorted by match-form length
    by_tokens: HashMap<usize, Vec<usize>>,
    exact: HashMap<String, Vec<usize>>,
    config: TrackingConfig,
}

impl EntityTracker {
    pub fn new(kb: &KnowledgeBase, config: TrackingConfig) -> Self {
        let mut entities = Vec::new();
        for (domain, record) in kb.named_entities() {
            let surface = record.name.clone().unwrap_or_default();
            let normalized = normalize_entity_name_with(&surface, &config.normalization);
            let form = matchable(&normalized);
            let token_count = form.split(' ').filter(|t| !t.is_empty()).count();
            if token_count == 0 {
                continue;
            }
            entities.push(NormalizedEntity {
                entity_ref: EntityRef::new(domain, record.entity_id.clone()),
                surface,
                normalized,
                token_count,
                match_form: form.chars().collect(),
            });
        }
        let mut by_tokens: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            by_tokens.entry(e.token_count).or_default().push(i);
            exact
                .entry(e.match_form.iter().collect())
                .or_default()
                .push(i);
        }
        for idx in by_tokens.values_mut() {
            idx.sort_by_key(|&i| (entities[i].match_form.len(), i));
        }
        EntityTracker {
            entities,
            by_tokens,
            exact,
            config,
        }
    }

    pub fn entities(&self) -> &[NormalizedEntity] {
        &self.entities
    }

    pub fn config(&self) -> &TrackingConfig {
        &self.config
    }

    /// Every entity mentioned anywhere in the scanned context, one
    /// (last) mention per entity, ordered by offset.
    pub fn all_mentions(&self, d: &Dialogue) -> Vec<EntityMention> {
        let turns = match self.config.context_tokens {
            Some(budget) => d.context_window(budget),
            None => d.turns().to_vec(),
        };
        let threshold = self.config.threshold;
        let mut last: HashMap<usize, (usize, f64)> = HashMap::new();
        let mut base = 0usize;
        for turn in &turns {
            let norm: Vec<char> = normalize_utterance(&turn.text).chars().collect();
            let tokens = token_spans(&norm);
            for (&n, candidates) in &self.by_tokens {
                if tokens.len() < n {
                    continue;
                }
                for w in 0..=tokens.len() - n {
                    let (start, _) = tokens[w];
                    let (_, end) = tokens[w + n - 1];
                    let window = &norm[start..end];
                    for (ent, ratio) in self.matches(window, candidates, threshold) {
                        let offset = base + start;
                        let slot = last.entry(ent).or_insert((offset, ratio));
                        if offset >= slot.0 {
                            *slot = (offset, ratio);
                        }
                    }
                }
            }
            base += norm.len() + 1;
        }
        let mut mentions: Vec<(usize, usize, f64)> =
            last.into_iter().map(|(e, (off, r))| (e, off, r)).collect();
        mentions.sort_by(|a, b| self.mention_order(a.0, a.1, b.0, b.1));
        mentions
            .into_iter()
            .map(|(e, off, ratio)| EntityMention {
                entity_ref: self.entities[e].entity_ref.clone(),
                char_start: off,
                ratio,
            })
            .collect()
    }

    /// The (at most three) most recently mentioned entities, ordered by
    /// ascending offset of their last mention.
    pub fn track(&self, d: &Dialogue) -> Vec<EntityMention> {
        let all = self.all_mentions(d);
        let mut by_priority: Vec<(usize, EntityMention)> = all.into_iter().enumerate().collect();
        // Ascending order puts ties longer-name-first, so among equal
        // offsets earlier entries have priority.
        by_priority.sort_by(|(ia, a), (ib, b)| b.char_start.cmp(&a.char_start).then(ia.cmp(ib)));
        by_priority.truncate(MAX_TRACKED_ENTITIES);
        by_priority.sort_by_key(|(i, _)| *i);
        by_priority.into_iter().map(|(_, m)| m).collect()
    }

    fn mention_order(&self, ea: usize, oa: usize, eb: usize, ob: usize) -> std::cmp::Ordering {
        let (a, b) = (&self.entities[ea], &self.entities[eb]);
        oa.cmp(&ob)
            .then(b.normalized.chars().count().cmp(&a.normalized.chars().count()))
            .then(a.entity_ref.entity_id.cmp(&b.entity_ref.entity_id))
            .then(a.entity_ref.domain.cmp(&b.entity_ref.domain))
    }

    fn matches(&self, window: &[char], candidates: &[usize], threshold: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if threshold < 1.0 {
            let lw = window.len();
            // 2·min(la,lb)/(la+lb) bounds the ratio from above.
            for &i in candidates {
                let form = &self.entities[i].match_form;
                let le = form.len();
                let total = lw + le;
                if 2.0 * lw.min(le) as f64 / total as f64 <= threshold {
                    if le > lw {
                        break;
                    }
                    continue;
                }
                let needed = (threshold * total as f64 / 2.0).floor() as usize + 1;
                if shared_chars(window, form) < needed {
                    continue;
                }
                let ratio = ratio_chars(window, form);
                if ratio > threshold {
                    out.push((i, ratio));
                }
            }
        } else {
            let key: String = window.iter().collect();
            if let Some(hits) = self.exact.get(&key) {
                out.extend(hits.iter().map(|&i| (i, 1.0)).filter(|_| 1.0 > threshold));
            }
        }
        out
    }
}

fn token_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, chars.len()));
    }
    spans
}

/// Size of the multiset intersection of characters; an upper bound on any
/// common substring length.
fn shared_chars(a: &[char], b: &[char]) -> usize {
    let mut counts: HashMap<char, i32> = HashMap::with_capacity(32);
    for &c in a {
        *counts.entry(c).or_insert(0) += 1;
    }
    let mut shared = 0;
    for &c in b {
        if let Some(n) = counts.get_mut(&c) {
            if *n > 0 {
                *n -= 1;
                shared += 1;
            }
        }
    }
    shared
}

/// Track entities with the default configuration.
pub fn track_entities(kb: &KnowledgeBase, d: &Dialogue) -> Vec<EntityMention> {
    EntityTracker::new(kb, TrackingConfig::default()).track(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Turn;
    use crate::kb::Snippet;
    use proptest::prelude::*;

    #[test]
    fn normalization_rules_individually() {
        assert_eq!(normalize_entity_name("Bay Subs & Deli"), "bay subs and deli");
        assert_eq!(normalize_entity_name("Hard Knox Cafe - Potrero Hill"), "hard knox cafe");
        assert_eq!(normalize_entity_name("ARBURY LODGE GUESTHOUSE"), "arbury lodge guest house");
        assert_eq!(normalize_entity_name("Bay Bridge Inn San Francisco"), "bay bridge inn");
        assert_eq!(normalize_entity_name("Pho Huynh Hiep 2"), "pho huynh hiep two");
        assert_eq!(normalize_entity_name("plain name"), "plain name");
        assert_eq!(normalize_entity_name("Cafe Jello, Gallery"), "cafe jello");
        assert_eq!(normalize_entity_name("A/B Bar"), "a");
        assert_eq!(normalize_entity_name("Pier 39 Fisherman's Wharf"), "pier thirty nine");
        assert_eq!(normalize_entity_name("San Francisco"), "san francisco");
    }

    #[test]
    fn place_list_is_configurable() {
        let cfg = NormalizationConfig {
            place_names: vec!["Soho".into()],
        };
        assert_eq!(normalize_entity_name_with("Corner Cafe Soho", &cfg), "corner cafe");
        assert_eq!(
            normalize_entity_name_with("Bay Bridge Inn San Francisco", &cfg),
            "bay bridge inn san francisco"
        );
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(match_ratio("hotel inn", "hotel inn"), 1.0);
        assert_eq!(match_ratio("abcd", "abce"), 0.75);
        assert_eq!(match_ratio("xxxx", "yyyy"), 0.0);
    }

    fn kb_with(names: &[(&str, &str, &str)]) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for (domain, id, name) in names {
            kb.add_entity(domain, id, Some(name.to_string())).unwrap();
            kb.insert_snippet(domain, id, "0", Snippet { question: "q".into(), answer: "a".into() })
                .unwrap();
        }
        kb
    }

    #[test]
    fn verbatim_mention_has_ratio_one() {
        let kb = kb_with(&[("attraction", "1", "Funky Fun House")]);
        let d = Dialogue::new(vec![
            Turn::agent("How about funky fun house, they are located at 8 mercers row."),
            Turn::user("Could I also get the phone number?"),
        ])
        .unwrap();
        let m = track_entities(&kb, &d);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].ratio, 1.0);
        assert_eq!(m[0].char_start, "how about ".len());
    }

    #[test]
    fn no_mention_gives_empty() {
        let kb = kb_with(&[("hotel", "1", "Lensfield Hotel")]);
        let d = Dialogue::new(vec![Turn::user("I need a train to London")]).unwrap();
        assert!(track_entities(&kb, &d).is_empty());
    }

    #[test]
    fn keeps_three_latest() {
        let kb = kb_with(&[
            ("hotel", "1", "Alder Lodge"),
            ("hotel", "2", "Birch Court"),
            ("restaurant", "3", "Copper Kettle"),
            ("restaurant", "4", "Driftwood Grill"),
        ]);
        let d = Dialogue::new(vec![
            Turn::user("Tell me about Alder Lodge."),
            Turn::agent("Birch Court is nice, Copper Kettle too."),
            Turn::user("And Driftwood Grill? Also Birch Court again."),
        ])
        .unwrap();
        let m = track_entities(&kb, &d);
        let ids: Vec<&str> = m.iter().map(|x| x.entity_ref.entity_id.as_str()).collect();
        assert_eq!(ids, ["3", "4", "2"]);
        assert!(m.windows(2).all(|w| w[0].char_start <= w[1].char_start));
    }

    #[test]
    fn fuzzy_window_above_threshold() {
        let kb = kb_with(&[("hotel", "1", "Alexander Bed and Breakfast")]);
        let d = Dialogue::new(vec![Turn::user("is the alexander bed and breakfasts nice")]).unwrap();
        let m = track_entities(&kb, &d);
        assert_eq!(m.len(), 1);
        assert!(m[0].ratio > 0.95 && m[0].ratio < 1.0);
    }

    #[test]
    fn equal_offsets_prefer_longer_names() {
        let kb = kb_with(&[
            ("hotel", "a", "Rose Garden Hotel"),
            ("hotel", "b", "Rose Garden"),
            ("hotel", "c", "Birch Court"),
            ("hotel", "d", "Alder Lodge"),
        ]);
        let d = Dialogue::new(vec![Turn::user(
            "Alder Lodge or Birch Court, or the Rose Garden Hotel",
        )])
        .unwrap();
        let all = EntityTracker::new(&kb, TrackingConfig::default()).all_mentions(&d);
        let ids: Vec<&str> = all.iter().map(|x| x.entity_ref.entity_id.as_str()).collect();
        assert_eq!(ids, ["d", "c", "a", "b"]);
        let top = track_entities(&kb, &d);
        let ids: Vec<&str> = top.iter().map(|x| x.entity_ref.entity_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    proptest! {
        #[test]
        fn ratio_symmetric_and_bounded(a in "[a-e ]{0,12}", b in "[a-e ]{0,12}") {
            let r = match_ratio(&a, &b);
            prop_assert_eq!(r, match_ratio(&b, &a));
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn normalization_idempotent(s in "[A-Za-z0-9&/,' -]{1,40}") {
            let once = normalize_entity_name(&s);
            prop_assert_eq!(normalize_entity_name(&once), once.clone());
        }

        #[test]
        fn exact_substring_always_detected(
            prefix in "[a-z]{1,6}( [a-z]{1,6}){0,3}",
            suffix in "[a-z]{1,6}( [a-z]{1,6}){0,3}",
        ) {
            let kb = kb_with(&[("hotel", "1", "Quillfeather Manor")]);
            let text = format!("{prefix} quillfeather manor {suffix}");
            let d = Dialogue::new(vec![Turn::user(text)]).unwrap();
            let m = track_entities(&kb, &d);
            prop_assert_eq!(m.len(), 1);
            prop_assert_eq!(m[0].ratio, 1.0);
        }
    }
}
