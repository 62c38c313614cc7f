//! Detection, selection and generation metrics, plus a paired t-test.
//!
//! Generation metrics tokenize with [`metric_tokens`]: lowercase, punctuation
//! detached into separate tokens, whitespace split. METEOR here is exact
//! match only (no stemming or synonyms) and is reported as METEOR-lite.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dialogue::TurnLabel;
use crate::error::{Error, Result};
use crate::kb::SnippetRef;
use crate::text::metric_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// False when no positive predictions were made (precision reported as 0).
    pub precision_defined: bool,
    /// False when there are no gold positives (recall reported as 0).
    pub recall_defined: bool,
}

/// Harmonic mean; 0 when both are 0.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn detection_metrics(preds: &[bool], golds: &[bool]) -> Result<DetectionReport> {
    if preds.len() != golds.len() {
        return Err(Error::Alignment {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Precondition("no samples to evaluate".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fn_ > 0;
    let precision = if precision_defined { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if recall_defined { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    Ok(DetectionReport {
        precision,
        recall,
        f1: harmonic_f1(precision, recall),
        tp,
        fp,
        fn_,
        tn,
        precision_defined,
        recall_defined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mrr_at_5: f64,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub n: usize,
}

/// 1-based position of the first candidate matching any gold ref.
pub fn first_gold_rank(ranked: &[SnippetRef], gold: &[SnippetRef]) -> Option<usize> {
    ranked.iter().position(|r| gold.contains(r)).map(|i| i + 1)
}

/// MRR@5, Recall@1 and Recall@5 over samples with gold knowledge. Any
/// listed gold ref counts as correct.
pub fn selection_metrics(ranked: &[Vec<SnippetRef>], golds: &[Vec<SnippetRef>]) -> Result<SelectionReport> {
    if ranked.len() != golds.len() {
        return Err(Error::Alignment {
            left: ranked.len(),
            right: golds.len(),
        });
    }
    let n = ranked.len();
    if n == 0 {
        return Ok(SelectionReport {
            mrr_at_5: 0.0,
            recall_at_1: 0.0,
            recall_at_5: 0.0,
            n: 0,
        });
    }
    let (mut mrr, mut r1, mut r5) = (0.0, 0.0, 0.0);
    for (cands, gold) in ranked.iter().zip(golds) {
        if let Some(r) = first_gold_rank(cands, gold) {
            if r <= 5 {
                mrr += 1.0 / r as f64;
                r5 += 1.0;
            }
            if r == 1 {
                r1 += 1.0;
            }
        }
    }
    let n_f = n as f64;
    Ok(SelectionReport {
        mrr_at_5: mrr / n_f,
        recall_at_1: r1 / n_f,
        recall_at_5: r5 / n_f,
        n,
    })
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-1..=`max_n` with clipped n-gram precision, brevity
/// penalty against the closest reference length, and add-one smoothing of
/// zero match counts for n ≥ 2.
pub fn bleu(hyp: &str, refs: &[&str], max_n: usize) -> Vec<f64> {
    let h = metric_tokens(hyp);
    let rs: Vec<Vec<String>> = refs.iter().map(|r| metric_tokens(r)).collect();
    bleu_tokens(&h, &rs, max_n)
}

pub(crate) fn bleu_tokens(h: &[String], refs: &[Vec<String>], max_n: usize) -> Vec<f64> {
    let c = h.len();
    if c == 0 || refs.is_empty() {
        return vec![0.0; max_n];
    }
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };

    let mut log_precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let hyp_counts = ngram_counts(h, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for rt in refs {
            for (g, k) in ngram_counts(rt, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let matched: usize = hyp_counts
            .iter()
            .map(|(g, k)| (*k).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c.saturating_sub(n - 1);
        let p = if n >= 2 && matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        log_precisions.push(if p > 0.0 { p.ln() } else { f64::NEG_INFINITY });
    }
    (1..=max_n)
        .map(|n| {
            let mean = log_precisions[..n].iter().sum::<f64>() / n as f64;
            if mean == f64::NEG_INFINITY {
                0.0
            } else {
                bp * mean.exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

/// ROUGE-1/2 F1 over clipped n-gram overlap and ROUGE-L F1 from the longest
/// common subsequence.
pub fn rouge(hyp: &str, reference: &str) -> RougeScores {
    let h = metric_tokens(hyp);
    let r = metric_tokens(reference);
    RougeScores {
        rouge_1: rouge_n(&h, &r, 1),
        rouge_2: rouge_n(&h, &r, 2),
        rouge_l: rouge_l(&h, &r),
    }
}

fn rouge_n(h: &[String], r: &[String], n: usize) -> f64 {
    let hc = ngram_counts(h, n);
    let rc = ngram_counts(r, n);
    let overlap: usize = hc
        .iter()
        .map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hc.values().sum::<usize>() as f64;
    let rec = overlap as f64 / rc.values().sum::<usize>() as f64;
    harmonic_f1(p, rec)
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l(h: &[String], r: &[String]) -> f64 {
    let lcs = lcs_len(h, r);
    if lcs == 0 {
        return 0.0;
    }
    harmonic_f1(lcs as f64 / h.len() as f64, lcs as f64 / r.len() as f64)
}

/// Exact-match METEOR: each hypothesis token aligns to the earliest unused
/// identical reference token; `Fmean = 10PR/(R+9P)`, fragmentation penalty
/// `0.5·(chunks/matches)³`.
pub fn meteor_lite(hyp: &str, reference: &str) -> f64 {
    meteor_tokens(&metric_tokens(hyp), &metric_tokens(reference))
}

pub(crate) fn meteor_tokens(h: &[String], r: &[String]) -> f64 {
    let mut used = vec![false; r.len()];
    let mut align: Vec<Option<usize>> = Vec::with_capacity(h.len());
    for tok in h {
        let j = (0..r.len()).find(|&j| !used[j] && r[j] == *tok);
        if let Some(j) = j {
            used[j] = true;
        }
        align.push(j);
    }
    let matches = align.iter().flatten().count();
    if matches == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &align {
        match (prev, a) {
            (Some(p), Some(j)) if *j == p + 1 => {}
            (_, Some(_)) => chunks += 1,
            _ => {}
        }
        prev = *a;
    }
    let m = matches as f64;
    let p = m / h.len() as f64;
    let rec = m / r.len() as f64;
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub meteor: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub n: usize,
}

/// Mean of sentence-level scores over aligned hypothesis/reference pairs.
pub fn generation_metrics(hyps: &[String], refs: &[String]) -> Result<GenerationReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Alignment {
            left: hyps.len(),
            right: refs.len(),
        });
    }
    let mut acc = [0.0f64; 8];
    for (h, r) in hyps.iter().zip(refs) {
        let b = bleu(h, &[r.as_str()], 4);
        let rg = rouge(h, r);
        let scores = [b[0], b[1], b[2], b[3], meteor_lite(h, r), rg.rouge_1, rg.rouge_2, rg.rouge_l];
        for (a, s) in acc.iter_mut().zip(scores) {
            *a += s;
        }
    }
    let n = hyps.len();
    let d = if n == 0 { 1.0 } else { n as f64 };
    Ok(GenerationReport {
        bleu_1: acc[0] / d,
        bleu_2: acc[1] / d,
        bleu_3: acc[2] / d,
        bleu_4: acc[3] / d,
        meteor: acc[4] / d,
        rouge_1: acc[5] / d,
        rouge_2: acc[6] / d,
        rouge_l: acc[7] / d,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// Two-sided paired t-test on `a - b`. Zero-variance differences give
/// `t = 0, p = 1` when their mean is zero and `t = ±∞, p = 0` otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Alignment {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, n }
        } else {
            TTest {
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
                n,
            }
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Detection,
    Selection,
    Generation,
    /// Detection over every sample; selection and generation only where
    /// both prediction and gold are knowledge-seeking.
    End2end,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" => Ok(EvalMode::Detection),
            "selection" => Ok(EvalMode::Selection),
            "generation" => Ok(EvalMode::Generation),
            "end2end" => Ok(EvalMode::End2end),
            other => Err(Error::Config(format!("unknown evaluation mode '{other}'"))),
        }
    }
}

/// Score predictions in the labels layout against gold labels.
///
/// Selection and generation cover gold knowledge-seeking samples; a
/// prediction without knowledge or response scores zero there.
pub fn evaluate_predictions(mode: EvalMode, preds: &[TurnLabel], golds: &[TurnLabel]) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::Alignment {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let mut report = EvalReport::default();
    if matches!(mode, EvalMode::Detection | EvalMode::End2end) {
        let p: Vec<bool> = preds.iter().map(|l| l.target).collect();
        let g: Vec<bool> = golds.iter().map(|l| l.target).collect();
        report.detection = Some(detection_metrics(&p, &g)?);
    }
    let scored: Vec<usize> = (0..golds.len())
        .filter(|&i| golds[i].target && (mode != EvalMode::End2end || preds[i].target))
        .collect();
    if mode == EvalMode::End2end {
        report.intersection = Some(scored.len());
    }
    if matches!(mode, EvalMode::Selection | EvalMode::End2end) {
        let ranked: Vec<Vec<SnippetRef>> = scored.iter().map(|&i| preds[i].gold_knowledge().to_vec()).collect();
        let gold: Vec<Vec<SnippetRef>> = scored.iter().map(|&i| golds[i].gold_knowledge().to_vec()).collect();
        report.selection = Some(selection_metrics(&ranked, &gold)?);
    }
    if matches!(mode, EvalMode::Generation | EvalMode::End2end) {
        let hyps: Vec<String> = scored
            .iter()
            .map(|&i| preds[i].response.clone().unwrap_or_default())
            .collect();
        let refs: Vec<String> = scored
            .iter()
            .map(|&i| golds[i].response.clone().unwrap_or_default())
            .collect();
        report.generation = Some(generation_metrics(&hyps, &refs)?);
    }
    Ok(report)
}

/// One score per sample, for pairing two systems in a t-test.
///
/// Detection scores every sample 1 when the prediction is right. Selection
/// gives the reciprocal rank (cut at 5) and generation the sentence BLEU-4,
/// both over gold knowledge-seeking samples. End-to-end also covers gold
/// knowledge-seeking samples, scoring 0 where detection missed the turn so
/// that two systems stay paired sample by sample.
pub fn per_sample_scores(mode: EvalMode, preds: &[TurnLabel], golds: &[TurnLabel]) -> Result<Vec<f64>> {
    if preds.len() != golds.len() {
        return Err(Error::Alignment {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let rr = |p: &TurnLabel, g: &TurnLabel| match first_gold_rank(p.gold_knowledge(), g.gold_knowledge()) {
        Some(r) if r <= 5 => 1.0 / r as f64,
        _ => 0.0,
    };
    let pairs = preds.iter().zip(golds);
    Ok(match mode {
        EvalMode::Detection => pairs.map(|(p, g)| f64::from(u8::from(p.target == g.target))).collect(),
        EvalMode::Selection => pairs.filter(|(_, g)| g.target).map(|(p, g)| rr(p, g)).collect(),
        EvalMode::End2end => pairs
            .filter(|(_, g)| g.target)
            .map(|(p, g)| if p.target { rr(p, g) } else { 0.0 })
            .collect(),
        EvalMode::Generation => pairs
            .filter(|(_, g)| g.target)
            .map(|(p, g)| {
                let hyp = p.response.as_deref().unwrap_or_default();
                bleu(hyp, &[g.response.as_deref().unwrap_or_default()], 4)[3]
            })
            .collect(),
    })
}

/// Combined report written by `evaluate`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationReport>,
    /// Samples both predicted and gold knowledge-seeking (end-to-end mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intersection: Option<usize>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = &self.detection {
            writeln!(f, "detection   precision {:.4}  recall {:.4}  f1 {:.4}", d.precision, d.recall, d.f1)?;
            writeln!(f, "            tp {}  fp {}  fn {}  tn {}", d.tp, d.fp, d.fn_, d.tn)?;
        }
        if let Some(s) = &self.selection {
            writeln!(
                f,
                "selection   mrr@5 {:.4}  recall@1 {:.4}  recall@5 {:.4}  (n={})",
                s.mrr_at_5, s.recall_at_1, s.recall_at_5, s.n
            )?;
        }
        if let Some(g) = &self.generation {
            writeln!(
                f,
                "generation  bleu-1 {:.4}  bleu-2 {:.4}  bleu-3 {:.4}  bleu-4 {:.4}",
                g.bleu_1, g.bleu_2, g.bleu_3, g.bleu_4
            )?;
            writeln!(
                f,
                "            meteor-lite {:.4}  rouge-1 {:.4}  rouge-2 {:.4}  rouge-l {:.4}  (n={})",
                g.meteor, g.rouge_1, g.rouge_2, g.rouge_l, g.n
            )?;
        }
        if let Some(n) = self.intersection {
            writeln!(f, "end-to-end  scored samples {n}")?;
        }
        Ok(())
    }
}
