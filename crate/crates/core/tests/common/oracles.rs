//! Brute-force reference implementations, written independently of the
//! library code they check. Inputs are pre-tokenized (lowercase words and
//! punctuation separated by spaces).

use kgsel_core::SnippetRef;

pub fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// (tp, fp, fn, tn, precision, recall, f1) with undefined ratios as 0.
pub fn detection(preds: &[bool], golds: &[bool]) -> (usize, usize, usize, usize, f64, f64, f64) {
    let (mut tp, mut fp, mut fnn, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
    (tp, fp, fnn, tn, precision, recall, f1_counts(tp, fp, fnn))
}

/// `2TP / (2TP + FP + FN)`, 0 when there is no true positive.
pub fn f1_counts(tp: usize, fp: usize, fnn: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
    }
}

/// (MRR@5, R@1, R@5) by checking every cutoff k = 1..5 directly.
pub fn selection(ranked: &[Vec<SnippetRef>], golds: &[Vec<SnippetRef>]) -> (f64, f64, f64) {
    if ranked.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let (mut mrr, mut r1, mut r5) = (0.0, 0.0, 0.0);
    for (cands, gold) in ranked.iter().zip(golds) {
        let hit_within = |k: usize| cands.iter().take(k).any(|c| gold.iter().any(|g| g == c));
        if hit_within(1) {
            r1 += 1.0;
        }
        if hit_within(5) {
            r5 += 1.0;
        }
        if let Some(k) = (1..=5).find(|&k| hit_within(k)) {
            mrr += 1.0 / k as f64;
        }
    }
    let n = ranked.len() as f64;
    (mrr / n, r1 / n, r5 / n)
}

fn occurrences(seq: &[&str], gram: &[&str]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    seq.windows(gram.len()).filter(|w| *w == gram).count()
}

/// Sentence BLEU-1..max_n: clipped counts by enumeration, brevity penalty
/// against the closest reference length (shorter wins ties), add-one
/// smoothing where an n ≥ 2 precision has no match.
pub fn bleu(hyp: &[&str], refs: &[Vec<&str>], max_n: usize) -> Vec<f64> {
    let c = hyp.len();
    if c == 0 || refs.is_empty() {
        return vec![0.0; max_n];
    }
    let mut r = refs[0].len();
    for rf in refs {
        let (d, best) = (rf.len().abs_diff(c), r.abs_diff(c));
        if d < best || (d == best && rf.len() < r) {
            r = rf.len();
        }
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    let mut precisions = Vec::new();
    for n in 1..=max_n {
        let total = if c >= n { c - n + 1 } else { 0 };
        let mut seen: Vec<&[&str]> = Vec::new();
        let mut matched = 0;
        if c >= n {
            for g in hyp.windows(n) {
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                let in_refs = refs.iter().map(|rf| occurrences(rf, g)).max().unwrap_or(0);
                matched += occurrences(hyp, g).min(in_refs);
            }
        }
        let p = if n >= 2 && matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        precisions.push(p);
    }
    (1..=max_n)
        .map(|n| {
            let ps = &precisions[..n];
            if ps.contains(&0.0) {
                0.0
            } else {
                bp * ps.iter().product::<f64>().powf(1.0 / n as f64)
            }
        })
        .collect()
}

/// ROUGE-n F1 as `2·overlap / (|hyp n-grams| + |ref n-grams|)`.
pub fn rouge_n(hyp: &[&str], reference: &[&str], n: usize) -> f64 {
    let grams = |s: &[&str]| if s.len() >= n { s.len() - n + 1 } else { 0 };
    let mut seen: Vec<&[&str]> = Vec::new();
    let mut overlap = 0;
    if hyp.len() >= n {
        for g in hyp.windows(n) {
            if !seen.contains(&g) {
                seen.push(g);
                overlap += occurrences(hyp, g).min(occurrences(reference, g));
            }
        }
    }
    if overlap == 0 {
        0.0
    } else {
        2.0 * overlap as f64 / (grams(hyp) + grams(reference)) as f64
    }
}

fn is_subsequence(sub: &[&str], seq: &[&str]) -> bool {
    let mut it = seq.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

/// LCS length by trying every subset of `a` (keep `a` short).
pub fn lcs_brute(a: &[&str], b: &[&str]) -> usize {
    assert!(a.len() <= 16, "brute-force LCS needs a short sequence");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&str> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        if is_subsequence(&sub, b) {
            best = k;
        }
    }
    best
}

/// ROUGE-L F1 as `2·LCS / (|hyp| + |ref|)`.
pub fn rouge_l(hyp: &[&str], reference: &[&str]) -> f64 {
    let l = lcs_brute(hyp, reference);
    if l == 0 {
        0.0
    } else {
        2.0 * l as f64 / (hyp.len() + reference.len()) as f64
    }
}

/// METEOR with earliest-unused exact alignment, written in the closed form
/// `Fmean = 10m / (|hyp| + 9|ref|)`.
pub fn meteor(hyp: &[&str], reference: &[&str]) -> f64 {
    let mut taken = vec![false; reference.len()];
    let mut align = Vec::new();
    for h in hyp {
        let slot = reference.iter().enumerate().position(|(j, r)| !taken[j] && r == h);
        if let Some(j) = slot {
            taken[j] = true;
        }
        align.push(slot);
    }
    let m = align.iter().filter(|a| a.is_some()).count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    for i in 0..align.len() {
        let Some(j) = align[i] else { continue };
        let continues = i > 0 && align[i - 1].is_some_and(|p| p + 1 == j);
        if !continues {
            chunks += 1;
        }
    }
    let fmean = 10.0 * m as f64 / (hyp.len() as f64 + 9.0 * reference.len() as f64);
    fmean * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Paired t statistic and two-sided p. With `x = √ν·tan θ` the Student t
/// tail becomes `∫ cos^(ν-1) θ dθ` from `atan(|t|/√ν)` to π/2, over the same
/// integral from 0; both are evaluated by Simpson's rule.
pub fn t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss: f64 = d.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return if mean == 0.0 { (0.0, 1.0) } else { (f64::INFINITY.copysign(mean), 0.0) };
    }
    let t = mean * (n as f64).sqrt() / sd;
    let nu = (n - 1) as f64;
    let kernel = |th: f64| th.cos().powf(nu - 1.0);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / nu.sqrt()).atan();
    let steps = 200_000;
    let tail = simpson(kernel, theta0, half_pi, steps);
    let whole = simpson(kernel, 0.0, half_pi, steps);
    (t, (tail / whole).min(1.0))
}

/// Best F1 over every threshold in [0, 1] for scores in [0, 1]. The rule
/// "positive iff score > t" only changes at a score, so 0 plus the distinct
/// scores cover all reachable predictions.
pub fn best_f1(scores: &[f64], labels: &[bool]) -> f64 {
    let mut cuts: Vec<f64> = scores.to_vec();
    cuts.push(0.0);
    cuts.into_iter()
        .map(|s| f1_at(scores, labels, s))
        .fold(0.0, f64::max)
}

pub fn f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let preds: Vec<bool> = scores.iter().map(|&p| p > threshold).collect();
    let (tp, fp, fnn, ..) = detection(&preds, labels);
    f1_counts(tp, fp, fnn)
}
