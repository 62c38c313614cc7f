//! Acceptance checks shared by the topic tests and the `acceptance` runner.
//! Each returns a one-line summary, or what went wrong.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use kgsel_core::detection::tune_threshold;
use kgsel_core::entity::{match_ratio, normalize_entity_name, EntityTracker};
use kgsel_core::eval::{
    bleu, detection_metrics, evaluate_predictions, harmonic_f1, meteor_lite, paired_t_test, rouge, selection_metrics,
    EvalMode,
};
use kgsel_core::experiment::TrainingConfig;
use kgsel_core::gateway::{
    Connection, GatewayDomainScorer, GatewayGenerator, GatewayPool, GatewayRelevanceScorer, GatewayRequest,
    GatewayTextScorer,
};
use kgsel_core::pipeline::{GeneratorMode, Models, Pipeline, PipelineConfig};
use kgsel_core::ranker::{corpus_positives, train_ranker, NegativeSampler, NegativeSamplingConfig, RankerConfig};
use kgsel_core::detection::DetectionModel;
use kgsel_core::domain::DomainClassifier;
use kgsel_core::{Dialogue, KnowledgeBase, LabeledCorpus, SnippetRef, TurnLabel};
use rand::Rng;

use super::fixtures::{self, rng, Reply, Trained};
use super::oracles;

pub type Outcome = Result<String, String>;

pub const TOL: f64 = 1e-9;

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    let same_inf = got.is_infinite() && got == want;
    if same_inf || (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, oracle {want}"))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- metrics

pub const METRIC_FIXTURES: usize = 25;

pub fn metric_oracles() -> Outcome {
    let f1 = harmonic_f1(0.9933, 0.9021);
    close("F1 from P=0.9933 R=0.9021", f1, 0.9455, 1e-4)?;

    let mut r = rng(0x5eed);
    for case in 0..METRIC_FIXTURES {
        // detection
        let n = r.gen_range(1..30);
        let preds: Vec<bool> = (0..n).map(|_| r.gen()).collect();
        let golds: Vec<bool> = (0..n).map(|_| r.gen()).collect();
        let rep = detection_metrics(&preds, &golds).map_err(e2s)?;
        let (tp, fp, fnn, tn, p, rc, f) = oracles::detection(&preds, &golds);
        ensure((rep.tp, rep.fp, rep.fn_, rep.tn) == (tp, fp, fnn, tn), || format!("detection counts, case {case}"))?;
        close("precision", rep.precision, p, TOL)?;
        close("recall", rep.recall, rc, TOL)?;
        close("f1", rep.f1, f, TOL)?;

        // selection
        let k = r.gen_range(1..12);
        let (ranked, gold) = fixtures::selection_fixture(&mut r, k);
        let s = selection_metrics(&ranked, &gold).map_err(e2s)?;
        let (mrr, r1, r5) = oracles::selection(&ranked, &gold);
        close("MRR@5", s.mrr_at_5, mrr, TOL)?;
        close("R@1", s.recall_at_1, r1, TOL)?;
        close("R@5", s.recall_at_5, r5, TOL)?;

        // generation
        let hyp = fixtures::sentence(&mut r, 1, 10);
        let refs: Vec<String> = (0..r.gen_range(1..=3)).map(|_| fixtures::sentence(&mut r, 1, 10)).collect();
        let ref_strs: Vec<&str> = refs.iter().map(String::as_str).collect();
        let ref_toks: Vec<Vec<&str>> = refs.iter().map(|s| oracles::tokens(s)).collect();
        let h = oracles::tokens(&hyp);
        let got = bleu(&hyp, &ref_strs, 4);
        let want = oracles::bleu(&h, &ref_toks, 4);
        for k in 0..4 {
            close(&format!("BLEU-{} on {hyp:?} vs {refs:?}", k + 1), got[k], want[k], TOL)?;
        }
        let rg = rouge(&hyp, &refs[0]);
        close("ROUGE-1", rg.rouge_1, oracles::rouge_n(&h, &ref_toks[0], 1), TOL)?;
        close("ROUGE-2", rg.rouge_2, oracles::rouge_n(&h, &ref_toks[0], 2), TOL)?;
        close("ROUGE-L", rg.rouge_l, oracles::rouge_l(&h, &ref_toks[0]), TOL)?;
        close(
            &format!("METEOR-lite on {hyp:?} vs {:?}", refs[0]),
            meteor_lite(&hyp, &refs[0]),
            oracles::meteor(&h, &ref_toks[0]),
            TOL,
        )?;

        // paired t-test
        let n = r.gen_range(2..30);
        let a: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * 0.8 + 0.1).collect();
        let t = paired_t_test(&a, &b).map_err(e2s)?;
        let (ot, op) = oracles::t_test(&a, &b);
        close("t", t.t, ot, TOL)?;
        close("p", t.p, op, TOL)?;
    }

    let d = [0.1, 0.3, -0.1, 0.2, 0.0];
    let t = paired_t_test(&d, &[0.0; 5]).map_err(e2s)?;
    let (ot, op) = oracles::t_test(&d, &[0.0; 5]);
    close("t on fixed differences", t.t, ot, TOL)?;
    close("p on fixed differences", t.p, op, TOL)?;

    Ok(format!(
        "F1 {f1:.4}; {METRIC_FIXTURES} random fixtures each for detection, selection, BLEU, ROUGE, METEOR-lite, t-test"
    ))
}

// ---------------------------------------------------------- normalization

/// Rule examples, with the expected text as printed before the final
/// lowercasing step.
pub const NORMALIZATION_TABLE: [(&str, &str); 5] = [
    ("Bay Subs & Deli", "Bay Subs and Deli"),
    ("Hard Knox Cafe - Potrero Hill", "Hard Knox Cafe"),
    ("ARBURY LODGE GUESTHOUSE", "ARBURY LODGE GUEST HOUSE"),
    ("Bay Bridge Inn San Francisco", "Bay Bridge Inn"),
    ("Pho Huynh Hiep 2", "Pho Huynh Hiep Two"),
];

pub fn normalization_table() -> Outcome {
    for (input, printed) in NORMALIZATION_TABLE {
        let got = normalize_entity_name(input);
        ensure(got == printed.to_lowercase(), || format!("{input:?} -> {got:?}, expected {printed:?}"))?;
    }
    Ok(format!("{} rule examples", NORMALIZATION_TABLE.len()))
}

// ---------------------------------------------------------- fuzzy matching

fn longest_common_substring_brute(a: &[char], b: &[char]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            best = best.max(k);
        }
    }
    best
}

pub const MATCH_PAIRS: usize = 10_000;

pub fn fuzzy_matching() -> Outcome {
    let exact = match_ratio("abcd", "abce");
    ensure(exact == 0.75, || format!("(abcd, abce) gave {exact}"))?;
    let mut r = rng(95);
    let alphabet: Vec<char> = "abcde fgh'".chars().collect();
    let word = |r: &mut rand_chacha::ChaCha8Rng| -> String {
        let len = r.gen_range(1..=14);
        (0..len).map(|_| alphabet[r.gen_range(0..alphabet.len())]).collect()
    };
    for _ in 0..MATCH_PAIRS {
        let (a, b) = (word(&mut r), word(&mut r));
        let ab = match_ratio(&a, &b);
        let ba = match_ratio(&b, &a);
        ensure(ab == ba, || format!("asymmetric on {a:?}/{b:?}: {ab} vs {ba}"))?;
        ensure((0.0..=1.0).contains(&ab), || format!("{ab} out of range"))?;
        ensure(match_ratio(&a, &a) == 1.0, || format!("identity fails on {a:?}"))?;
        let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let want = 2.0 * longest_common_substring_brute(&ca, &cb) as f64 / (ca.len() + cb.len()) as f64;
        close(&format!("ratio {a:?}/{b:?}"), ab, want, 1e-15)?;
    }
    Ok(format!("{MATCH_PAIRS} random pairs; (abcd, abce) = {exact}"))
}

// ------------------------------------------------------ filter soundness

pub fn filter_soundness(t: &Trained) -> Outcome {
    let kb = &t.corpus.kb;
    let test = &t.corpus.test;
    ensure(kb.len() == 1000 && test.len() == 200, || {
        format!("fixture has {} snippets and {} dialogues", kb.len(), test.len())
    })?;
    let pipeline = Pipeline::new(kb, t.models.models().map_err(e2s)?, PipelineConfig::default()).map_err(e2s)?;
    let (mut positives, mut covered) = (0, 0);
    for label in test.labels() {
        for gold in label.gold_knowledge() {
            positives += 1;
            let cands = pipeline.oracle_candidates(gold).map_err(e2s)?;
            covered += usize::from(cands.contains(gold));
        }
    }
    ensure(positives > 0 && covered == positives, || format!("oracle candidates hold {covered}/{positives} golds"))?;
    let dialogues: Vec<Dialogue> = test.dialogues().cloned().collect();
    let out = pipeline.batch_run(&dialogues, 0).map_err(e2s)?;
    let rep = &out.report;
    ensure(rep.failed == 0, || format!("{} samples failed", rep.failed))?;
    ensure(rep.exhaustive_calls == 200 * 1000, || format!("exhaustive count {}", rep.exhaustive_calls))?;
    ensure(rep.scorer_calls * 20 <= rep.exhaustive_calls, || {
        format!("{} scorer calls exceed 5% of {}", rep.scorer_calls, rep.exhaustive_calls)
    })?;
    Ok(format!(
        "oracle coverage {covered}/{positives}; scorer calls {}/{} = {:.2}% (bound 5%)",
        rep.scorer_calls,
        rep.exhaustive_calls,
        100.0 * rep.call_ratio
    ))
}

// ------------------------------------------------------- end-to-end check

pub fn run_predictions(kb: &KnowledgeBase, models: Models, cfg: PipelineConfig, corpus: &LabeledCorpus) -> Result<Vec<TurnLabel>, String> {
    let pipeline = Pipeline::new(kb, models, cfg).map_err(e2s)?;
    let dialogues: Vec<Dialogue> = corpus.dialogues().cloned().collect();
    let out = pipeline.batch_run(&dialogues, 0).map_err(e2s)?;
    if let Some((i, e)) = out.errors().next() {
        return Err(format!("sample {i} failed: {e}"));
    }
    Ok(out.predictions())
}

pub fn end_to_end(t: &Trained) -> Outcome {
    let preds = run_predictions(&t.corpus.kb, t.models.models().map_err(e2s)?, PipelineConfig::default(), &t.corpus.test)?;
    let golds: Vec<TurnLabel> = t.corpus.test.labels().cloned().collect();
    let det = evaluate_predictions(EvalMode::Detection, &preds, &golds).map_err(e2s)?.detection.unwrap();
    let sel = evaluate_predictions(EvalMode::Selection, &preds, &golds).map_err(e2s)?.selection.unwrap();
    let summary = format!("detection F1 {:.4} (bound 0.95); Recall@1 {:.4} (bound 0.90)", det.f1, sel.recall_at_1);
    ensure(det.f1 >= 0.95 && sel.recall_at_1 >= 0.90, || summary.clone())?;
    Ok(summary)
}

// -------------------------------------------------------- negative sampling

/// Chi-square critical value, 3 degrees of freedom, alpha = 0.01.
pub const CHI2_CRIT_3DF_01: f64 = 11.345;
pub const SAMPLER_DRAWS: usize = 10_000;

/// Fixture where all four pools are non-empty and disjoint enough to tell
/// apart: two hotels, one restaurant, and a co-mentioned hotel.
pub fn sampler_kb() -> KnowledgeBase {
    let kb = serde_json::json!({
        "hotel": {
            "1": {"name": "Alpha Lodge", "docs": {"0": {"title": "q0", "body": "a0"}, "1": {"title": "q1", "body": "a1"}, "2": {"title": "q2", "body": "a2"}}},
            "2": {"name": "Beta Inn", "docs": {"0": {"title": "q0", "body": "a0"}, "1": {"title": "q1", "body": "a1"}}},
            "3": {"name": "Gamma House", "docs": {"0": {"title": "q0", "body": "a0"}}}
        },
        "restaurant": {
            "4": {"name": "Delta Diner", "docs": {"0": {"title": "q0", "body": "a0"}}}
        }
    });
    KnowledgeBase::load(kb.to_string().as_bytes()).expect("sampler fixture")
}

pub fn sampler_chi_square() -> Result<(f64, [usize; 4]), String> {
    let kb = sampler_kb();
    let sampler = NegativeSampler::new(&kb);
    let positive = SnippetRef::new("hotel", "1", "0");
    let mentioned = [kgsel_core::EntityRef::new("hotel", "2")];
    let cfg = NegativeSamplingConfig {
        negatives_per_positive: 1,
        ..NegativeSamplingConfig::default()
    };
    let mut r = rng(4242);
    let mut counts = [0usize; 4];
    for _ in 0..SAMPLER_DRAWS {
        let drawn = sampler.sample(&positive, &mentioned, &cfg, &mut r).map_err(e2s)?;
        let d = &drawn[0];
        ensure(d.drawn_strategy == d.used_strategy, || "a non-empty pool fell back".into())?;
        ensure(d.snippet != positive, || "positive drawn as its own negative".into())?;
        let s = &d.snippet;
        let fits = match d.used_strategy {
            1 => true,
            2 => s.domain == "hotel" && s.entity_id != "1",
            3 => s.domain == "hotel" && s.entity_id == "1",
            _ => s.domain == "hotel" && s.entity_id == "2",
        };
        ensure(fits, || format!("{s:?} is outside pool {}", d.used_strategy))?;
        counts[d.drawn_strategy - 1] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(cfg.ratios)
        .map(|(&o, p)| {
            let e = p * SAMPLER_DRAWS as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    Ok((chi2, counts))
}

pub fn selection_recall_at_1(t: &Trained, ranker: Arc<dyn kgsel_core::ranker::RelevanceScorer>) -> Result<f64, String> {
    let mut models = t.models.models().map_err(e2s)?;
    models.ranker = ranker;
    let preds = run_predictions(&t.corpus.kb, models, PipelineConfig::default(), &t.corpus.test)?;
    let golds: Vec<TurnLabel> = t.corpus.test.labels().cloned().collect();
    Ok(evaluate_predictions(EvalMode::Selection, &preds, &golds)
        .map_err(e2s)?
        .selection
        .unwrap()
        .recall_at_1)
}

pub fn negative_sampling(t: &Trained) -> Outcome {
    let (chi2, counts) = sampler_chi_square()?;
    ensure(chi2 < CHI2_CRIT_3DF_01, || format!("chi-square {chi2:.3} >= {CHI2_CRIT_3DF_01} (counts {counts:?})"))?;

    let tracker = EntityTracker::new(&t.corpus.kb, PipelineConfig::default().tracking());
    let positives = corpus_positives(&t.corpus.train);
    let mixed_cfg = TrainingConfig::default().ranker;
    let mut ablated_cfg: RankerConfig = mixed_cfg.clone();
    ablated_cfg.sampling.ratios = [0.0, 1.0, 0.0, 0.0];
    let (mixed, _) = train_ranker(&positives, &t.corpus.kb, &tracker, &mixed_cfg).map_err(e2s)?;
    let (ablated, _) = train_ranker(&positives, &t.corpus.kb, &tracker, &ablated_cfg).map_err(e2s)?;
    let r_mixed = selection_recall_at_1(t, Arc::new(mixed))?;
    let r_ablated = selection_recall_at_1(t, Arc::new(ablated))?;
    let summary = format!(
        "chi-square {chi2:.3} < {CHI2_CRIT_3DF_01} (counts {counts:?}); R@1 mixed {r_mixed:.4} vs same-domain only {r_ablated:.4}"
    );
    ensure(r_mixed >= r_ablated, || summary.clone())?;
    Ok(summary)
}

// ------------------------------------------------------- threshold tuning

pub const TUNER_SETS: usize = 100;

pub fn threshold_tuner() -> Outcome {
    let mut r = rng(7);
    for case in 0..TUNER_SETS {
        let n = r.gen_range(2..40);
        // Coarse grid so ties between scores are frequent.
        let mut scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..20) as f64 / 19.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen()).collect();
        labels[0] = true;
        labels[1] = false;
        if case % 10 == 0 {
            scores.iter_mut().for_each(|s| *s = 0.5);
        }
        let choice = tune_threshold(&scores, &labels).map_err(e2s)?;
        let best = oracles::best_f1(&scores, &labels);
        let at_choice = oracles::f1_at(&scores, &labels, choice.threshold);
        ensure(at_choice == best, || {
            format!("case {case}: threshold {} reaches F1 {at_choice}, brute force {best}", choice.threshold)
        })?;
        close("reported F1", choice.f1, best, 1e-12)?;
    }
    Ok(format!("{TUNER_SETS} random sets match the brute-force optimum"))
}

// ------------------------------------------------------- real dataset

pub const DATASET_ENV: &str = "KGSEL_DSTC9_DIR";

/// `None` when the dataset is not available.
pub fn dataset_tables() -> Option<Outcome> {
    let root = std::env::var_os(DATASET_ENV)?;
    Some(dataset_tables_at(Path::new(&root)))
}

fn dataset_tables_at(root: &Path) -> Outcome {
    let load = |p: &str| KnowledgeBase::load_path(root.join(p)).map_err(|e| format!("{p}: {e}"));
    let check_kb = |p: &str, want: &[(&str, usize, usize)], totals: (usize, usize)| -> Result<(), String> {
        let stats = load(p)?.stats();
        for &(domain, entities, snippets) in want {
            let d = stats.domains.iter().find(|d| d.domain == domain);
            ensure(d.is_some_and(|d| d.entities == entities && d.snippets == snippets), || {
                format!("{p}: {domain} has {d:?}, expected {entities}/{snippets}")
            })?;
        }
        ensure((stats.total_entities, stats.total_snippets) == totals, || {
            format!("{p}: totals {}/{}, expected {totals:?}", stats.total_entities, stats.total_snippets)
        })
    };
    check_kb(
        "data/knowledge.json",
        &[("train", 0, 26), ("taxi", 0, 5), ("hotel", 33, 1219), ("restaurant", 110, 1650)],
        (143, 2900),
    )?;
    check_kb(
        "data_eval/knowledge.json",
        &[
            ("train", 0, 26),
            ("taxi", 0, 5),
            ("hotel", 178, 4346),
            ("restaurant", 391, 7155),
            ("attraction", 97, 507),
        ],
        (666, 12309),
    )?;
    let val = LabeledCorpus::load_paths(root.join("data/val/logs.json"), root.join("data/val/labels.json"))
        .map_err(|e| format!("validation split: {e}"))?;
    ensure(val.len() == 9663 && val.knowledge_seeking_count() == 2673, || {
        format!("validation has {} samples, {} knowledge-seeking", val.len(), val.knowledge_seeking_count())
    })?;
    Ok("KB 143/2,900 and 666/12,309; validation 9,663 samples, 2,673 knowledge-seeking".into())
}

// ---------------------------------------------------------- gateway

fn scripted(req: &GatewayRequest) -> Reply {
    let text = req.payload.get("text").and_then(|v| v.as_str()).unwrap_or("");
    match text {
        "drop me" => Reply::Drop,
        "fail me" => Reply::Fail,
        _ => Reply::Answer,
    }
}

pub fn gateway_contracts() -> Result<String, String> {
    let timeout = Duration::from_millis(400);
    // Three task types in one batch, answered in reverse order.
    let addr = fixtures::spawn_scripted_server(3, scripted);
    let conn = Connection::tcp(&addr).map_err(e2s)?;
    let reqs = vec![
        GatewayRequest::score(conn.next_id(), "is there wifi"),
        GatewayRequest::classify_domain(conn.next_id(), "U: I need a taxi"),
        GatewayRequest::generate(conn.next_id(), "U: hi", "Yes, there is."),
    ];
    let out = conn.batch_request(&reqs, 3, timeout).map_err(e2s)?;
    for (req, resp) in reqs.iter().zip(&out) {
        let resp = resp.as_ref().map_err(|e| format!("slot {}: {e}", req.id))?;
        ensure(resp.id == req.id, || format!("slot for {} holds {}", req.id, resp.id))?;
        ensure(resp.result.as_ref() == Some(&fixtures::echo_result(req)), || format!("wrong result for {}", req.id))?;
    }

    // One dropped and one failed request in a reversed group: only those
    // slots error.
    let reqs = vec![
        GatewayRequest::score(conn.next_id(), "first"),
        GatewayRequest::score(conn.next_id(), "drop me"),
        GatewayRequest::score(conn.next_id(), "fail me"),
    ];
    let out = conn.batch_request(&reqs, 3, timeout).map_err(e2s)?;
    ensure(out[0].as_ref().is_ok_and(|r| r.result.is_some()), || format!("first slot: {:?}", out[0]))?;
    ensure(
        matches!(&out[1], Err(kgsel_core::Error::ScorerUnavailable(m)) if m.contains("timed out")),
        || format!("dropped slot: {:?}", out[1]),
    )?;
    ensure(out[2].as_ref().is_ok_and(|r| r.error.is_some()), || format!("failed slot: {:?}", out[2]))?;
    // The connection survives the expired id.
    let after = conn
        .request(&GatewayRequest::score(conn.next_id(), "after"), timeout)
        .map_err(e2s);
    // Group size 3 means a lone request is never answered by this server;
    // a timeout here is the expected outcome.
    ensure(after.is_err() && !conn.is_closed(), || format!("lone request: {after:?}"))?;

    // Strictly sequential with max_in_flight = 1.
    let seq_addr = fixtures::spawn_scripted_server(1, scripted);
    let seq = Connection::tcp(&seq_addr).map_err(e2s)?;
    let reqs: Vec<_> = (0..5).map(|i| GatewayRequest::score(seq.next_id(), &"x".repeat(i))).collect();
    let out = seq.batch_request(&reqs, 1, timeout).map_err(e2s)?;
    for (i, r) in out.iter().enumerate() {
        let v = r.as_ref().map_err(e2s)?.result.clone().and_then(|v| v.as_f64());
        ensure(v == Some(i as f64 / 100.0), || format!("sequential slot {i}: {v:?}"))?;
    }
    Ok("three task types reordered; timeout and remote error isolated per slot; sequential mode".into())
}

/// Predictions with every model served over TCP by the built-in handler.
pub fn gateway_equivalence(t: &Trained) -> Outcome {
    let kb = &t.corpus.kb;
    let builtin = t.models.models().map_err(e2s)?;
    let local_cfg = PipelineConfig::default();
    let local = Pipeline::new(kb, builtin, local_cfg.clone()).map_err(e2s)?;

    let mut handler = t.models.handler();
    handler.follow_up = Some(local_cfg.follow_up.clone());
    let addr = fixtures::spawn_builtin_server(handler);
    let pool = Arc::new(GatewayPool::connect(addr.parse().map_err(e2s)?, 4, Duration::from_secs(30)).map_err(e2s)?);
    let remote_models = Models {
        detector: DetectionModel::new(Arc::new(GatewayTextScorer(pool.clone())), t.models.threshold).map_err(e2s)?,
        domain: DomainClassifier::new(Arc::new(GatewayDomainScorer(pool.clone()))),
        ranker: Arc::new(GatewayRelevanceScorer(pool.clone())),
        generator: Some(Arc::new(GatewayGenerator(pool.clone()))),
    };
    let remote_cfg = PipelineConfig {
        generator: GeneratorMode::Gateway,
        ..local_cfg
    };
    let remote = Pipeline::new(kb, remote_models, remote_cfg).map_err(e2s)?;

    let dialogues: Vec<Dialogue> = t.corpus.test.dialogues().cloned().collect();
    let a = local.batch_run(&dialogues, 4).map_err(e2s)?;
    let b = remote.batch_run(&dialogues, 4).map_err(e2s)?;
    ensure(b.report.failed == 0, || format!("{} gateway samples failed", b.report.failed))?;
    let mut seeking = 0;
    for (i, (x, y)) in a.results.iter().zip(&b.results).enumerate() {
        let (x, y) = (x.as_ref().map_err(e2s)?, y.as_ref().map_err(e2s)?);
        ensure(x.knowledge_seeking == y.knowledge_seeking, || format!("sample {i}: detection differs"))?;
        ensure(x.detection.score == y.detection.score, || format!("sample {i}: detector score differs"))?;
        ensure(x.response == y.response, || format!("sample {i}: response differs"))?;
        ensure(x.scorer_calls == y.scorer_calls, || format!("sample {i}: call count differs"))?;
        match (&x.selected, &y.selected) {
            (Some(sx), Some(sy)) => {
                seeking += 1;
                ensure(sx.domain.label == sy.domain.label && sx.route == sy.route, || {
                    format!("sample {i}: routing differs")
                })?;
                ensure(sx.ranked == sy.ranked, || format!("sample {i}: ranking differs"))?;
            }
            (None, None) => {}
            _ => return Err(format!("sample {i}: selection presence differs")),
        }
    }
    ensure(a.predictions() == b.predictions(), || "prediction files differ".into())?;
    Ok(format!(
        "{} samples ({seeking} knowledge-seeking) decided identically in-process and over the gateway",
        dialogues.len()
    ))
}

pub fn gateway_conformance(t: &Trained) -> Outcome {
    let contracts = gateway_contracts()?;
    let same = gateway_equivalence(t)?;
    Ok(format!("{contracts}; {same}"))
}
