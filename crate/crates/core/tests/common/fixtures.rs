use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use kgsel_core::experiment::{train_builtin, BuiltinModels, TrainingConfig};
use kgsel_core::gateway::{serve, BuiltinHandler, GatewayRequest, GatewayResponse};
use kgsel_core::pipeline::PipelineConfig;
use kgsel_core::synth::{generate, SynthConfig, SynthCorpus};
use kgsel_core::SnippetRef;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const VOCAB: &[&str] = &[
    "the", "a", "hotel", "has", "free", "wifi", "parking", "is", "available", "yes", "no", "cat", "sat", ".", ",",
    "?",
];

/// Space-separated words from a small vocabulary, so overlaps are common.
pub fn sentence(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    (0..len)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn snippet_ref(rng: &mut impl Rng) -> SnippetRef {
    SnippetRef::new("hotel", rng.gen_range(0..3).to_string(), rng.gen_range(0..4).to_string())
}

/// Ranked lists of 0..8 refs and 1..2 gold refs drawn from a 12-ref space,
/// so hits at every rank (and misses) all occur.
pub fn selection_fixture(rng: &mut impl Rng, n: usize) -> (Vec<Vec<SnippetRef>>, Vec<Vec<SnippetRef>>) {
    let mut ranked = Vec::new();
    let mut golds = Vec::new();
    for _ in 0..n {
        let k = rng.gen_range(0..=8);
        let mut list: Vec<SnippetRef> = Vec::new();
        while list.len() < k {
            let r = snippet_ref(rng);
            if !list.contains(&r) {
                list.push(r);
            }
        }
        ranked.push(list);
        golds.push((0..rng.gen_range(1..=2)).map(|_| snippet_ref(rng)).collect());
    }
    (ranked, golds)
}

/// Synthetic corpus with built-in models trained on it (fixed seeds).
pub struct Trained {
    pub corpus: SynthCorpus,
    pub models: BuiltinModels,
}

pub fn trained_synthetic(training: &TrainingConfig) -> Trained {
    let corpus = generate(&SynthConfig::default()).expect("synthetic corpus");
    let (models, _) = train_builtin(
        &corpus.kb,
        &corpus.train,
        &corpus.validation,
        training,
        &PipelineConfig::default().tracking(),
    )
    .expect("training");
    Trained { corpus, models }
}

/// TCP server answering with the built-in models. Returns its address.
pub fn spawn_builtin_server(handler: BuiltinHandler) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let h = handler.clone();
            thread::spawn(move || {
                let reader = BufReader::new(stream.try_clone().unwrap());
                let _ = serve(reader, stream, |r| h.handle(r));
            });
        }
    });
    addr
}

/// How the scripted server treats one request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reply {
    /// Answer normally.
    Answer,
    /// Never answer.
    Drop,
    /// Answer with a remote error object.
    Fail,
}

/// Server that collects `group` requests, then answers them in reverse
/// order. `script` decides per request text (falls back to `Answer`).
/// Every answer echoes a value derived from the request.
pub fn spawn_scripted_server(group: usize, script: fn(&GatewayRequest) -> Reply) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            thread::spawn(move || scripted_session(stream, group, script));
        }
    });
    addr
}

fn scripted_session(stream: TcpStream, group: usize, script: fn(&GatewayRequest) -> Reply) {
    let mut writer = stream.try_clone().unwrap();
    let mut pending: Vec<GatewayRequest> = Vec::new();
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { return };
        let req: GatewayRequest = serde_json::from_str(&line).unwrap();
        pending.push(req);
        if pending.len() < group {
            continue;
        }
        for req in pending.drain(..).rev() {
            let resp = match script(&req) {
                Reply::Drop => continue,
                Reply::Fail => GatewayResponse::err(
                    req.id.clone(),
                    kgsel_core::gateway::RemoteError::new("internal", "scripted failure"),
                ),
                Reply::Answer => GatewayResponse::ok(req.id.clone(), echo_result(&req)),
            };
            let mut out = serde_json::to_string(&resp).unwrap();
            out.push('\n');
            if writer.write_all(out.as_bytes()).is_err() {
                return;
            }
        }
    }
}

/// Deterministic answer per task: text length for `score`, a fixed
/// distribution for `classify_domain`, and the answer echoed for `generate`.
pub fn echo_result(req: &GatewayRequest) -> serde_json::Value {
    use kgsel_core::gateway::Task;
    let text = |k: &str| req.payload.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
    match req.task {
        Task::Score => serde_json::json!(text("text").len() as f64 / 100.0),
        Task::ClassifyDomain => serde_json::json!([0.2, 0.3, 0.5]),
        Task::Generate => serde_json::json!(format!("echo: {}", text("answer"))),
    }
}
