//! Shared fixtures for the benchmarks: the synthetic corpus and models
//! trained on it.

use kgsel_core::experiment::{train_builtin, BuiltinModels, TrainingConfig};
use kgsel_core::pipeline::PipelineConfig;
use kgsel_core::synth::{generate, SynthConfig, SynthCorpus};
use kgsel_core::Dialogue;

pub struct Fixture {
    pub corpus: SynthCorpus,
    pub models: BuiltinModels,
}

impl Fixture {
    pub fn new() -> Self {
        let corpus = generate(&SynthConfig::default()).expect("synthetic corpus");
        let (models, _) = train_builtin(
            &corpus.kb,
            &corpus.train,
            &corpus.validation,
            &TrainingConfig::default(),
            &PipelineConfig::default().tracking(),
        )
        .expect("training on the synthetic corpus");
        Fixture { corpus, models }
    }

    /// Test dialogues whose last turn is knowledge-seeking.
    pub fn knowledge_dialogues(&self) -> Vec<Dialogue> {
        self.corpus
            .test
            .dialogues()
            .zip(self.corpus.test.labels())
            .filter(|(_, l)| l.target)
            .map(|(d, _)| d.clone())
            .collect()
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

/// Deterministic pseudo-random lowercase strings for matcher benchmarks.
pub fn word_pairs(n: usize, len: usize) -> Vec<(String, String)> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let word = |next: &mut dyn FnMut() -> u64| -> String {
        (0..len).map(|_| (b'a' + (next() % 6) as u8) as char).collect()
    };
    (0..n).map(|_| (word(&mut next), word(&mut next))).collect()
}
