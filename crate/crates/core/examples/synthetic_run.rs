//! Train the built-in models on the synthetic corpus and score the test split.

use kgsel_core::entity::TrackingConfig;
use kgsel_core::eval::{evaluate_predictions, EvalMode};
use kgsel_core::experiment::{train_builtin, TrainingConfig};
use kgsel_core::pipeline::{Pipeline, PipelineConfig};
use kgsel_core::synth::{generate, SynthConfig};

fn main() -> kgsel_core::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let (models, summary) = train_builtin(
        &corpus.kb,
        &corpus.train,
        &corpus.validation,
        &TrainingConfig::default(),
        &TrackingConfig::default(),
    )?;
    println!(
        "detection threshold {:.4} (validation f1 {:.4})",
        summary.threshold.threshold, summary.threshold.f1
    );
    let pipeline = Pipeline::new(&corpus.kb, models.models()?, PipelineConfig::default())?;
    let dialogues: Vec<_> = corpus.test.dialogues().cloned().collect();
    let out = pipeline.batch_run(&dialogues, 0)?;
    println!("{}", out.report);
    let golds: Vec<_> = corpus.test.labels().cloned().collect();
    let report = evaluate_predictions(EvalMode::End2end, &out.predictions(), &golds)?;
    print!("{report}");
    Ok(())
}
