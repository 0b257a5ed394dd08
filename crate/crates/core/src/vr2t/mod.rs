//! Verifier, reasoner, refiner and tuner stages over decision transcripts.
//!
//! Training is out of process: the tuner stage stops at dataset emission and
//! at evaluating the SFT and DPO objectives on supplied log-probabilities.

mod dataset;
mod loss;
mod pipeline;

pub use dataset::{
    emit_dpo_dataset, emit_sft_dataset, parse_dpo_dataset, parse_sft_dataset, preference_pairs, read_tuples,
    write_tuples, DpoRecord, PreferencePair, SftRecord,
};
pub use loss::{dpo_gradient, dpo_loss, dpo_margin, sft_loss, DpoGradient, DpoInputs, LossError};
pub use pipeline::{
    run_pipeline, Check, FeedbackTuple, JudgeScorer, PipelineError, Reasoner, Refiner, RuleReasoner, RuleRefiner,
    RuleScorer, TranscriptRecord, Verdict, Verifier, DEFAULT_THRESHOLD,
};
