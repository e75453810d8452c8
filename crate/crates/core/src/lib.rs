//! Multi-task legal judgment prediction with a bi-feedback decoder and
//! word-collocation attention, built on a from-scratch reverse-mode
//! autodiff core.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`corpus`] — case records, vocabulary, JSONL I/O, synthetic generation
//! 2. [`encoder`] — convolutional fact encoder producing the fact vector
//! 3. [`mpbfn`] — task-graph decoder: forward prediction, backward
//!    verification, multi-perspective fusion
//! 4. [`wca`] — digit-wise number embeddings and collocation attention
//! 5. [`train`] — joint loss, Adam, dropout, metrics, the training loop
//!
//! Everything differentiable runs through [`tensor::Tape`].

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod model;
pub mod mpbfn;
pub mod tensor;
pub mod train;
pub mod wca;

pub use checkpoint::Checkpoint;
pub use corpus::{
    generate_corpus, load_jsonl, save_jsonl, CaseRecord, CorpusBundle, CorpusSpec, IndexedCase,
    Numeral, Vocabulary,
};
pub use error::{Error, Result};
pub use graph::{TaskGraph, TaskSpec};
pub use model::{ModelConfig, ModelParams};
pub use mpbfn::{decode_case, DecodeOptions, JudgmentOutput};
pub use tensor::{grad_check, grad_check_named, Tape, Tensor};
pub use train::{
    evaluate, model_grad_check, train, EvalReport, Mode, TrainConfig, TrainOutcome, Variant,
};
