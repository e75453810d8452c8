//! Whole-model gradient verification against central finite differences.

use std::collections::BTreeMap;

use crate::corpus::{CaseRecord, Numeral, Vocabulary};
use crate::error::Result;
use crate::graph::TaskGraph;
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::grad_check_named;
use crate::train::{forward_case, multitask_loss, Phase};

/// A deterministic probe case for gradient checking: `max_doc_len` distinct
/// tokens, two numeral annotations, four collocations (two of them through
/// the number path), and seed-dependent labels.
pub fn toy_probe(
    cfg: &ModelConfig,
    graph: &TaskGraph,
    seed: u64,
) -> Result<(Vocabulary, crate::corpus::IndexedCase)> {
    let len = cfg.max_doc_len;
    let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
    let mut labels = BTreeMap::new();
    for (i, task) in graph.tasks().iter().enumerate() {
        labels.insert(
            task.id.clone(),
            (seed as usize).wrapping_mul(31).wrapping_add(i * 7) % task.classes,
        );
    }
    let record = CaseRecord {
        tokens,
        numerals: vec![
            Numeral { pos: 3, value: 42 + seed as i64 % 50, unit: "kg".into() },
            Numeral { pos: 7.min(len - 1), value: 7, unit: "g".into() },
        ],
        collocations: vec![
            (3, 2),
            (7.min(len - 1), 6.min(len - 1)),
            (1, 2),
            (5.min(len - 1), 0),
        ],
        labels,
    };
    let vocab = Vocabulary::build(std::slice::from_ref(&record), 1)?;
    let case = crate::corpus::encode_record(&record, &vocab, graph, len, cfg.max_collocations)?;
    Ok((vocab, case))
}

/// Check reverse-mode gradients of the full loss against finite differences
/// for every parameter group. Dropout is off (evaluation phase). Returns the
/// worst relative error per named parameter.
pub fn model_grad_check(
    cfg: &ModelConfig,
    graph: &TaskGraph,
    opts: &crate::mpbfn::DecodeOptions,
    seed: u64,
    step: f64,
) -> Result<Vec<(String, f64)>> {
    let (vocab, case) = toy_probe(cfg, graph, seed)?;
    let params = ModelParams::init(cfg, graph, vocab.len(), seed)?;
    let named = params.named_tensors();
    let labels = case.labels.clone();
    grad_check_named(
        move |tape, _inputs| {
            let out = forward_case(tape, &params, graph, &case, opts, Phase::Eval)?;
            multitask_loss(tape, &out, &labels, graph)
        },
        &named,
        step,
    )
}
