//! Joint multi-task training: summed cross-entropy loss, inverted dropout on
//! the fact vector, Adam updates, and evaluation.

mod adam;
mod gradcheck;
mod metrics;

pub use adam::{adam_step, adam_update_array, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{model_grad_check, toy_probe};
pub use metrics::{metrics_from_confusion, EvalReport, TaskMetrics};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KvMap;
use crate::corpus::{encode_record, CaseRecord, IndexedCase, Vocabulary};
use crate::encoder::encode_fact;
use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::model::{ModelConfig, ModelParams};
use crate::mpbfn::{decode_case, DecodeOptions, JudgmentOutput, WcaContext};
use crate::tensor::{Tape, Tensor, LOG_GUARD};
use crate::wca::collocation_context;

/// Model variants named after their ablation rows: `mpfp` disables backward
/// verification, `mpbfn` adds it, `mpbfn-wca` adds collocation attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Mpfp,
    Mpbfn,
    MpbfnWca,
}

impl Variant {
    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Mpfp => (false, false),
            Variant::Mpbfn => (true, false),
            Variant::MpbfnWca => (true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mpfp => "mpfp",
            Variant::Mpbfn => "mpbfn",
            Variant::MpbfnWca => "mpbfn-wca",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpfp" => Ok(Variant::Mpfp),
            "mpbfn" => Ok(Variant::Mpbfn),
            "mpbfn-wca" => Ok(Variant::MpbfnWca),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected mpfp, mpbfn, or mpbfn-wca)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drop probability for the fact vector during training.
    pub dropout: f64,
    pub seed: u64,
    pub vocab_threshold: usize,
    pub renormalize_yhat: bool,
    pub bv_enabled: bool,
    pub wca_enabled: bool,
    /// Optional early exit for smoke runs: stop once the epoch's mean
    /// training loss drops below this value.
    pub stop_at_train_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 16,
            dropout: 0.5,
            seed: 42,
            vocab_threshold: 25,
            renormalize_yhat: true,
            bv_enabled: true,
            wca_enabled: true,
            stop_at_train_loss: None,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "batch_size",
    "epochs",
    "dropout",
    "seed",
    "vocab_threshold",
    "renormalize_yhat",
    "variant",
    "stop_at_train_loss",
];

impl TrainConfig {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = TrainConfig::default();
        let variant: Variant = kv.string("variant", "mpbfn-wca").parse()?;
        let (bv_enabled, wca_enabled) = variant.flags();
        let cfg = TrainConfig {
            learning_rate: kv.f64("learning_rate", d.learning_rate)?,
            batch_size: kv.usize("batch_size", d.batch_size)?,
            epochs: kv.usize("epochs", d.epochs)?,
            dropout: kv.f64("dropout", d.dropout)?,
            seed: kv.u64("seed", d.seed)?,
            vocab_threshold: kv.usize("vocab_threshold", d.vocab_threshold)?,
            renormalize_yhat: kv.bool("renormalize_yhat", d.renormalize_yhat)?,
            bv_enabled,
            wca_enabled,
            stop_at_train_loss: match kv.raw("stop_at_train_loss") {
                None => None,
                Some(_) => Some(kv.f64("stop_at_train_loss", 0.0)?),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must not be negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        match (self.bv_enabled, self.wca_enabled) {
            (false, _) => Variant::Mpfp,
            (true, false) => Variant::Mpbfn,
            (true, true) => Variant::MpbfnWca,
        }
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            bv_enabled: self.bv_enabled,
            wca_enabled: self.wca_enabled,
            renormalize: self.renormalize_yhat,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        let (bv, wca) = variant.flags();
        self.bv_enabled = bv;
        self.wca_enabled = wca;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout after the fact vector: in training, each component is
/// zeroed with probability `drop_p` and survivors scale by `1/(1-drop_p)`;
/// evaluation is the identity.
pub fn dropout_fact(
    tape: &Tape,
    fact: &Tensor,
    drop_p: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    if !(0.0..1.0).contains(&drop_p) {
        return Err(Error::Config(format!(
            "dropout probability {drop_p} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || drop_p == 0.0 {
        return Ok(fact.clone());
    }
    let keep_scale = 1.0 / (1.0 - drop_p);
    let mask: Vec<f64> = (0..fact.numel())
        .map(|_| if rng.gen::<f64>() < drop_p { 0.0 } else { keep_scale })
        .collect();
    tape.mul(fact, &Tensor::vector(mask))
}

/// Train/eval phase for one forward pass.
pub enum Phase<'r> {
    Train { drop_p: f64, rng: &'r mut ChaCha8Rng },
    Eval,
}

/// Full forward pass for one encoded case: fact encoding, dropout,
/// collocation context, and the decode.
pub fn forward_case(
    tape: &Tape,
    params: &ModelParams,
    graph: &TaskGraph,
    case: &IndexedCase,
    opts: &DecodeOptions,
    phase: Phase<'_>,
) -> Result<JudgmentOutput> {
    let fact_ori = encode_fact(tape, &params.encoder, &case.token_ids)?;
    let fact = match phase {
        Phase::Train { drop_p, rng } => dropout_fact(tape, &fact_ori, drop_p, Mode::Train, rng)?,
        Phase::Eval => fact_ori,
    };
    let ctx = if opts.wca_enabled {
        let wca = params.wca.as_ref().ok_or_else(|| {
            Error::Config(
                "collocation attention enabled but the graph has no target task with pre-order \
                 tasks"
                    .into(),
            )
        })?;
        Some(WcaContext {
            params: wca,
            ec: collocation_context(tape, &params.encoder, wca, case)?,
        })
    } else {
        None
    };
    decode_case(tape, &params.mpbfn, graph, &fact, ctx.as_ref(), opts)
}

/// Summed cross-entropy over the tasks with a log guard against vanishing
/// products: `Σ_k −log(ŷ_k[gold_k] + 1e-12)`.
pub fn multitask_loss(
    tape: &Tape,
    out: &JudgmentOutput,
    gold: &[usize],
    graph: &TaskGraph,
) -> Result<Tensor> {
    if gold.len() != graph.task_count() {
        return Err(Error::Config(format!(
            "{} labels for {} tasks",
            gold.len(),
            graph.task_count()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (i, (&label, y)) in gold.iter().zip(&out.y_hat).enumerate() {
        if label >= graph.classes(i) {
            return Err(Error::Label {
                task: graph.id(i).to_string(),
                index: label,
                classes: graph.classes(i),
            });
        }
        let logged = tape.log_shifted(y, LOG_GUARD);
        let picked = tape.pick(&logged, label)?;
        let term = tape.scale(&picked, -1.0);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(&acc, &term)?,
        });
    }
    Ok(total.expect("graphs have at least one task"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid: Option<EvalReport>,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub trace: Vec<EpochStat>,
}

fn encode_all(
    records: &[CaseRecord],
    vocab: &Vocabulary,
    graph: &TaskGraph,
    cfg: &ModelConfig,
) -> Result<Vec<IndexedCase>> {
    records
        .iter()
        .map(|r| encode_record(r, vocab, graph, cfg.max_doc_len, cfg.max_collocations))
        .collect()
}

fn check_wca_dims(cfg: &ModelConfig, train: &TrainConfig) -> Result<()> {
    if train.wca_enabled && cfg.d_w != cfg.d_c {
        return Err(Error::Config(format!(
            "collocation attention mixes number vectors (length d_c = {}) and word embeddings \
             (length d_w = {}) through one recurrent cell; set d_w = d_c or pick a variant \
             without wca",
            cfg.d_c, cfg.d_w
        )));
    }
    Ok(())
}

/// End-to-end training. Deterministic under `cfg.seed`: the shuffle and
/// dropout streams are fixed, and per-epoch losses are reduced in stable
/// case order.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    graph: &TaskGraph,
    train_records: &[CaseRecord],
    valid_records: &[CaseRecord],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    check_wca_dims(model_cfg, cfg)?;
    if train_records.is_empty() {
        return Err(Error::EmptyInput { op: "train" });
    }

    let vocab = Vocabulary::build(train_records, cfg.vocab_threshold)?;
    let cases = encode_all(train_records, &vocab, graph, model_cfg)?;
    let valid_cases = encode_all(valid_records, &vocab, graph, model_cfg)?;

    let params = ModelParams::init(model_cfg, graph, vocab.len(), cfg.seed)?;
    let named = params.named_tensors();
    let mut adam = AdamState::new(&named);
    let opts = cfg.decode_options();

    // The loop stream is decoupled from the init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        // Per-case losses are stored by case index and reduced in index
        // order, so the epoch mean does not depend on the shuffle.
        let mut case_losses = vec![0.0f64; cases.len()];
        for batch in order.chunks(cfg.batch_size) {
            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let tape = Tape::new();
                let out = forward_case(
                    &tape,
                    &params,
                    graph,
                    &cases[k],
                    &opts,
                    Phase::Train {
                        drop_p: cfg.dropout,
                        rng: &mut rng,
                    },
                )?;
                let loss = multitask_loss(&tape, &out, &cases[k].labels, graph)?;
                case_losses[k] = loss.item();
                let scaled = tape.scale(&loss, scale);
                tape.backward(&scaled)?;
            }
            adam_step(&named, &mut adam, cfg.learning_rate)?;
        }
        let mean_loss = case_losses.iter().sum::<f64>() / cases.len() as f64;
        let valid = if valid_cases.is_empty() {
            None
        } else {
            Some(evaluate_encoded(&params, graph, &valid_cases, &opts)?)
        };
        trace.push(EpochStat {
            epoch,
            mean_loss,
            valid,
        });
        if cfg.stop_at_train_loss.is_some_and(|t| mean_loss < t) {
            break;
        }
    }

    Ok(TrainOutcome {
        params,
        vocab,
        trace,
    })
}

/// Evaluate already-encoded cases (no dropout, pure function of the inputs).
pub fn evaluate_encoded(
    params: &ModelParams,
    graph: &TaskGraph,
    cases: &[IndexedCase],
    opts: &DecodeOptions,
) -> Result<EvalReport> {
    let mut confusions: Vec<Vec<Vec<usize>>> = graph
        .tasks()
        .iter()
        .map(|t| vec![vec![0usize; t.classes]; t.classes])
        .collect();
    for case in cases {
        let tape = Tape::new();
        let out = forward_case(&tape, params, graph, case, opts, Phase::Eval)?;
        for (task, &pred) in out.predicted().iter().enumerate() {
            let gold = case.labels[task];
            confusions[task][gold][pred] += 1;
        }
    }
    Ok(EvalReport {
        cases: cases.len(),
        tasks: confusions
            .into_iter()
            .enumerate()
            .map(|(i, c)| metrics_from_confusion(graph.id(i), c))
            .collect(),
    })
}

/// Encode records against a vocabulary and evaluate.
pub fn evaluate(
    params: &ModelParams,
    graph: &TaskGraph,
    vocab: &Vocabulary,
    model_cfg: &ModelConfig,
    records: &[CaseRecord],
    opts: &DecodeOptions,
) -> Result<EvalReport> {
    let cases = encode_all(records, vocab, graph, model_cfg)?;
    evaluate_encoded(params, graph, &cases, opts)
}
