//! Model configuration and the full parameter bundle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KvMap;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::mpbfn::MpbfnParams;
use crate::tensor::Tensor;
use crate::wca::WcaParams;

/// Architecture hyperparameters. Defaults follow the reference setup:
/// 200-dimensional embeddings, four window lengths with 64 filters each,
/// 256-dimensional latent states, 8 digits at 32 dimensions apiece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_w: usize,
    pub d_c: usize,
    pub d_s: usize,
    pub d_n: usize,
    pub ln: usize,
    pub windows: Vec<usize>,
    pub max_doc_len: usize,
    pub max_collocations: usize,
    pub shared_digit_table: bool,
    /// Task whose incoming predictions use collocation attention.
    pub wca_target: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 200,
            d_c: 256,
            d_s: 256,
            d_n: 32,
            ln: 8,
            windows: vec![2, 3, 4, 5],
            max_doc_len: 512,
            max_collocations: 128,
            shared_digit_table: false,
            wca_target: "penalty".into(),
        }
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "d_w",
    "d_c",
    "d_s",
    "d_n",
    "ln",
    "windows",
    "max_doc_len",
    "max_collocations",
    "shared_digit_table",
    "wca_target",
];

impl ModelConfig {
    /// The gradient-check configuration: 8-dimensional embeddings and fact
    /// space, 12-token documents, four collocations.
    pub fn toy() -> Self {
        ModelConfig {
            d_w: 8,
            d_c: 8,
            d_s: 6,
            d_n: 2,
            ln: 4,
            windows: vec![2, 3],
            max_doc_len: 12,
            max_collocations: 4,
            shared_digit_table: false,
            wca_target: "penalty".into(),
        }
    }

    /// A small configuration for tests and quick experiments.
    pub fn desk() -> Self {
        ModelConfig {
            d_w: 16,
            d_c: 16,
            d_s: 12,
            d_n: 4,
            ln: 4,
            windows: vec![2, 3],
            max_doc_len: 16,
            max_collocations: 8,
            shared_digit_table: false,
            wca_target: "penalty".into(),
        }
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = ModelConfig::default();
        let d_c = kv.usize("d_c", d.d_c)?;
        let ln = kv.usize("ln", d.ln)?;
        // d_n defaults to the value that tiles d_c.
        let derived_d_n = if ln > 0 && d_c % ln == 0 { d_c / ln } else { d.d_n };
        let cfg = ModelConfig {
            d_w: kv.usize("d_w", d.d_w)?,
            d_c,
            d_s: kv.usize("d_s", d.d_s)?,
            d_n: kv.usize("d_n", derived_d_n)?,
            ln,
            windows: kv.usize_list("windows", &d.windows)?,
            max_doc_len: kv.usize("max_doc_len", d.max_doc_len)?,
            max_collocations: kv.usize("max_collocations", d.max_collocations)?,
            shared_digit_table: kv.bool("shared_digit_table", d.shared_digit_table)?,
            wca_target: kv.string("wca_target", &d.wca_target),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_w", self.d_w),
            ("d_c", self.d_c),
            ("d_s", self.d_s),
            ("d_n", self.d_n),
            ("ln", self.ln),
            ("max_doc_len", self.max_doc_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::Config("windows must be non-empty and positive".into()));
        }
        if self.d_c % self.windows.len() != 0 {
            return Err(Error::Config(format!(
                "d_c = {} must split evenly across {} window lengths",
                self.d_c,
                self.windows.len()
            )));
        }
        let max_window = *self.windows.iter().max().unwrap();
        if self.max_doc_len < max_window {
            return Err(Error::Config(format!(
                "max_doc_len = {} is shorter than the largest window {max_window}",
                self.max_doc_len
            )));
        }
        if self.d_n * self.ln != self.d_c {
            return Err(Error::Config(format!(
                "digit embedding must tile the fact space: d_n ({}) * ln ({}) != d_c ({})",
                self.d_n, self.ln, self.d_c
            )));
        }
        Ok(())
    }
}

/// Every learnable array of the model. WCA parameters are allocated whenever
/// the graph contains the target task with pre-order tasks, independent of
/// whether decoding uses them: this keeps initialization streams identical
/// across model variants under one seed.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub mpbfn: MpbfnParams,
    pub wca: Option<WcaParams>,
}

impl ModelParams {
    pub fn init(
        cfg: &ModelConfig,
        graph: &TaskGraph,
        vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(vocab_size, cfg.d_w, &cfg.windows, cfg.d_c, &mut rng)?;
        let mpbfn = MpbfnParams::init(graph, cfg.d_c, cfg.d_s, &mut rng)?;
        let wca = match graph.index_of(&cfg.wca_target) {
            Some(target) if !graph.pre_order(target).is_empty() => Some(WcaParams::init(
                target,
                graph.pre_order(target),
                cfg.d_w,
                cfg.d_c,
                cfg.d_n,
                cfg.ln,
                cfg.shared_digit_table,
                &mut rng,
            )?),
            _ => None,
        };
        Ok(ModelParams {
            encoder,
            mpbfn,
            wca,
        })
    }

    /// All parameters with stable names, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        out.push((
            "encoder.word_embedding".to_string(),
            self.encoder.word_embedding.clone(),
        ));
        for bank in &self.encoder.banks {
            out.push((format!("encoder.conv{}.weight", bank.window), bank.weight.clone()));
            out.push((format!("encoder.conv{}.bias", bank.window), bank.bias.clone()));
        }
        for (i, task) in self.mpbfn.tasks.iter().enumerate() {
            out.push((format!("task{i}.latent_state"), task.latent_state.clone()));
            out.push((format!("task{i}.state_to_sem"), task.state_to_sem.clone()));
        }
        for (i, head) in &self.mpbfn.root_heads {
            out.push((format!("root{i}.weight"), head.weight.clone()));
            out.push((format!("root{i}.bias"), head.bias.clone()));
        }
        for ((a, b), head) in &self.mpbfn.fwd_heads {
            out.push((format!("fwd{a}_{b}.weight"), head.weight.clone()));
            out.push((format!("fwd{a}_{b}.bias"), head.bias.clone()));
        }
        for ((a, b), head) in &self.mpbfn.gate_heads {
            out.push((format!("gate{a}_{b}.weight"), head.weight.clone()));
            out.push((format!("gate{a}_{b}.bias"), head.bias.clone()));
        }
        if let Some(wca) = &self.wca {
            for (k, table) in wca.digit_tables.iter().enumerate() {
                out.push((format!("wca.digit{k}"), table.clone()));
            }
            out.push(("wca.number.weight".to_string(), wca.number_weight.clone()));
            out.push(("wca.number.bias".to_string(), wca.number_bias.clone()));
            let cell = &wca.cell;
            for (name, t) in [
                ("wca.cell.w_input", &cell.w_input),
                ("wca.cell.u_input", &cell.u_input),
                ("wca.cell.b_input", &cell.b_input),
                ("wca.cell.w_forget", &cell.w_forget),
                ("wca.cell.u_forget", &cell.u_forget),
                ("wca.cell.b_forget", &cell.b_forget),
                ("wca.cell.w_output", &cell.w_output),
                ("wca.cell.u_output", &cell.u_output),
                ("wca.cell.b_output", &cell.b_output),
                ("wca.cell.w_cand", &cell.w_cand),
                ("wca.cell.u_cand", &cell.u_cand),
                ("wca.cell.b_cand", &cell.b_cand),
            ] {
                out.push((name.to_string(), t.clone()));
            }
            for head in &wca.heads {
                out.push((format!("wca.head{}.attn", head.task), head.attn.clone()));
                out.push((format!("wca.head{}.mix.weight", head.task), head.mix_weight.clone()));
                out.push((format!("wca.head{}.mix.bias", head.task), head.mix_bias.clone()));
            }
        }
        out
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.named_tensors() {
            t.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }
}
