//! Convolutional fact encoder.
//!
//! Token embeddings are concatenated per sliding window, mapped through an
//! affine filter bank, max-pooled over window positions, and the pooled
//! blocks for all window lengths are concatenated into the fact vector of
//! length `d_c`. There is no activation between the affine map and the
//! pooling, and PAD embeds like any other token.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// One affine filter bank for a single window length.
#[derive(Debug, Clone)]
pub struct ConvBank {
    pub window: usize,
    /// `[filters, window * d_w]`
    pub weight: Tensor,
    /// `[filters]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    /// `[vocab, d_w]`
    pub word_embedding: Tensor,
    pub banks: Vec<ConvBank>,
}

impl EncoderParams {
    /// Embeddings drawn from U(−0.1, 0.1); filter weights use a fan-based
    /// uniform range; biases start at zero.
    pub fn init(
        vocab: usize,
        d_w: usize,
        windows: &[usize],
        d_c: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("encoder needs at least one window length".into()));
        }
        if d_c % windows.len() != 0 {
            return Err(Error::Config(format!(
                "d_c = {d_c} must split evenly across {} window lengths",
                windows.len()
            )));
        }
        let filters = d_c / windows.len();
        let embedding_data: Vec<f64> = (0..vocab * d_w).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let word_embedding = Tensor::param(vec![vocab, d_w], embedding_data)?;
        let mut banks = Vec::with_capacity(windows.len());
        for &h in windows {
            let fan_in = h * d_w;
            let bound = (6.0 / (fan_in + filters) as f64).sqrt();
            let weight_data: Vec<f64> = (0..filters * fan_in)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            banks.push(ConvBank {
                window: h,
                weight: Tensor::param(vec![filters, fan_in], weight_data)?,
                bias: Tensor::param(vec![filters], vec![0.0; filters])?,
            });
        }
        Ok(EncoderParams {
            word_embedding,
            banks,
        })
    }

    pub fn d_c(&self) -> usize {
        self.banks.iter().map(|b| b.bias.numel()).sum()
    }
}

fn bank_positions(
    tape: &Tape,
    bank: &ConvBank,
    embeds: &[Tensor],
) -> Result<Tensor> {
    let h = bank.window;
    let mut rows = Vec::with_capacity(embeds.len() - h + 1);
    for start in 0..=embeds.len() - h {
        let window = tape.concat_all(&embeds[start..start + h])?;
        let affine = tape.matmul(&bank.weight, &window)?;
        rows.push(tape.add(&affine, &bank.bias)?);
    }
    tape.stack_rows(&rows)
}

fn lookup_all(tape: &Tape, params: &EncoderParams, token_ids: &[usize]) -> Result<Vec<Tensor>> {
    let max_window = params.banks.iter().map(|b| b.window).max().unwrap_or(1);
    if token_ids.len() < max_window {
        return Err(Error::Degenerate {
            op: "encode_fact",
            detail: format!(
                "{} tokens cannot fill a window of {max_window}",
                token_ids.len()
            ),
        });
    }
    token_ids
        .iter()
        .map(|&id| tape.embedding_lookup(&params.word_embedding, id))
        .collect()
}

/// Encode a padded index sequence into the fact vector of length `d_c`.
pub fn encode_fact(tape: &Tape, params: &EncoderParams, token_ids: &[usize]) -> Result<Tensor> {
    let embeds = lookup_all(tape, params, token_ids)?;
    let mut pooled_blocks = Vec::with_capacity(params.banks.len());
    for bank in &params.banks {
        let stacked = bank_positions(tape, bank, &embeds)?;
        pooled_blocks.push(tape.max_pool_positions(&stacked)?);
    }
    tape.concat_all(&pooled_blocks)
}

/// Smallest gap between each pooling column's best and second-best position,
/// over all banks. Gradient checks need this margin comfortably above the
/// finite-difference step, since an argmax flip between the two probe points
/// makes the comparison meaningless.
pub fn pool_tie_margin(params: &EncoderParams, token_ids: &[usize]) -> Result<f64> {
    let tape = Tape::new();
    let embeds = lookup_all(&tape, params, token_ids)?;
    let mut margin = f64::INFINITY;
    for bank in &params.banks {
        let stacked = bank_positions(&tape, bank, &embeds)?;
        let shape = stacked.shape();
        let (rows, cols) = (shape[0], shape[1]);
        if rows < 2 {
            continue;
        }
        let v = stacked.value();
        for c in 0..cols {
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for r in 0..rows {
                let x = v[r * cols + c];
                if x > best {
                    second = best;
                    best = x;
                } else if x > second {
                    second = x;
                }
            }
            margin = margin.min(best - second);
        }
    }
    Ok(margin)
}
