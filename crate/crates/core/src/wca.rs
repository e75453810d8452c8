//! Word collocation attention.
//!
//! Numbers are embedded digit by digit: the value becomes a fixed-length
//! little-endian digit vector, each digit indexes an embedding table, and the
//! per-digit embeddings concatenate to a vector of length `d_n · ln = d_c`
//! that is mixed with the unit token's embedding. Collocations are encoded by
//! running a gated recurrent cell over the two word vectors and averaging the
//! hidden states; a result-conditioned attention then pools the collocation
//! vectors per pre-order task of the penalty task, and the pooled vector
//! gates the task's fact semantics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::IndexedCase;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Little-endian decimal digits of a value: `digits[0]` is the unit digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitVector(Vec<u8>);

impl DigitVector {
    pub fn digits(&self) -> &[u8] {
        &self.0
    }
}

/// Decompose a non-negative value into its `ln` lowest decimal digits,
/// zero-padded; higher digits are discarded.
pub fn digitize(value: i64, ln: usize) -> Result<DigitVector> {
    if value < 0 {
        return Err(Error::Domain(format!("cannot digitize negative value {value}")));
    }
    let mut rest = value as u64;
    let mut digits = Vec::with_capacity(ln);
    for _ in 0..ln {
        digits.push((rest % 10) as u8);
        rest /= 10;
    }
    Ok(DigitVector(digits))
}

/// Gated recurrent cell over `d_in` inputs with hidden size `d_h`.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_input: Tensor,
    pub u_input: Tensor,
    pub b_input: Tensor,
    pub w_forget: Tensor,
    pub u_forget: Tensor,
    pub b_forget: Tensor,
    pub w_output: Tensor,
    pub u_output: Tensor,
    pub b_output: Tensor,
    pub w_cand: Tensor,
    pub u_cand: Tensor,
    pub b_cand: Tensor,
}

impl LstmParams {
    pub fn init(d_in: usize, d_h: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Result<Tensor> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Tensor::param(
                vec![rows, cols],
                (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
            )
        };
        let bias = |n: usize| Tensor::param(vec![n], vec![0.0; n]);
        Ok(LstmParams {
            w_input: mat(d_h, d_in, rng)?,
            u_input: mat(d_h, d_h, rng)?,
            b_input: bias(d_h)?,
            w_forget: mat(d_h, d_in, rng)?,
            u_forget: mat(d_h, d_h, rng)?,
            b_forget: bias(d_h)?,
            w_output: mat(d_h, d_in, rng)?,
            u_output: mat(d_h, d_h, rng)?,
            b_output: bias(d_h)?,
            w_cand: mat(d_h, d_in, rng)?,
            u_cand: mat(d_h, d_h, rng)?,
            b_cand: bias(d_h)?,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.b_input.numel()
    }

    fn gate(
        &self,
        tape: &Tape,
        w: &Tensor,
        u: &Tensor,
        b: &Tensor,
        x: &Tensor,
        h: &Tensor,
    ) -> Result<Tensor> {
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h)?;
        let lin = tape.add(&tape.add(&wx, &uh)?, b)?;
        Ok(lin)
    }

    /// One cell step: returns the next hidden and cell states.
    pub fn step(
        &self,
        tape: &Tape,
        x: &Tensor,
        h: &Tensor,
        c: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let i = tape.sigmoid(&self.gate(tape, &self.w_input, &self.u_input, &self.b_input, x, h)?);
        let f =
            tape.sigmoid(&self.gate(tape, &self.w_forget, &self.u_forget, &self.b_forget, x, h)?);
        let o =
            tape.sigmoid(&self.gate(tape, &self.w_output, &self.u_output, &self.b_output, x, h)?);
        let cand = tape.tanh(&self.gate(tape, &self.w_cand, &self.u_cand, &self.b_cand, x, h)?);
        let kept = tape.mul(&f, c)?;
        let written = tape.mul(&i, &cand)?;
        let c_next = tape.add(&kept, &written)?;
        let h_next = tape.mul(&o, &tape.tanh(&c_next))?;
        Ok((h_next, c_next))
    }
}

/// Attention and mixing weights for one pre-order task of the penalty task.
#[derive(Debug, Clone)]
pub struct WcaHead {
    pub task: usize,
    /// `[d_c, d_c]`
    pub attn: Tensor,
    /// `[d_c, 2 d_c]`
    pub mix_weight: Tensor,
    /// `[d_c]`
    pub mix_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct WcaParams {
    /// Task whose incoming predictions use the mixed semantics.
    pub target: usize,
    /// One `[10, d_n]` table per digit position, or a single shared table.
    pub digit_tables: Vec<Tensor>,
    pub shared_digit_table: bool,
    pub ln: usize,
    /// `[d_c, d_c + d_w]` mixing the digit embedding with the unit embedding.
    pub number_weight: Tensor,
    /// `[d_c]`
    pub number_bias: Tensor,
    pub cell: LstmParams,
    /// One head per pre-order task of `target`, in pre-order index order.
    pub heads: Vec<WcaHead>,
}

impl WcaParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        target: usize,
        pre_order: &[usize],
        d_w: usize,
        d_c: usize,
        d_n: usize,
        ln: usize,
        shared_digit_table: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if d_n * ln != d_c {
            return Err(Error::Config(format!(
                "digit embedding must tile the fact space: d_n ({d_n}) * ln ({ln}) != d_c ({d_c})"
            )));
        }
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Result<Tensor> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Tensor::param(
                vec![rows, cols],
                (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
            )
        };
        let table_count = if shared_digit_table { 1 } else { ln };
        let digit_tables: Vec<Tensor> = (0..table_count)
            .map(|_| {
                Tensor::param(
                    vec![10, d_n],
                    (0..10 * d_n).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                )
            })
            .collect::<Result<_>>()?;
        let number_weight = mat(d_c, d_c + d_w, rng)?;
        let number_bias = Tensor::param(vec![d_c], vec![0.0; d_c])?;
        let cell = LstmParams::init(d_w, d_c, rng)?;
        let heads = pre_order
            .iter()
            .map(|&task| {
                Ok(WcaHead {
                    task,
                    attn: mat(d_c, d_c, rng)?,
                    mix_weight: mat(d_c, 2 * d_c, rng)?,
                    mix_bias: Tensor::param(vec![d_c], vec![0.0; d_c])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WcaParams {
            target,
            digit_tables,
            shared_digit_table,
            ln,
            number_weight,
            number_bias,
            cell,
            heads,
        })
    }

    pub fn head_for(&self, task: usize) -> Option<&WcaHead> {
        self.heads.iter().find(|h| h.task == task)
    }

    fn table_for(&self, position: usize) -> &Tensor {
        if self.shared_digit_table {
            &self.digit_tables[0]
        } else {
            &self.digit_tables[position]
        }
    }
}

/// Digit-wise number embedding fused with the unit token's embedding:
/// `tanh(Wn · (num ⊕ x_unit) + bn)`.
pub fn number_semantic(
    tape: &Tape,
    wca: &WcaParams,
    digits: &DigitVector,
    unit_embedding: &Tensor,
) -> Result<Tensor> {
    if digits.0.len() != wca.ln {
        return Err(Error::Annotation(format!(
            "digit vector has {} digits, expected {}",
            digits.0.len(),
            wca.ln
        )));
    }
    let parts: Vec<Tensor> = digits
        .0
        .iter()
        .enumerate()
        .map(|(pos, &d)| tape.embedding_lookup(wca.table_for(pos), d as usize))
        .collect::<Result<_>>()?;
    let num = tape.concat_all(&parts)?;
    let joined = tape.concat(&num, unit_embedding)?;
    let lin = tape.add(&tape.matmul(&wca.number_weight, &joined)?, &wca.number_bias)?;
    Ok(tape.tanh(&lin))
}

/// Run the recurrent cell over the two collocation word vectors from a zero
/// initial state and return the mean of the two hidden states.
pub fn encode_collocation(
    tape: &Tape,
    cell: &LstmParams,
    first: &Tensor,
    second: &Tensor,
) -> Result<Tensor> {
    let d_h = cell.hidden_size();
    let h0 = Tensor::zeros(vec![d_h]);
    let c0 = Tensor::zeros(vec![d_h]);
    let (h1, c1) = cell.step(tape, first, &h0, &c0)?;
    let (h2, _) = cell.step(tape, second, &h1, &c1)?;
    let total = tape.add(&h1, &h2)?;
    Ok(tape.scale(&total, 0.5))
}

/// Result-conditioned attention over collocation vectors:
/// scores `tanh(Wa · ec_i)ᵀ · sem`, softmax weights, weighted sum.
/// Returns `(ect, alpha)`.
pub fn collocation_attention(
    tape: &Tape,
    ec: &[Tensor],
    sem: &Tensor,
    attn: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if ec.is_empty() {
        return Err(Error::EmptyInput {
            op: "collocation_attention",
        });
    }
    let scores: Vec<Tensor> = ec
        .iter()
        .map(|e| {
            let keyed = tape.tanh(&tape.matmul(attn, e)?);
            tape.dot(&keyed, sem)
        })
        .collect::<Result<_>>()?;
    let score_vec = tape.concat_all(&scores)?;
    let alpha = tape.softmax(&score_vec)?;
    let stacked = tape.stack_rows(ec)?;
    let ect = tape.matmul(&alpha, &stacked)?;
    Ok((ect, alpha))
}

/// Mixed semantic vector for the penalty heads:
/// `elu(Wm · (ect ⊕ fact_ori) + bm) ⊗ fact_task`.
pub fn mixed_semantic(
    tape: &Tape,
    head: &WcaHead,
    ect: &Tensor,
    fact_ori: &Tensor,
    fact_task: &Tensor,
) -> Result<Tensor> {
    let joined = tape.concat(ect, fact_ori)?;
    let lin = tape.add(&tape.matmul(&head.mix_weight, &joined)?, &head.mix_bias)?;
    let gate = tape.elu(&lin);
    tape.mul(&gate, fact_task)
}

/// Per-case collocation vectors. Collocation words are embedded through the
/// word table; a word annotated as a numeral is replaced by its number
/// semantic vector.
pub fn collocation_context(
    tape: &Tape,
    encoder: &EncoderParams,
    wca: &WcaParams,
    case: &IndexedCase,
) -> Result<Vec<Tensor>> {
    let word_vector = |tape: &Tape, pos: usize| -> Result<Tensor> {
        let token_id = case.token_ids[pos];
        let embedding = tape.embedding_lookup(&encoder.word_embedding, token_id)?;
        match case.numerals.iter().find(|n| n.pos == pos) {
            Some(numeral) => {
                let digits = digitize(numeral.value, wca.ln)?;
                number_semantic(tape, wca, &digits, &embedding)
            }
            None => Ok(embedding),
        }
    };
    case.collocations
        .iter()
        .map(|&(a, b)| {
            let first = word_vector(tape, a)?;
            let second = word_vector(tape, b)?;
            encode_collocation(tape, &wca.cell, &first, &second)
        })
        .collect()
}
