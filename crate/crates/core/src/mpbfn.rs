//! The bi-feedback decoder over the task graph.
//!
//! Walking the tasks in topological order, each task's comprehensive result
//! is either a direct softmax head on the fact vector (root tasks) or the
//! normalized element-wise product of the predictions its pre-order tasks
//! made for it. The result mixes the task's latent state matrix into a
//! latent state vector, which drives both the forward predictions for
//! follow-up tasks and the sigmoid verification gates for pre-order tasks.
//! Gate products are normalized into a verification vector and fused with
//! the result by an element-wise product.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::tensor::{Tape, Tensor};
use crate::wca::{collocation_attention, mixed_semantic, WcaParams};

/// Learned state for one task: the per-class latent state matrix `[t, d_s]`
/// and the latent-to-semantic map `[d_c, d_s]`.
#[derive(Debug, Clone)]
pub struct TaskParams {
    pub latent_state: Tensor,
    pub state_to_sem: Tensor,
}

#[derive(Debug, Clone)]
pub struct AffineHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::param(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

impl AffineHead {
    fn init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(AffineHead {
            weight: glorot(rows, cols, rng)?,
            bias: Tensor::param(vec![rows], vec![0.0; rows])?,
        })
    }

    pub fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let lin = tape.matmul(&self.weight, x)?;
        tape.add(&lin, &self.bias)
    }
}

#[derive(Debug, Clone)]
pub struct MpbfnParams {
    pub tasks: Vec<TaskParams>,
    /// Direct softmax heads for root tasks (no pre-order tasks): `[t_i, d_c]`.
    pub root_heads: Vec<(usize, AffineHead)>,
    /// One forward head per edge `(pre, post)`: `[t_post, d_c]`.
    pub fwd_heads: Vec<((usize, usize), AffineHead)>,
    /// One gate head per edge, keyed `(verifier, target)` where the verifier
    /// is the edge's follow-up task: `[t_target, d_s]`.
    pub gate_heads: Vec<((usize, usize), AffineHead)>,
}

impl MpbfnParams {
    pub fn init(graph: &TaskGraph, d_c: usize, d_s: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let tasks = graph
            .tasks()
            .iter()
            .map(|t| {
                Ok(TaskParams {
                    latent_state: Tensor::param(
                        vec![t.classes, d_s],
                        (0..t.classes * d_s).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                    )?,
                    state_to_sem: glorot(d_c, d_s, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let root_heads = (0..graph.task_count())
            .filter(|&i| graph.is_root(i))
            .map(|i| Ok((i, AffineHead::init(graph.classes(i), d_c, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let fwd_heads = graph
            .edges()
            .iter()
            .map(|&(pre, post)| Ok(((pre, post), AffineHead::init(graph.classes(post), d_c, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let gate_heads = graph
            .edges()
            .iter()
            .map(|&(pre, post)| Ok(((post, pre), AffineHead::init(graph.classes(pre), d_s, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MpbfnParams {
            tasks,
            root_heads,
            fwd_heads,
            gate_heads,
        })
    }

    pub fn root_head(&self, task: usize) -> Result<&AffineHead> {
        self.root_heads
            .iter()
            .find(|(t, _)| *t == task)
            .map(|(_, h)| h)
            .ok_or_else(|| Error::Topology(format!("task {task} has no direct head")))
    }

    pub fn fwd_head(&self, pre: usize, post: usize) -> Result<&AffineHead> {
        self.fwd_heads
            .iter()
            .find(|(e, _)| *e == (pre, post))
            .map(|(_, h)| h)
            .ok_or_else(|| Error::Topology(format!("({pre}, {post}) is not an edge")))
    }

    pub fn gate_head(&self, verifier: usize, target: usize) -> Result<&AffineHead> {
        self.gate_heads
            .iter()
            .find(|(e, _)| *e == (verifier, target))
            .map(|(_, h)| h)
            .ok_or_else(|| {
                Error::Topology(format!("task {verifier} does not verify task {target}"))
            })
    }
}

// ── Single-step operations ───────────────────────────────────────────

/// Result-based latent state vector: the result distribution mixes the rows
/// of the latent state matrix, `lsv = Σ_j res_j · S_j`.
pub fn latent_state_vector(tape: &Tape, res: &Tensor, latent_state: &Tensor) -> Result<Tensor> {
    tape.matmul(res, latent_state)
}

/// Map a latent state vector into fact-semantic space: `elu(Ws · lsv)`.
pub fn task_semantic(tape: &Tape, state_to_sem: &Tensor, lsv: &Tensor) -> Result<Tensor> {
    let lin = tape.matmul(state_to_sem, lsv)?;
    Ok(tape.elu(&lin))
}

/// Plain forward prediction along one edge: gate the fact vector with the
/// task semantics and apply the edge's softmax head.
pub fn forward_predict(
    tape: &Tape,
    fact: &Tensor,
    sem: &Tensor,
    head: &AffineHead,
) -> Result<Tensor> {
    let fact_task = tape.mul(fact, sem)?;
    tape.softmax(&head.apply(tape, &fact_task)?)
}

/// Verification gate for one pre-order task: `sigmoid(Wg · lsv + bg)`.
pub fn backward_verify(tape: &Tape, lsv: &Tensor, head: &AffineHead) -> Result<Tensor> {
    Ok(tape.sigmoid(&head.apply(tape, lsv)?))
}

/// Fuse pre-order predictions: normalized element-wise product.
pub fn comprehensive_fp(tape: &Tape, factors: &[Tensor]) -> Result<Tensor> {
    let mut iter = factors.iter();
    let first = iter.next().ok_or_else(|| {
        Error::Ordering("comprehensive result requested before any pre-order prediction".into())
    })?;
    let mut product = first.clone();
    for f in iter {
        product = tape.mul(&product, f)?;
    }
    tape.normalize(&product)
}

/// Fuse follow-up gates: normalized element-wise product, or the all-ones
/// vector for tasks without follow-ups.
pub fn comprehensive_bv(tape: &Tape, gates: &[Tensor], classes: usize) -> Result<Tensor> {
    if gates.is_empty() {
        return Ok(Tensor::ones(vec![classes]));
    }
    let mut product = gates[0].clone();
    for g in &gates[1..] {
        product = tape.mul(&product, g)?;
    }
    tape.normalize(&product)
}

/// Final fusion `y = res ⊗ ver`, renormalized to a distribution when
/// `renormalize` is set (the default for training).
pub fn final_result(tape: &Tape, res: &Tensor, ver: &Tensor, renormalize: bool) -> Result<Tensor> {
    let fused = tape.mul(res, ver)?;
    if renormalize {
        tape.normalize(&fused)
    } else {
        Ok(fused)
    }
}

// ── Whole-case decoding ──────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub bv_enabled: bool,
    pub wca_enabled: bool,
    pub renormalize: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            bv_enabled: true,
            wca_enabled: true,
            renormalize: true,
        }
    }
}

/// Per-task distributions produced by one decode pass.
#[derive(Debug, Clone)]
pub struct JudgmentOutput {
    /// Comprehensive forward-prediction result per task.
    pub res: Vec<Tensor>,
    /// Comprehensive backward-verification result per task.
    pub ver: Vec<Tensor>,
    /// Fused final result per task.
    pub y_hat: Vec<Tensor>,
    /// Edge predictions keyed `(pre, post)`.
    pub preds: Vec<((usize, usize), Tensor)>,
    /// Verification gates keyed `(verifier, target)`; empty when BV is off.
    pub gates: Vec<((usize, usize), Tensor)>,
    /// Attention weights keyed by pre-order task of the penalty task; empty
    /// when WCA is off or the case has no collocations.
    pub attention: Vec<(usize, Tensor)>,
}

impl JudgmentOutput {
    /// Argmax class per task; ties break to the lowest class index.
    pub fn predicted(&self) -> Vec<usize> {
        self.y_hat.iter().map(argmax).collect()
    }

    /// Bitwise equality of every produced distribution.
    pub fn bits_eq(&self, other: &JudgmentOutput) -> bool {
        let tensors_eq = |a: &[Tensor], b: &[Tensor]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bits_eq(y))
        };
        let keyed_eq = |a: &[((usize, usize), Tensor)], b: &[((usize, usize), Tensor)]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|((ka, ta), (kb, tb))| ka == kb && ta.bits_eq(tb))
        };
        tensors_eq(&self.res, &other.res)
            && tensors_eq(&self.ver, &other.ver)
            && tensors_eq(&self.y_hat, &other.y_hat)
            && keyed_eq(&self.preds, &other.preds)
            && keyed_eq(&self.gates, &other.gates)
            && self.attention.len() == other.attention.len()
            && self
                .attention
                .iter()
                .zip(&other.attention)
                .all(|((ka, ta), (kb, tb))| ka == kb && ta.bits_eq(tb))
    }
}

pub fn argmax(t: &Tensor) -> usize {
    let v = t.value();
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Collocation context passed into decoding when WCA is active.
pub struct WcaContext<'a> {
    pub params: &'a WcaParams,
    pub ec: Vec<Tensor>,
}

/// Decode one case: evaluate comprehensive results in topological order,
/// then verification gates from each task's result-based latent state, then
/// the fused outputs. Gates consume the comprehensive results, not the fused
/// outputs, so the graph stays feed-forward.
pub fn decode_case(
    tape: &Tape,
    params: &MpbfnParams,
    graph: &TaskGraph,
    fact: &Tensor,
    wca: Option<&WcaContext<'_>>,
    opts: &DecodeOptions,
) -> Result<JudgmentOutput> {
    let n = graph.task_count();
    let wca_active = opts.wca_enabled && wca.is_some();
    let d_c = fact.numel();

    let mut res: Vec<Option<Tensor>> = vec![None; n];
    let mut lsv: Vec<Option<Tensor>> = vec![None; n];
    let mut edge_preds: HashMap<(usize, usize), Tensor> = HashMap::new();
    let mut preds_out = Vec::new();
    let mut attention = Vec::new();

    for &i in graph.topo_order() {
        let r = if graph.is_root(i) {
            tape.softmax(&params.root_head(i)?.apply(tape, fact)?)?
        } else {
            let factors: Vec<Tensor> = graph
                .pre_order(i)
                .iter()
                .map(|&j| {
                    edge_preds.get(&(j, i)).cloned().ok_or_else(|| {
                        Error::Ordering(format!(
                            "prediction ({j}, {i}) missing; topological order violated"
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            comprehensive_fp(tape, &factors)?
        };
        let l = latent_state_vector(tape, &r, &params.tasks[i].latent_state)?;

        if !graph.follow_up(i).is_empty() {
            let sem = task_semantic(tape, &params.tasks[i].state_to_sem, &l)?;
            let fact_task = tape.mul(fact, &sem)?;
            for &j in graph.follow_up(i) {
                let head = params.fwd_head(i, j)?;
                let basis = match wca {
                    Some(ctx) if wca_active && j == ctx.params.target => {
                        let wca_head = ctx.params.head_for(i).ok_or_else(|| {
                            Error::Topology(format!(
                                "no collocation head for pre-order task {i} of task {j}"
                            ))
                        })?;
                        let ect = if ctx.ec.is_empty() {
                            Tensor::zeros(vec![d_c])
                        } else {
                            let (ect, alpha) =
                                collocation_attention(tape, &ctx.ec, &sem, &wca_head.attn)?;
                            attention.push((i, alpha));
                            ect
                        };
                        mixed_semantic(tape, wca_head, &ect, fact, &fact_task)?
                    }
                    _ => fact_task.clone(),
                };
                let pred = tape.softmax(&head.apply(tape, &basis)?)?;
                preds_out.push(((i, j), pred.clone()));
                edge_preds.insert((i, j), pred);
            }
        }

        res[i] = Some(r);
        lsv[i] = Some(l);
    }

    let mut gates_out = Vec::new();
    let mut gate_by_key: HashMap<(usize, usize), Tensor> = HashMap::new();
    if opts.bv_enabled {
        for &i in graph.topo_order() {
            for &j in graph.pre_order(i) {
                let head = params.gate_head(i, j)?;
                let gate = backward_verify(tape, lsv[i].as_ref().unwrap(), head)?;
                gates_out.push(((i, j), gate.clone()));
                gate_by_key.insert((i, j), gate);
            }
        }
    }

    let mut ver = Vec::with_capacity(n);
    let mut y_hat = Vec::with_capacity(n);
    let res: Vec<Tensor> = res.into_iter().map(Option::unwrap).collect();
    for i in 0..n {
        let v = if opts.bv_enabled {
            let gates: Vec<Tensor> = graph
                .follow_up(i)
                .iter()
                .map(|&j| gate_by_key[&(j, i)].clone())
                .collect();
            comprehensive_bv(tape, &gates, graph.classes(i))?
        } else {
            Tensor::ones(vec![graph.classes(i)])
        };
        y_hat.push(final_result(tape, &res[i], &v, opts.renormalize)?);
        ver.push(v);
    }

    Ok(JudgmentOutput {
        res,
        ver,
        y_hat,
        preds: preds_out,
        gates: gates_out,
        attention,
    })
}

#[cfg(test)]
mod tests;
