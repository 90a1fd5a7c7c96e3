//! Reverse-mode gradients through the frozen encoder.
//!
//! Walks the tape backwards: edit -> MLP -> attention -> embedding.
//! Intervention parameters always receive gradients; backbone gradients
//! are produced only when requested (pretraining / full finetune), so a
//! frozen run simply has no backbone entries.

use crate::error::{CoreError, Result};
use crate::linalg::{dot, matmul, matmul_tn, Matrix, Vector};
use crate::nn::encoder::{edited_rows, gelu_grad, FrozenEncoder, Tape};
use crate::nn::params::{BlockParams, EncoderParams};
use crate::reft::{edit_coords, InterventionParams, Interventions};

/// Which parameters receive gradient entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainables {
    /// Intervention parameters only; the backbone stays untouched.
    InterventionsOnly,
    /// Backbone and interventions (pretraining, full finetune).
    All,
}

/// Per-layer gradients for (R, W, b).
#[derive(Debug, Clone)]
pub struct InterventionGrads {
    pub layer: usize,
    pub r: Matrix,
    pub w: Matrix,
    pub b: Vector,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// Aligned with the intervention stack passed to `backward`.
    pub interventions: Vec<InterventionGrads>,
    /// None unless `Trainables::All` was requested.
    pub backbone: Option<EncoderParams>,
}

fn colsum_into(g: &Matrix, out: &mut [f64]) {
    for i in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
}

/// dL/dx for y = LN(x) * gamma + beta, given cached mean/istd.
fn layer_norm_backward(
    g_out: &Matrix,
    x: &Matrix,
    mean: &[f64],
    istd: &[f64],
    gamma: &Vector,
    grads: Option<(&mut Vector, &mut Vector)>,
) -> Matrix {
    let d = x.cols();
    let mut gx = Matrix::zeros(x.rows(), d);
    let mut g_gamma = vec![0.0; d];
    let mut g_beta = vec![0.0; d];
    for i in 0..x.rows() {
        let xr = x.row(i);
        let gr = g_out.row(i);
        let (mu, is) = (mean[i], istd[i]);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            let xhat = (xr[j] - mu) * is;
            let dxhat = gr[j] * gamma.as_slice()[j];
            m1 += dxhat;
            m2 += dxhat * xhat;
            g_gamma[j] += gr[j] * xhat;
            g_beta[j] += gr[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
            let xhat = (xr[j] - mu) * is;
            let dxhat = gr[j] * gamma.as_slice()[j];
            *o = is * (dxhat - m1 - xhat * m2);
        }
    }
    if let Some((gg, gb)) = grads {
        for (o, v) in gg.as_mut_slice().iter_mut().zip(&g_gamma) {
            *o += v;
        }
        for (o, v) in gb.as_mut_slice().iter_mut().zip(&g_beta) {
            *o += v;
        }
    }
    gx
}

/// Backward through one edit: updates the layer's (R, W, b) grads and
/// rewrites the hidden-state gradient rows in place.
fn edit_backward(
    g: &mut Matrix,
    rows: &[usize],
    pre_edit: &Matrix,
    p: &InterventionParams,
    grads: &mut InterventionGrads,
) {
    for &i in rows {
        let h = pre_edit.row(i);
        let g_row = g.row(i).to_vec();
        let u = edit_coords(h, p);
        // rg = R g
        let mut rg = vec![0.0; p.rank];
        for (a, rga) in rg.iter_mut().enumerate() {
            *rga = dot(p.r.row(a), &g_row);
        }
        for a in 0..p.rank {
            let (ua, rga) = (u[a], rg[a]);
            grads.b.as_mut_slice()[a] += rga;
            let gw_row = grads.w.row_mut(a);
            for (o, hj) in gw_row.iter_mut().zip(h) {
                *o += rga * hj;
            }
            let gr_row = grads.r.row_mut(a);
            for ((o, gj), hj) in gr_row.iter_mut().zip(&g_row).zip(h) {
                *o += ua * gj - rga * hj;
            }
        }
        // dL/dh = g + W^T rg - R^T rg
        let out = g.row_mut(i);
        for (a, &rga) in rg.iter().enumerate() {
            if rga == 0.0 {
                continue;
            }
            for ((o, w), r) in out.iter_mut().zip(p.w.row(a)).zip(p.r.row(a)) {
                *o += rga * (w - r);
            }
        }
    }
}

struct BlockCtx<'a> {
    cfg: &'a crate::nn::EncoderConfig,
    n: usize,
}

fn block_backward(
    ctx: &BlockCtx,
    block: &BlockParams,
    bt: &crate::nn::encoder::BlockTape,
    g_out: &Matrix,
    mut grads: Option<&mut BlockParams>,
) -> Result<Matrix> {
    let t = ctx.cfg.tokens;
    let d = ctx.cfg.dim;
    let heads = ctx.cfg.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n = ctx.n;

    // MLP branch: x_out = x_mid + W2^T gelu(W1^T ln2(x_mid) + b1) + b2
    let g_act_lin = matmul(g_out, &block.w2)?; // (NT) x m
    let mut g_pre = g_act_lin;
    for (gp, pre) in g_pre.data_mut().iter_mut().zip(bt.mlp_pre.data()) {
        *gp *= gelu_grad(*pre);
    }
    if let Some(gr) = grads.as_deref_mut() {
        gr.w2.add_scaled(&matmul_tn(g_out, &bt.mlp_act)?, 1.0);
        colsum_into(g_out, gr.b2.as_mut_slice());
        gr.w1.add_scaled(&matmul_tn(&g_pre, &bt.ln2_out)?, 1.0);
        colsum_into(&g_pre, gr.b1.as_mut_slice());
    }
    let g_ln2 = matmul(&g_pre, &block.w1)?;
    let ln2_grads = grads
        .as_deref_mut()
        .map(|gr| (&mut gr.ln2_g, &mut gr.ln2_b));
    let mut g_x_mid = layer_norm_backward(
        &g_ln2,
        &bt.x_mid,
        &bt.ln2_mean,
        &bt.ln2_istd,
        &block.ln2_g,
        ln2_grads,
    );
    g_x_mid.add_scaled(g_out, 1.0); // residual

    // attention branch: x_mid = x_in + Wo^T ctx + bo
    let g_ctx = matmul(&g_x_mid, &block.wo)?;
    if let Some(gr) = grads.as_deref_mut() {
        gr.wo.add_scaled(&matmul_tn(&g_x_mid, &bt.ctx)?, 1.0);
        colsum_into(&g_x_mid, gr.bo.as_mut_slice());
    }

    let mut g_q = Matrix::zeros(n * t, d);
    let mut g_k = Matrix::zeros(n * t, d);
    let mut g_v = Matrix::zeros(n * t, d);
    let mut g_probs = vec![0.0; t];
    let mut g_scores = vec![0.0; t];
    for s in 0..n {
        for h in 0..heads {
            let hs = h * dh;
            for t1 in 0..t {
                let base = ((s * heads + h) * t + t1) * t;
                let g_ctx_row = &g_ctx.row(s * t + t1)[hs..hs + dh];
                for t2 in 0..t {
                    let v_row = &bt.v.row(s * t + t2)[hs..hs + dh];
                    g_probs[t2] = dot(g_ctx_row, v_row);
                    let p = bt.probs[base + t2];
                    if p != 0.0 {
                        let gv_row = &mut g_v.row_mut(s * t + t2)[hs..hs + dh];
                        for (o, gc) in gv_row.iter_mut().zip(g_ctx_row) {
                            *o += p * gc;
                        }
                    }
                }
                let inner: f64 = (0..t).map(|t2| bt.probs[base + t2] * g_probs[t2]).sum();
                for t2 in 0..t {
                    g_scores[t2] = bt.probs[base + t2] * (g_probs[t2] - inner) * scale;
                }
                let gq_row = &mut g_q.row_mut(s * t + t1)[hs..hs + dh];
                for t2 in 0..t {
                    let gs = g_scores[t2];
                    if gs == 0.0 {
                        continue;
                    }
                    let k_row = &bt.k.row(s * t + t2)[hs..hs + dh];
                    for (o, kk) in gq_row.iter_mut().zip(k_row) {
                        *o += gs * kk;
                    }
                }
                let q_row = bt.q.row(s * t + t1)[hs..hs + dh].to_vec();
                for t2 in 0..t {
                    let gs = g_scores[t2];
                    if gs == 0.0 {
                        continue;
                    }
                    let gk_row = &mut g_k.row_mut(s * t + t2)[hs..hs + dh];
                    for (o, qq) in gk_row.iter_mut().zip(&q_row) {
                        *o += gs * qq;
                    }
                }
            }
        }
    }

    if let Some(gr) = grads.as_deref_mut() {
        gr.wq.add_scaled(&matmul_tn(&g_q, &bt.ln1_out)?, 1.0);
        colsum_into(&g_q, gr.bq.as_mut_slice());
        gr.wk.add_scaled(&matmul_tn(&g_k, &bt.ln1_out)?, 1.0);
        colsum_into(&g_k, gr.bk.as_mut_slice());
        gr.wv.add_scaled(&matmul_tn(&g_v, &bt.ln1_out)?, 1.0);
        colsum_into(&g_v, gr.bv.as_mut_slice());
    }
    let mut g_ln1 = matmul(&g_q, &block.wq)?;
    g_ln1.add_scaled(&matmul(&g_k, &block.wk)?, 1.0);
    g_ln1.add_scaled(&matmul(&g_v, &block.wv)?, 1.0);
    let ln1_grads = grads
        .as_deref_mut()
        .map(|gr| (&mut gr.ln1_g, &mut gr.ln1_b));
    let mut g_x_in = layer_norm_backward(
        &g_ln1,
        &bt.x_in,
        &bt.ln1_mean,
        &bt.ln1_istd,
        &block.ln1_g,
        ln1_grads,
    );
    g_x_in.add_scaled(&g_x_mid, 1.0); // residual
    Ok(g_x_in)
}

fn embed_backward(
    cfg: &crate::nn::EncoderConfig,
    tape: &Tape,
    g_h0: &Matrix,
    grads: &mut EncoderParams,
) -> Result<()> {
    let t = cfg.tokens;
    let c = cfg.content_tokens();
    let n = tape.n;
    let mut g_proj = Matrix::zeros(n * c, cfg.dim);
    for s in 0..n {
        {
            let row = g_h0.row(s * t);
            for (o, v) in grads.cls.as_mut_slice().iter_mut().zip(row) {
                *o += v;
            }
            for (o, v) in grads.pos.row_mut(0).iter_mut().zip(row) {
                *o += v;
            }
        }
        for tok in 0..c {
            let row = g_h0.row(s * t + 1 + tok);
            for (o, v) in grads.pos.row_mut(1 + tok).iter_mut().zip(row) {
                *o += v;
            }
            g_proj.row_mut(s * c + tok).copy_from_slice(row);
        }
    }
    grads
        .embed_w
        .add_scaled(&matmul_tn(&g_proj, &tape.token_rows)?, 1.0);
    colsum_into(&g_proj, grads.embed_b.as_mut_slice());
    Ok(())
}

/// Reverse pass over a recorded tape. `grad_features` is dL/d(features),
/// shaped (batch x dim). Returns intervention gradients aligned with the
/// stack, plus backbone gradients iff `Trainables::All`.
pub fn backward(
    enc: &FrozenEncoder,
    interventions: Option<&Interventions>,
    tape: &Tape,
    grad_features: &Matrix,
    trainables: Trainables,
) -> Result<Gradients> {
    backward_with(enc.config(), enc.params(), interventions, tape, grad_features, trainables)
}

/// Backward on loose parameters, mirroring `forward_with`.
pub(crate) fn backward_with(
    cfg: &crate::nn::EncoderConfig,
    params: &EncoderParams,
    interventions: Option<&Interventions>,
    tape: &Tape,
    grad_features: &Matrix,
    trainables: Trainables,
) -> Result<Gradients> {
    if tape.blocks.len() != cfg.depth {
        return Err(CoreError::InvalidArgument(format!(
            "stale tape: {} recorded blocks for a depth-{} encoder",
            tape.blocks.len(),
            cfg.depth
        )));
    }
    if grad_features.rows() != tape.n || grad_features.cols() != cfg.dim {
        return Err(CoreError::ShapeMismatch {
            op: "backward grad_features",
            left_rows: grad_features.rows(),
            left_cols: grad_features.cols(),
            right_rows: tape.n,
            right_cols: cfg.dim,
        });
    }
    for layer in 0..cfg.depth {
        let taped = tape.blocks[layer].edited.is_some();
        let stacked = interventions.is_some_and(|iv| iv.get(layer).is_some());
        if taped != stacked {
            return Err(CoreError::InvalidArgument(format!(
                "mismatched tape: block {layer} edit presence differs from the intervention stack"
            )));
        }
    }

    let t = cfg.tokens;
    let n = tape.n;
    let mut g = Matrix::zeros(n * t, cfg.dim);
    for s in 0..n {
        g.row_mut(s * t).copy_from_slice(grad_features.row(s));
    }

    let mut iv_grads: Vec<InterventionGrads> = interventions
        .map(|iv| {
            iv.params
                .iter()
                .map(|p| InterventionGrads {
                    layer: p.layer,
                    r: Matrix::zeros(p.rank, p.dim),
                    w: Matrix::zeros(p.rank, p.dim),
                    b: Vector::zeros(p.rank),
                })
                .collect()
        })
        .unwrap_or_default();
    let mut backbone = match trainables {
        Trainables::All => Some(EncoderParams::zeros_like(cfg)),
        Trainables::InterventionsOnly => None,
    };

    let ctx = BlockCtx { cfg, n };
    for layer in (0..cfg.depth).rev() {
        let bt = &tape.blocks[layer];
        if bt.edited.is_some() {
            let iv = interventions.expect("checked above");
            let p = iv.get(layer).expect("checked above");
            let slot = iv_grads
                .iter_mut()
                .position(|gr| gr.layer == layer)
                .expect("aligned stack");
            let rows = edited_rows(n, t, tape.positions);
            edit_backward(&mut g, &rows, &bt.x_out, p, &mut iv_grads[slot]);
        }
        let block_grads = backbone.as_mut().map(|b| &mut b.blocks[layer]);
        g = block_backward(&ctx, &params.blocks[layer], bt, &g, block_grads)?;
    }
    if let Some(b) = backbone.as_mut() {
        embed_backward(cfg, tape, &g, b)?;
    }
    Ok(Gradients {
        interventions: iv_grads,
        backbone,
    })
}
