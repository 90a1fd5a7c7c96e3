//! Frozen transformer encoder: tokenize, embed, pre-norm blocks, and the
//! representation edits applied after selected block outputs.
//!
//! Hidden state layout: one Matrix of (batch * tokens) rows, `dim` wide;
//! sample s owns rows s*tokens .. (s+1)*tokens, the class token is row
//! s*tokens. The feature of a sample is its class-token row after the
//! final block (no extra norm), so a depth-0 encoder returns the pooled
//! embedding itself.

use crate::error::{CoreError, Result};
use crate::linalg::{dot, matmul_nt, Matrix, Vector};
use crate::nn::config::{EncoderConfig, InputMode};
use crate::nn::params::EncoderParams;
use crate::reft::{edit_coords, Interventions, Positions};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Encoder with immutable weights. Constructed by `pretrain`, by
/// `seeded` (random frozen weights, for tests and tooling), or loaded
/// from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    config: EncoderConfig,
    params: EncoderParams,
    frozen: bool,
}

impl FrozenEncoder {
    pub(crate) fn from_parts(config: EncoderConfig, params: EncoderParams) -> FrozenEncoder {
        FrozenEncoder {
            config,
            params,
            frozen: true,
        }
    }

    /// Freshly initialized weights from the config seed, frozen as-is.
    pub fn seeded(config: &EncoderConfig) -> Result<FrozenEncoder> {
        config.validate()?;
        Ok(FrozenEncoder::from_parts(
            config.clone(),
            EncoderParams::init(config),
        ))
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Bitwise checksum over all backbone parameters.
    pub fn param_checksum(&self) -> u64 {
        self.params.checksum()
    }

    pub fn total_param_count(&self) -> usize {
        self.params.param_count()
    }
}

/// Cached activations from one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    pub(crate) n: usize,
    pub(crate) token_rows: Matrix,
    pub(crate) blocks: Vec<BlockTape>,
    pub(crate) positions: Positions,
}

impl Tape {
    /// Number of recorded block layers.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockTape {
    pub x_in: Matrix,
    pub ln1_out: Matrix,
    pub ln1_mean: Vec<f64>,
    pub ln1_istd: Vec<f64>,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Softmax rows, indexed ((s*heads + h)*tokens + t1)*tokens + t2.
    pub probs: Vec<f64>,
    pub ctx: Matrix,
    pub x_mid: Matrix,
    pub ln2_out: Matrix,
    pub ln2_mean: Vec<f64>,
    pub ln2_istd: Vec<f64>,
    pub mlp_pre: Matrix,
    pub mlp_act: Matrix,
    pub x_out: Matrix,
    /// Post-edit hidden state, present iff this block was intervened.
    pub edited: Option<Matrix>,
}

/// Split each input row into per-token rows ((n * content_tokens) x token_dim).
pub(crate) fn tokenize(cfg: &EncoderConfig, batch: &Matrix) -> Result<Matrix> {
    if batch.cols() != cfg.input_len() {
        return Err(CoreError::ShapeMismatch {
            op: "tokenize",
            left_rows: batch.rows(),
            left_cols: batch.cols(),
            right_rows: 1,
            right_cols: cfg.input_len(),
        });
    }
    let c = cfg.content_tokens();
    let td = cfg.token_input_dim();
    let mut out = Matrix::zeros(batch.rows() * c, td);
    match cfg.input {
        InputMode::Tokens { .. } => {
            for s in 0..batch.rows() {
                let row = batch.row(s);
                for t in 0..c {
                    out.row_mut(s * c + t).copy_from_slice(&row[t * td..(t + 1) * td]);
                }
            }
        }
        InputMode::Patches { patch } => {
            let grid = (c as f64).sqrt().round() as usize;
            let side = grid * patch;
            for s in 0..batch.rows() {
                let img = batch.row(s);
                for gi in 0..grid {
                    for gj in 0..grid {
                        let dst = out.row_mut(s * c + gi * grid + gj);
                        for pi in 0..patch {
                            for pj in 0..patch {
                                dst[pi * patch + pj] =
                                    img[(gi * patch + pi) * side + gj * patch + pj];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Class token + projected content tokens + positional embeddings.
fn embed(cfg: &EncoderConfig, params: &EncoderParams, token_rows: &Matrix, n: usize) -> Result<Matrix> {
    let t = cfg.tokens;
    let c = cfg.content_tokens();
    let d = cfg.dim;
    let proj = matmul_nt(token_rows, &params.embed_w)?; // (n*c) x d
    let mut h0 = Matrix::zeros(n * t, d);
    for s in 0..n {
        {
            let row = h0.row_mut(s * t);
            for ((o, cls), pos) in row
                .iter_mut()
                .zip(params.cls.as_slice())
                .zip(params.pos.row(0))
            {
                *o = cls + pos;
            }
        }
        for tok in 0..c {
            let row = h0.row_mut(s * t + 1 + tok);
            for (((o, p), b), pos) in row
                .iter_mut()
                .zip(proj.row(s * c + tok))
                .zip(params.embed_b.as_slice())
                .zip(params.pos.row(1 + tok))
            {
                *o = p + b + pos;
            }
        }
    }
    Ok(h0)
}

pub(crate) fn layer_norm(
    x: &Matrix,
    g: &Vector,
    b: &Vector,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let mut out = Matrix::zeros(x.rows(), d);
    let mut means = Vec::with_capacity(x.rows());
    let mut istds = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        for (((o, xi), gi), bi) in out
            .row_mut(i)
            .iter_mut()
            .zip(row)
            .zip(g.as_slice())
            .zip(b.as_slice())
        {
            *o = (xi - mean) * istd * gi + bi;
        }
        means.push(mean);
        istds.push(istd);
    }
    (out, means, istds)
}

fn add_bias(x: &mut Matrix, b: &Vector) {
    for i in 0..x.rows() {
        for (o, bi) in x.row_mut(i).iter_mut().zip(b.as_slice()) {
            *o += bi;
        }
    }
}

fn forward_block(
    cfg: &EncoderConfig,
    block: &crate::nn::params::BlockParams,
    x_in: Matrix,
    n: usize,
) -> Result<BlockTape> {
    let t = cfg.tokens;
    let d = cfg.dim;
    let heads = cfg.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (ln1_out, ln1_mean, ln1_istd) = layer_norm(&x_in, &block.ln1_g, &block.ln1_b);
    let mut q = matmul_nt(&ln1_out, &block.wq)?;
    add_bias(&mut q, &block.bq);
    let mut k = matmul_nt(&ln1_out, &block.wk)?;
    add_bias(&mut k, &block.bk);
    let mut v = matmul_nt(&ln1_out, &block.wv)?;
    add_bias(&mut v, &block.bv);

    let mut probs = vec![0.0; n * heads * t * t];
    let mut ctx = Matrix::zeros(n * t, d);
    for s in 0..n {
        for h in 0..heads {
            let hs = h * dh;
            for t1 in 0..t {
                let q_row = &q.row(s * t + t1)[hs..hs + dh];
                let base = ((s * heads + h) * t + t1) * t;
                let mut max_score = f64::NEG_INFINITY;
                let mut scores = [0.0f64; 0].to_vec();
                scores.resize(t, 0.0);
                for t2 in 0..t {
                    let k_row = &k.row(s * t + t2)[hs..hs + dh];
                    let sc = dot(q_row, k_row) * scale;
                    scores[t2] = sc;
                    if sc > max_score {
                        max_score = sc;
                    }
                }
                let mut denom = 0.0;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max_score).exp();
                    denom += *sc;
                }
                for (t2, sc) in scores.iter().enumerate() {
                    probs[base + t2] = sc / denom;
                }
                let ctx_row = &mut ctx.row_mut(s * t + t1)[hs..hs + dh];
                for t2 in 0..t {
                    let p = probs[base + t2];
                    if p == 0.0 {
                        continue;
                    }
                    let v_row = &v.row(s * t + t2)[hs..hs + dh];
                    for (c, vv) in ctx_row.iter_mut().zip(v_row) {
                        *c += p * vv;
                    }
                }
            }
        }
    }

    let mut attn_out = matmul_nt(&ctx, &block.wo)?;
    add_bias(&mut attn_out, &block.bo);
    let mut x_mid = x_in.clone();
    x_mid.add_scaled(&attn_out, 1.0);

    let (ln2_out, ln2_mean, ln2_istd) = layer_norm(&x_mid, &block.ln2_g, &block.ln2_b);
    let mut mlp_pre = matmul_nt(&ln2_out, &block.w1)?;
    add_bias(&mut mlp_pre, &block.b1);
    let mut mlp_act = mlp_pre.clone();
    for x in mlp_act.data_mut() {
        *x = gelu(*x);
    }
    let mut mlp_out = matmul_nt(&mlp_act, &block.w2)?;
    add_bias(&mut mlp_out, &block.b2);
    let mut x_out = x_mid.clone();
    x_out.add_scaled(&mlp_out, 1.0);

    Ok(BlockTape {
        x_in,
        ln1_out,
        ln1_mean,
        ln1_istd,
        q,
        k,
        v,
        probs,
        ctx,
        x_mid,
        ln2_out,
        ln2_mean,
        ln2_istd,
        mlp_pre,
        mlp_act,
        x_out,
        edited: None,
    })
}

/// Rows of the hidden state an edit touches.
pub(crate) fn edited_rows(n: usize, tokens: usize, positions: Positions) -> Vec<usize> {
    match positions {
        Positions::All => (0..n * tokens).collect(),
        Positions::Cls => (0..n).map(|s| s * tokens).collect(),
    }
}

fn apply_edit(
    x: &Matrix,
    rows: &[usize],
    p: &crate::reft::InterventionParams,
) -> Matrix {
    let mut out = x.clone();
    for &i in rows {
        let h = x.row(i);
        let u = edit_coords(h, p);
        let row = out.row_mut(i);
        for (a, uq) in u.iter().enumerate() {
            if *uq == 0.0 {
                continue;
            }
            for (o, r) in row.iter_mut().zip(p.r.row(a)) {
                *o += uq * r;
            }
        }
    }
    out
}

fn validate_interventions(cfg: &EncoderConfig, iv: &Interventions) -> Result<()> {
    for p in &iv.params {
        if p.layer >= cfg.depth {
            return Err(CoreError::InvalidArgument(format!(
                "intervention on block {} but encoder depth is {}",
                p.layer, cfg.depth
            )));
        }
        if p.dim != cfg.dim {
            return Err(CoreError::ShapeMismatch {
                op: "intervention dim",
                left_rows: p.rank,
                left_cols: p.dim,
                right_rows: cfg.depth,
                right_cols: cfg.dim,
            });
        }
        if p.rank > cfg.dim {
            return Err(CoreError::InvalidArgument(format!(
                "intervention rank {} exceeds encoder dim {}",
                p.rank, cfg.dim
            )));
        }
    }
    Ok(())
}

/// Full forward pass. Returns per-sample class-token features (n x dim)
/// and the tape of cached activations.
pub fn forward(
    enc: &FrozenEncoder,
    batch: &Matrix,
    interventions: Option<&Interventions>,
) -> Result<(Matrix, Tape)> {
    forward_with(enc.config(), enc.params(), batch, interventions)
}

/// Forward on loose parameters; used by the training loops that own
/// not-yet-frozen weights.
pub(crate) fn forward_with(
    cfg: &EncoderConfig,
    params: &EncoderParams,
    batch: &Matrix,
    interventions: Option<&Interventions>,
) -> Result<(Matrix, Tape)> {
    if let Some(iv) = interventions {
        validate_interventions(cfg, iv)?;
    }
    let n = batch.rows();
    let token_rows = tokenize(cfg, batch)?;
    let h0 = embed(cfg, params, &token_rows, n)?;
    let positions = interventions.map_or(Positions::All, |iv| iv.positions);

    let mut blocks = Vec::with_capacity(cfg.depth);
    let mut x = h0;
    for (layer, block) in params.blocks.iter().enumerate() {
        let mut tape = forward_block(cfg, block, x, n)?;
        let next_in = if let Some(p) = interventions.and_then(|iv| iv.get(layer)) {
            let rows = edited_rows(n, cfg.tokens, positions);
            let edited = apply_edit(&tape.x_out, &rows, p);
            tape.edited = Some(edited.clone());
            edited
        } else {
            tape.x_out.clone()
        };
        blocks.push(tape);
        x = next_in;
    }

    let mut features = Matrix::zeros(n, cfg.dim);
    for s in 0..n {
        features.row_mut(s).copy_from_slice(x.row(s * cfg.tokens));
    }
    let tape = Tape {
        n,
        token_rows,
        blocks,
        positions,
    };
    Ok((features, tape))
}

/// Features without keeping tapes alive; evaluation runs in bounded
/// memory by chunking the batch.
pub fn features_only(
    enc: &FrozenEncoder,
    batch: &Matrix,
    interventions: Option<&Interventions>,
) -> Result<Matrix> {
    const CHUNK: usize = 64;
    let n = batch.rows();
    let mut out = Matrix::zeros(n, enc.config().dim);
    let mut start = 0;
    while start < n {
        let stop = (start + CHUNK).min(n);
        let mut chunk = Matrix::zeros(stop - start, batch.cols());
        for i in start..stop {
            chunk.row_mut(i - start).copy_from_slice(batch.row(i));
        }
        let (feats, _) = forward(enc, &chunk, interventions)?;
        for i in start..stop {
            out.row_mut(i).copy_from_slice(feats.row(i - start));
        }
        start = stop;
    }
    Ok(out)
}
