//! Parameter containers for the encoder and the linear head.
//!
//! The same structs hold parameters and their gradients. Flat order
//! (used by checkpoints, checksums, and the SGD walker):
//! embed_w, embed_b, cls, pos, then per block ln1_g, ln1_b, wq, bq, wk,
//! bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2 — matrices row-major.

use crate::error::{CoreError, Result};
use crate::linalg::{Matrix, SeededRng, Vector};
use crate::nn::config::EncoderConfig;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Vector,
    pub ln1_b: Vector,
    pub wq: Matrix,
    pub bq: Vector,
    pub wk: Matrix,
    pub bk: Vector,
    pub wv: Matrix,
    pub bv: Vector,
    pub wo: Matrix,
    pub bo: Vector,
    pub ln2_g: Vector,
    pub ln2_b: Vector,
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embed_w: Matrix,
    pub embed_b: Vector,
    pub cls: Vector,
    pub pos: Matrix,
    pub blocks: Vec<BlockParams>,
}

fn ones(n: usize) -> Vector {
    Vector::from_vec(vec![1.0; n]).expect("finite")
}

impl BlockParams {
    fn init(rng: &mut SeededRng, dim: usize, mlp: usize) -> BlockParams {
        BlockParams {
            ln1_g: ones(dim),
            ln1_b: Vector::zeros(dim),
            wq: Matrix::gaussian(rng, dim, dim, INIT_STD),
            bq: Vector::zeros(dim),
            wk: Matrix::gaussian(rng, dim, dim, INIT_STD),
            bk: Vector::zeros(dim),
            wv: Matrix::gaussian(rng, dim, dim, INIT_STD),
            bv: Vector::zeros(dim),
            wo: Matrix::gaussian(rng, dim, dim, INIT_STD),
            bo: Vector::zeros(dim),
            ln2_g: ones(dim),
            ln2_b: Vector::zeros(dim),
            w1: Matrix::gaussian(rng, mlp, dim, INIT_STD),
            b1: Vector::zeros(mlp),
            w2: Matrix::gaussian(rng, dim, mlp, INIT_STD),
            b2: Vector::zeros(dim),
        }
    }

    fn zeros(dim: usize, mlp: usize) -> BlockParams {
        BlockParams {
            ln1_g: Vector::zeros(dim),
            ln1_b: Vector::zeros(dim),
            wq: Matrix::zeros(dim, dim),
            bq: Vector::zeros(dim),
            wk: Matrix::zeros(dim, dim),
            bk: Vector::zeros(dim),
            wv: Matrix::zeros(dim, dim),
            bv: Vector::zeros(dim),
            wo: Matrix::zeros(dim, dim),
            bo: Vector::zeros(dim),
            ln2_g: Vector::zeros(dim),
            ln2_b: Vector::zeros(dim),
            w1: Matrix::zeros(mlp, dim),
            b1: Vector::zeros(mlp),
            w2: Matrix::zeros(dim, mlp),
            b2: Vector::zeros(dim),
        }
    }
}

/// Parameter slot kinds, used to gate weight decay (matrices only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Weight,
    BiasOrNorm,
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig) -> EncoderParams {
        let mut rng = SeededRng::new(cfg.seed);
        let d = cfg.dim;
        let mlp = cfg.mlp_dim();
        EncoderParams {
            embed_w: Matrix::gaussian(&mut rng, d, cfg.token_input_dim(), INIT_STD),
            embed_b: Vector::zeros(d),
            cls: Vector::gaussian(&mut rng, d, INIT_STD),
            pos: Matrix::gaussian(&mut rng, cfg.tokens, d, INIT_STD),
            blocks: (0..cfg.depth)
                .map(|_| BlockParams::init(&mut rng, d, mlp))
                .collect(),
        }
    }

    pub fn zeros_like(cfg: &EncoderConfig) -> EncoderParams {
        let d = cfg.dim;
        let mlp = cfg.mlp_dim();
        EncoderParams {
            embed_w: Matrix::zeros(d, cfg.token_input_dim()),
            embed_b: Vector::zeros(d),
            cls: Vector::zeros(d),
            pos: Matrix::zeros(cfg.tokens, d),
            blocks: (0..cfg.depth).map(|_| BlockParams::zeros(d, mlp)).collect(),
        }
    }

    /// Visit every parameter slot in flat order.
    pub fn for_each_slot<'a>(&'a self, mut f: impl FnMut(SlotKind, &'a [f64])) {
        f(SlotKind::Weight, self.embed_w.data());
        f(SlotKind::BiasOrNorm, self.embed_b.as_slice());
        f(SlotKind::BiasOrNorm, self.cls.as_slice());
        f(SlotKind::Weight, self.pos.data());
        for b in &self.blocks {
            f(SlotKind::BiasOrNorm, b.ln1_g.as_slice());
            f(SlotKind::BiasOrNorm, b.ln1_b.as_slice());
            f(SlotKind::Weight, b.wq.data());
            f(SlotKind::BiasOrNorm, b.bq.as_slice());
            f(SlotKind::Weight, b.wk.data());
            f(SlotKind::BiasOrNorm, b.bk.as_slice());
            f(SlotKind::Weight, b.wv.data());
            f(SlotKind::BiasOrNorm, b.bv.as_slice());
            f(SlotKind::Weight, b.wo.data());
            f(SlotKind::BiasOrNorm, b.bo.as_slice());
            f(SlotKind::BiasOrNorm, b.ln2_g.as_slice());
            f(SlotKind::BiasOrNorm, b.ln2_b.as_slice());
            f(SlotKind::Weight, b.w1.data());
            f(SlotKind::BiasOrNorm, b.b1.as_slice());
            f(SlotKind::Weight, b.w2.data());
            f(SlotKind::BiasOrNorm, b.b2.as_slice());
        }
    }

    /// Visit every parameter slot mutably, in the same flat order.
    pub fn for_each_slot_mut(&mut self, mut f: impl FnMut(SlotKind, &mut [f64])) {
        f(SlotKind::Weight, self.embed_w.data_mut());
        f(SlotKind::BiasOrNorm, self.embed_b.as_mut_slice());
        f(SlotKind::BiasOrNorm, self.cls.as_mut_slice());
        f(SlotKind::Weight, self.pos.data_mut());
        for b in &mut self.blocks {
            f(SlotKind::BiasOrNorm, b.ln1_g.as_mut_slice());
            f(SlotKind::BiasOrNorm, b.ln1_b.as_mut_slice());
            f(SlotKind::Weight, b.wq.data_mut());
            f(SlotKind::BiasOrNorm, b.bq.as_mut_slice());
            f(SlotKind::Weight, b.wk.data_mut());
            f(SlotKind::BiasOrNorm, b.bk.as_mut_slice());
            f(SlotKind::Weight, b.wv.data_mut());
            f(SlotKind::BiasOrNorm, b.bv.as_mut_slice());
            f(SlotKind::Weight, b.wo.data_mut());
            f(SlotKind::BiasOrNorm, b.bo.as_mut_slice());
            f(SlotKind::BiasOrNorm, b.ln2_g.as_mut_slice());
            f(SlotKind::BiasOrNorm, b.ln2_b.as_mut_slice());
            f(SlotKind::Weight, b.w1.data_mut());
            f(SlotKind::BiasOrNorm, b.b1.as_mut_slice());
            f(SlotKind::Weight, b.w2.data_mut());
            f(SlotKind::BiasOrNorm, b.b2.as_mut_slice());
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_slot(|_, s| out.extend_from_slice(s));
        out
    }

    pub fn from_flat(cfg: &EncoderConfig, flat: &[f64]) -> Result<EncoderParams> {
        let mut p = EncoderParams::zeros_like(cfg);
        if flat.len() != p.param_count() {
            return Err(CoreError::Checkpoint(format!(
                "parameter count mismatch: expected {}, found {}",
                p.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        let mut bad = false;
        p.for_each_slot_mut(|_, s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            bad |= s.iter().any(|x| !x.is_finite());
            pos += s.len();
        });
        if bad {
            return Err(CoreError::NonFinite("encoder parameters"));
        }
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_slot(|_, s| n += s.len());
        n
    }

    /// FNV-1a over the exact parameter bits; order is the flat order.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf29ce484222325u64;
        self.for_each_slot(|_, s| {
            for x in s {
                for byte in x.to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x100000001b3);
                }
            }
        });
        hash
    }
}

impl EncoderParams {
    /// One SGD step against same-shaped gradients; weight decay applies
    /// to matrix weights only.
    pub(crate) fn sgd_step(
        &mut self,
        g: &EncoderParams,
        v: &mut EncoderParams,
        lr: f64,
        momentum: f64,
        wd: f64,
    ) {
        use crate::nn::opt::sgd_slot;
        sgd_slot(self.embed_w.data_mut(), g.embed_w.data(), v.embed_w.data_mut(), lr, momentum, wd);
        sgd_slot(self.embed_b.as_mut_slice(), g.embed_b.as_slice(), v.embed_b.as_mut_slice(), lr, momentum, 0.0);
        sgd_slot(self.cls.as_mut_slice(), g.cls.as_slice(), v.cls.as_mut_slice(), lr, momentum, 0.0);
        sgd_slot(self.pos.data_mut(), g.pos.data(), v.pos.data_mut(), lr, momentum, wd);
        for ((p, gb), vb) in self.blocks.iter_mut().zip(&g.blocks).zip(v.blocks.iter_mut()) {
            sgd_slot(p.ln1_g.as_mut_slice(), gb.ln1_g.as_slice(), vb.ln1_g.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.ln1_b.as_mut_slice(), gb.ln1_b.as_slice(), vb.ln1_b.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.wq.data_mut(), gb.wq.data(), vb.wq.data_mut(), lr, momentum, wd);
            sgd_slot(p.bq.as_mut_slice(), gb.bq.as_slice(), vb.bq.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.wk.data_mut(), gb.wk.data(), vb.wk.data_mut(), lr, momentum, wd);
            sgd_slot(p.bk.as_mut_slice(), gb.bk.as_slice(), vb.bk.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.wv.data_mut(), gb.wv.data(), vb.wv.data_mut(), lr, momentum, wd);
            sgd_slot(p.bv.as_mut_slice(), gb.bv.as_slice(), vb.bv.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.wo.data_mut(), gb.wo.data(), vb.wo.data_mut(), lr, momentum, wd);
            sgd_slot(p.bo.as_mut_slice(), gb.bo.as_slice(), vb.bo.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.ln2_g.as_mut_slice(), gb.ln2_g.as_slice(), vb.ln2_g.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.ln2_b.as_mut_slice(), gb.ln2_b.as_slice(), vb.ln2_b.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.w1.data_mut(), gb.w1.data(), vb.w1.data_mut(), lr, momentum, wd);
            sgd_slot(p.b1.as_mut_slice(), gb.b1.as_slice(), vb.b1.as_mut_slice(), lr, momentum, 0.0);
            sgd_slot(p.w2.data_mut(), gb.w2.data(), vb.w2.data_mut(), lr, momentum, wd);
            sgd_slot(p.b2.as_mut_slice(), gb.b2.as_slice(), vb.b2.as_mut_slice(), lr, momentum, 0.0);
        }
    }
}

/// Linear classification head: logits = features * W^T + b.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub w: Matrix,
    pub b: Vector,
}

impl LinearHead {
    pub fn init(rng: &mut SeededRng, classes: usize, dim: usize) -> LinearHead {
        LinearHead {
            w: Matrix::gaussian(rng, classes, dim, INIT_STD),
            b: Vector::zeros(classes),
        }
    }

    pub fn zeros(classes: usize, dim: usize) -> LinearHead {
        LinearHead {
            w: Matrix::zeros(classes, dim),
            b: Vector::zeros(classes),
        }
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let mut out = crate::linalg::matmul_nt(features, &self.w)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(self.b.as_slice()) {
                *o += b;
            }
        }
        Ok(out)
    }
}
