//! Base-distribution pretraining of the full encoder.
//!
//! Mini-batch SGD (momentum, cosine decay, weight decay on matrix
//! weights) over all backbone parameters plus a temporary linear head;
//! the head is discarded and the result is frozen. Fully deterministic
//! for fixed config/data/hyper.

use crate::continual::TrainHyper;
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{matmul, matmul_tn, Matrix, SeededRng};
use crate::nn::backward::{backward_with, Trainables};
use crate::nn::config::EncoderConfig;
use crate::nn::encoder::{features_only, forward_with, FrozenEncoder};
use crate::nn::opt::{cosine_lr, sgd_slot, softmax_cross_entropy};
use crate::nn::params::{EncoderParams, LinearHead};

/// Loss trace and held-out accuracy from one pretraining run.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub epoch_losses: Vec<f64>,
    pub val_accuracy: f64,
    pub steps: usize,
}

pub(crate) fn gather_rows(inputs: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), inputs.cols());
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).copy_from_slice(inputs.row(i));
    }
    out
}

/// SGD over backbone + head on `data`. Returns per-epoch mean losses.
pub(crate) fn fit_backbone(
    cfg: &EncoderConfig,
    params: &mut EncoderParams,
    head: &mut LinearHead,
    data: &Dataset,
    hyper: &TrainHyper,
) -> Result<Vec<f64>> {
    let mut velocity = EncoderParams::zeros_like(cfg);
    let mut head_vel = LinearHead::zeros(head.w.rows(), cfg.dim);
    let mut shuffle_rng = SeededRng::new(hyper.seed).derive(11);

    let n = data.len();
    let steps_per_epoch = n.div_ceil(hyper.batch);
    let total_steps = hyper.epochs * steps_per_epoch;
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..hyper.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let batch = gather_rows(&data.inputs, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (features, tape) = forward_with(cfg, params, &batch, None)?;
            let logits = head.logits(&features)?;
            let (loss, grad_logits) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(CoreError::Diverged { step });
            }
            epoch_loss += loss * chunk.len() as f64;

            let grad_head_w = matmul_tn(&grad_logits, &features)?;
            let mut grad_head_b = vec![0.0; head.b.len()];
            for i in 0..grad_logits.rows() {
                for (o, g) in grad_head_b.iter_mut().zip(grad_logits.row(i)) {
                    *o += g;
                }
            }
            let grad_features = matmul(&grad_logits, &head.w)?;
            let grads = backward_with(cfg, params, None, &tape, &grad_features, Trainables::All)?;
            let backbone = grads.backbone.expect("requested");

            let lr = cosine_lr(hyper.lr, step, total_steps);
            params.sgd_step(
                &backbone,
                &mut velocity,
                lr,
                hyper.momentum,
                hyper.weight_decay,
            );
            sgd_slot(
                head.w.data_mut(),
                grad_head_w.data(),
                head_vel.w.data_mut(),
                lr,
                hyper.momentum,
                hyper.weight_decay,
            );
            sgd_slot(
                head.b.as_mut_slice(),
                &grad_head_b,
                head_vel.b.as_mut_slice(),
                lr,
                hyper.momentum,
                0.0,
            );
            step += 1;
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok(epoch_losses)
}

/// Train every encoder weight on the base distribution, discard the
/// temporary head, freeze. An internal stratified 80/20 split provides
/// the reported validation accuracy.
pub fn pretrain(
    cfg: &EncoderConfig,
    base_data: &Dataset,
    hyper: &TrainHyper,
) -> Result<(FrozenEncoder, PretrainReport)> {
    cfg.validate()?;
    hyper.validate()?;
    base_data.validate()?;
    if base_data.is_empty() {
        return Err(CoreError::EmptyInput("pretrain: empty base data"));
    }
    if base_data.dim() != cfg.input_len() {
        return Err(CoreError::ShapeMismatch {
            op: "pretrain input",
            left_rows: base_data.len(),
            left_cols: base_data.dim(),
            right_rows: 1,
            right_cols: cfg.input_len(),
        });
    }

    // internal stratified 80/20 for a held-out accuracy figure
    let mut split_rng = SeededRng::new(hyper.seed).derive(7);
    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    for rows in base_data.indices_by_class() {
        if rows.is_empty() {
            continue;
        }
        let mut shuffled = rows.clone();
        split_rng.shuffle(&mut shuffled);
        let n = shuffled.len();
        let keep = if n < 2 {
            n
        } else {
            ((n as f64 * 0.8).round() as usize).clamp(1, n - 1)
        };
        train_rows.extend_from_slice(&shuffled[..keep]);
        val_rows.extend_from_slice(&shuffled[keep..]);
    }
    train_rows.sort_unstable();
    val_rows.sort_unstable();
    let train = base_data.select(&train_rows);
    let val = base_data.select(&val_rows);

    let mut params = EncoderParams::init(cfg);
    let mut head_rng = SeededRng::new(cfg.seed).derive(3);
    let mut head = LinearHead::init(&mut head_rng, base_data.num_classes, cfg.dim);
    let epoch_losses = fit_backbone(cfg, &mut params, &mut head, &train, hyper)?;
    let steps = hyper.epochs * train.len().div_ceil(hyper.batch);

    let encoder = FrozenEncoder::from_parts(cfg.clone(), params);
    let val_accuracy = if val.is_empty() {
        0.0
    } else {
        let features = features_only(&encoder, &val.inputs, None)?;
        let logits = head.logits(&features)?;
        let correct = (0..val.len())
            .filter(|&i| {
                let row = logits.row(i);
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap();
                best == val.labels[i]
            })
            .count();
        correct as f64 / val.len() as f64
    };

    Ok((
        encoder,
        PretrainReport {
            epoch_losses,
            val_accuracy,
            steps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_cil;
    use crate::nn::InputMode;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            depth: 2,
            dim: 32,
            heads: 4,
            mlp_ratio: 2.0,
            tokens: 9,
            input: InputMode::Tokens { token_dim: 2 },
            seed: 7,
        }
    }

    fn small_hyper() -> TrainHyper {
        TrainHyper {
            lr: 0.05,
            weight_decay: 0.0005,
            batch: 32,
            epochs: 4,
            momentum: 0.9,
            lambda_orth: 1.0,
            seed: 1993,
        }
    }

    #[test]
    fn loss_decreases_and_beats_chance() {
        let (base, _) = make_synthetic_cil(5, 16, 40, 0.0, 21).unwrap();
        let (enc, report) = pretrain(&small_cfg(), &base, &small_hyper()).unwrap();
        assert!(enc.frozen());
        assert!(
            report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap(),
            "losses {:?}",
            report.epoch_losses
        );
        // > 2x chance (chance = 1/5)
        assert!(
            report.val_accuracy >= 0.4,
            "val accuracy {}",
            report.val_accuracy
        );
    }

    #[test]
    fn deterministic_encoders() {
        let (base, _) = make_synthetic_cil(4, 16, 12, 0.0, 5).unwrap();
        let mut hyper = small_hyper();
        hyper.epochs = 2;
        let (a, _) = pretrain(&small_cfg(), &base, &hyper).unwrap();
        let (b, _) = pretrain(&small_cfg(), &base, &hyper).unwrap();
        assert_eq!(a.param_checksum(), b.param_checksum());
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (base, _) = make_synthetic_cil(4, 10, 8, 0.0, 5).unwrap();
        assert!(pretrain(&small_cfg(), &base, &small_hyper()).is_err());
    }
}
