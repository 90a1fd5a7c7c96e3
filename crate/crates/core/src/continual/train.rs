//! First-task adaptation: intervention training on a frozen backbone,
//! plus the full-finetune baseline.
//!
//! Both optimize cross-entropy through a temporary linear head over the
//! task's classes with SGD (momentum, cosine decay); the intervention
//! path adds lambda_orth * |R R^T - I|_F^2 per edited layer and leaves
//! the backbone bitwise untouched.

use crate::continual::TrainHyper;
use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix, SeededRng};
use crate::nn::opt::{cosine_lr, sgd_slot, softmax_cross_entropy};
use crate::nn::{backward, fit_backbone, forward, gather_rows, FrozenEncoder, LinearHead, Trainables};
use crate::nn::EncoderParams;
use crate::reft::{init_interventions, InterventionConfig, Interventions};

/// Map task class ids to dense head indices (sorted order).
fn local_labels(data: &Dataset) -> (Vec<usize>, Vec<usize>) {
    let classes = data.present_classes();
    let mut lookup = vec![usize::MAX; data.num_classes];
    for (local, &c) in classes.iter().enumerate() {
        lookup[c] = local;
    }
    let labels = data.labels.iter().map(|&l| lookup[l]).collect();
    (classes, labels)
}

/// Loss trace from first-task training.
#[derive(Debug, Clone)]
pub struct FirstTaskReport {
    pub epoch_losses: Vec<f64>,
    pub orth_penalty_start: f64,
    pub orth_penalty_end: f64,
}

/// Gradient of lambda * |R R^T - I|_F^2 with respect to R: 4 lambda (R R^T - I) R.
fn add_orth_grad(grad_r: &mut Matrix, r: &Matrix, lambda: f64) -> Result<()> {
    if lambda == 0.0 {
        return Ok(());
    }
    let mut gram = matmul_nt(r, r)?;
    for i in 0..gram.rows() {
        let v = gram.get(i, i) - 1.0;
        gram.set(i, i, v);
    }
    let update = matmul(&gram, r)?;
    grad_r.add_scaled(&update, 4.0 * lambda);
    Ok(())
}

fn mean_orth_penalty(iv: &Interventions) -> f64 {
    if iv.params.is_empty() {
        return 0.0;
    }
    iv.params
        .iter()
        .map(|p| crate::reft::orth_penalty(&p.r))
        .sum::<f64>()
        / iv.params.len() as f64
}

/// Train interventions plus a temporary head on the first task's train
/// split. The backbone is frozen throughout and the head is discarded.
pub fn train_first_task(
    encoder: &FrozenEncoder,
    cfg: &InterventionConfig,
    task_train: &Dataset,
    hyper: &TrainHyper,
) -> Result<(Interventions, FirstTaskReport)> {
    hyper.validate()?;
    cfg.validate(encoder.config().depth, encoder.config().dim)?;
    if task_train.is_empty() {
        return Err(CoreError::EmptyInput("train_first_task: empty task"));
    }
    let backbone_before = encoder.param_checksum();

    let mut iv = Interventions::new(
        init_interventions(cfg, encoder.config().dim)?,
        cfg.positions,
    );
    let orth_penalty_start = mean_orth_penalty(&iv);

    let (classes, labels) = local_labels(task_train);
    let mut head_rng = SeededRng::new(hyper.seed).derive(5);
    let mut head = LinearHead::init(&mut head_rng, classes.len(), encoder.config().dim);
    let mut head_vel = LinearHead::zeros(classes.len(), encoder.config().dim);
    let mut velocity: Vec<(Matrix, Matrix, Vec<f64>)> = iv
        .params
        .iter()
        .map(|p| {
            (
                Matrix::zeros(p.rank, p.dim),
                Matrix::zeros(p.rank, p.dim),
                vec![0.0; p.rank],
            )
        })
        .collect();

    let n = task_train.len();
    let steps_per_epoch = n.div_ceil(hyper.batch);
    let total_steps = hyper.epochs * steps_per_epoch;
    let mut step = 0;
    let mut shuffle_rng = SeededRng::new(hyper.seed).derive(13);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for _epoch in 0..hyper.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let batch = gather_rows(&task_train.inputs, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (features, tape) = forward(encoder, &batch, Some(&iv))?;
            let logits = head.logits(&features)?;
            let (ce, grad_logits) = softmax_cross_entropy(&logits, &batch_labels);
            let orth: f64 = iv
                .params
                .iter()
                .map(|p| crate::reft::orth_penalty(&p.r))
                .sum();
            let loss = ce + hyper.lambda_orth * orth;
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
            let grads = backward(
                encoder,
                Some(&iv),
                &tape,
                &grad_features,
                Trainables::InterventionsOnly,
            )?;
            debug_assert!(grads.backbone.is_none());

            let lr = cosine_lr(hyper.lr, step, total_steps);
            for (idx, (slot, g)) in iv.params.iter_mut().zip(&grads.interventions).enumerate() {
                debug_assert_eq!(slot.layer, g.layer);
                let mut grad_r = g.r.clone();
                add_orth_grad(&mut grad_r, &slot.r, hyper.lambda_orth)?;
                let (vr, vw, vb) = &mut velocity[idx];
                sgd_slot(
                    slot.r.data_mut(),
                    grad_r.data(),
                    vr.data_mut(),
                    lr,
                    hyper.momentum,
                    hyper.weight_decay,
                );
                sgd_slot(
                    slot.w.data_mut(),
                    g.w.data(),
                    vw.data_mut(),
                    lr,
                    hyper.momentum,
                    hyper.weight_decay,
                );
                sgd_slot(slot.b.as_mut_slice(), g.b.as_slice(), vb, lr, hyper.momentum, 0.0);
            }
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

    debug_assert_eq!(encoder.param_checksum(), backbone_before);
    let orth_penalty_end = mean_orth_penalty(&iv);
    Ok((
        iv,
        FirstTaskReport {
            epoch_losses,
            orth_penalty_start,
            orth_penalty_end,
        },
    ))
}

/// Baseline: unfreeze a copy of the backbone and finetune everything on
/// the first task, then freeze again. The input encoder is untouched.
pub fn full_finetune_first_task(
    encoder: &FrozenEncoder,
    task_train: &Dataset,
    hyper: &TrainHyper,
) -> Result<FrozenEncoder> {
    hyper.validate()?;
    if task_train.is_empty() {
        return Err(CoreError::EmptyInput("full_finetune_first_task: empty task"));
    }
    let (classes, labels) = local_labels(task_train);
    let local = Dataset::new(
        task_train.inputs.clone(),
        labels,
        None,
        classes.len(),
    )?;
    let mut params: EncoderParams = encoder.params().clone();
    let mut head_rng = SeededRng::new(hyper.seed).derive(5);
    let mut head = LinearHead::init(&mut head_rng, classes.len(), encoder.config().dim);
    fit_backbone(encoder.config(), &mut params, &mut head, &local, hyper)?;
    Ok(FrozenEncoder::from_parts(encoder.config().clone(), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_cil, split_tasks};
    use crate::continual::Scenario;
    use crate::nn::{pretrain, EncoderConfig, InputMode};
    use crate::reft::Positions;

    fn cfg() -> EncoderConfig {
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

    fn hyper(epochs: usize) -> TrainHyper {
        TrainHyper {
            lr: 0.05,
            weight_decay: 0.0005,
            batch: 32,
            epochs,
            momentum: 0.9,
            lambda_orth: 1.0,
            seed: 1993,
        }
    }

    #[test]
    fn first_task_trains_and_leaves_backbone_untouched() {
        let (base, down) = make_synthetic_cil(6, 16, 30, 0.8, 11).unwrap();
        let (enc, _) = pretrain(&cfg(), &base, &hyper(3)).unwrap();
        let stream = split_tasks(&down, 2, 1993, Scenario::Cil).unwrap();
        let icfg = InterventionConfig {
            layers: vec![0, 1],
            rank: 4,
            positions: Positions::All,
            lambda_orth: 1.0,
            init_seed: 1993,
        };
        let before = enc.param_checksum();
        let (iv, report) =
            train_first_task(&enc, &icfg, &stream.tasks[0].train, &hyper(6)).unwrap();
        assert_eq!(enc.param_checksum(), before);
        assert!(
            report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap(),
            "{:?}",
            report.epoch_losses
        );
        // soft orthogonality keeps R near the manifold
        assert!(report.orth_penalty_end < 0.0025, "{}", report.orth_penalty_end);
        assert_eq!(iv.params.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let (base, down) = make_synthetic_cil(4, 16, 20, 0.5, 3).unwrap();
        let (enc, _) = pretrain(&cfg(), &base, &hyper(2)).unwrap();
        let stream = split_tasks(&down, 2, 1993, Scenario::Cil).unwrap();
        let icfg = InterventionConfig {
            layers: vec![1],
            rank: 4,
            positions: Positions::All,
            lambda_orth: 1.0,
            init_seed: 5,
        };
        let (a, _) = train_first_task(&enc, &icfg, &stream.tasks[0].train, &hyper(2)).unwrap();
        let (b, _) = train_first_task(&enc, &icfg, &stream.tasks[0].train, &hyper(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_finetune_changes_a_copy_only() {
        let (base, down) = make_synthetic_cil(4, 16, 20, 0.5, 9).unwrap();
        let (enc, _) = pretrain(&cfg(), &base, &hyper(2)).unwrap();
        let stream = split_tasks(&down, 2, 1993, Scenario::Cil).unwrap();
        let before = enc.param_checksum();
        let tuned = full_finetune_first_task(&enc, &stream.tasks[0].train, &hyper(2)).unwrap();
        assert_eq!(enc.param_checksum(), before);
        assert_ne!(tuned.param_checksum(), before);
        assert!(tuned.frozen());
    }
}
