//! Experiment checkpoint `CORERUN1`: one container bundling encoder
//! weights, intervention parameters, and the classifier state.
//!
//! Flat parameter order: encoder (its documented flat order), then per
//! intervention layer R, W, b, then classifier floats in header order
//! (CIL: one prototype per listed class; TIL: per task, per class; DIL:
//! per domain, centers then per-class prototypes).

use serde::{Deserialize, Serialize};

use crate::container;
use crate::continual::prototype::{DomainRouter, PrototypeClassifier, Similarity};
use crate::continual::runner::{ScenarioModel, ScenarioState};
use crate::continual::Scenario;
use crate::error::{CoreError, Result};
use crate::linalg::{Matrix, Vector};
use crate::nn::{EncoderConfig, EncoderParams, FrozenEncoder};
use crate::reft::{InterventionParams, Interventions, Positions};

const RUN_MAGIC: &[u8; 8] = b"CORERUN1";

#[derive(Serialize, Deserialize)]
struct IvMeta {
    layers: Vec<usize>,
    rank: usize,
    dim: usize,
    positions: Positions,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StateMeta {
    Cil {
        classes: Vec<usize>,
    },
    Til {
        tasks: Vec<(usize, Vec<usize>)>,
    },
    Dil {
        domains: Vec<(usize, usize, Vec<usize>)>,
    },
}

#[derive(Serialize, Deserialize)]
struct RunHeader {
    scenario: Scenario,
    encoder: EncoderConfig,
    interventions: Option<IvMeta>,
    similarity: Similarity,
    state: StateMeta,
}

fn push_classifier(flat: &mut Vec<f64>, clf: &PrototypeClassifier) {
    for class in clf.classes().collect::<Vec<_>>() {
        flat.extend_from_slice(clf.prototype(class).expect("listed").as_slice());
    }
}

pub fn save_run(scenario: Scenario, model: &ScenarioModel) -> Result<Vec<u8>> {
    let mut flat = model.encoder.params().to_flat();
    let interventions = model.interventions.as_ref().map(|iv| {
        for p in &iv.params {
            flat.extend_from_slice(p.r.data());
            flat.extend_from_slice(p.w.data());
            flat.extend_from_slice(p.b.as_slice());
        }
        IvMeta {
            layers: iv.params.iter().map(|p| p.layer).collect(),
            rank: iv.params.first().map_or(0, |p| p.rank),
            dim: iv.params.first().map_or(0, |p| p.dim),
            positions: iv.positions,
        }
    });

    let (similarity, state) = match &model.state {
        ScenarioState::Cil { classifier } => {
            push_classifier(&mut flat, classifier);
            (
                classifier.similarity,
                StateMeta::Cil {
                    classes: classifier.classes().collect(),
                },
            )
        }
        ScenarioState::Til { classifiers } => {
            let mut tasks = Vec::new();
            for (&task_id, clf) in classifiers {
                push_classifier(&mut flat, clf);
                tasks.push((task_id, clf.classes().collect()));
            }
            let similarity = classifiers
                .values()
                .next()
                .map_or(Similarity::Cosine, |c| c.similarity);
            (similarity, StateMeta::Til { tasks })
        }
        ScenarioState::Dil { router } => {
            let mut domains = Vec::new();
            let mut similarity = Similarity::Cosine;
            for (domain, entry) in router.domains() {
                for c in &entry.centers {
                    flat.extend_from_slice(c.as_slice());
                }
                push_classifier(&mut flat, &entry.classifier);
                similarity = entry.classifier.similarity;
                domains.push((
                    domain,
                    entry.centers.len(),
                    entry.classifier.classes().collect(),
                ));
            }
            (similarity, StateMeta::Dil { domains })
        }
    };

    let header = RunHeader {
        scenario,
        encoder: model.encoder.config().clone(),
        interventions,
        similarity,
        state,
    };
    Ok(container::write(
        RUN_MAGIC,
        &serde_json::to_string(&header)?,
        &flat,
    ))
}

struct Cursor<'a> {
    flat: &'a [f64],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [f64]> {
        if self.pos + n > self.flat.len() {
            return Err(CoreError::Checkpoint(
                "CORERUN1: parameter payload too short".into(),
            ));
        }
        let s = &self.flat[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn classifier(
        &mut self,
        classes: &[usize],
        dim: usize,
        similarity: Similarity,
    ) -> Result<PrototypeClassifier> {
        let mut clf = PrototypeClassifier::new(similarity);
        for &class in classes {
            clf.insert_raw(class, Vector::from_slice(self.take(dim)?));
        }
        Ok(clf)
    }
}

pub fn load_run(bytes: &[u8]) -> Result<(Scenario, ScenarioModel)> {
    let (json, flat) = container::read(bytes, RUN_MAGIC)?;
    let header: RunHeader = serde_json::from_str(&json)?;
    header.encoder.validate()?;
    let mut cur = Cursor {
        flat: &flat,
        pos: 0,
    };

    let enc_params = EncoderParams::zeros_like(&header.encoder).param_count();
    let params = EncoderParams::from_flat(&header.encoder, cur.take(enc_params)?)?;
    let encoder = FrozenEncoder::from_parts(header.encoder.clone(), params);
    let dim = header.encoder.dim;

    let interventions = match &header.interventions {
        None => None,
        Some(meta) => {
            let mut list = Vec::with_capacity(meta.layers.len());
            for &layer in &meta.layers {
                let r = Matrix::from_vec(meta.rank, meta.dim, cur.take(meta.rank * meta.dim)?.to_vec())?;
                let w = Matrix::from_vec(meta.rank, meta.dim, cur.take(meta.rank * meta.dim)?.to_vec())?;
                let b = Vector::from_vec(cur.take(meta.rank)?.to_vec())?;
                list.push(InterventionParams::new(r, w, b, layer)?);
            }
            Some(Interventions::new(list, meta.positions))
        }
    };

    let state = match &header.state {
        StateMeta::Cil { classes } => ScenarioState::Cil {
            classifier: cur.classifier(classes, dim, header.similarity)?,
        },
        StateMeta::Til { tasks } => {
            let mut classifiers = std::collections::BTreeMap::new();
            for (task_id, classes) in tasks {
                classifiers.insert(*task_id, cur.classifier(classes, dim, header.similarity)?);
            }
            ScenarioState::Til { classifiers }
        }
        StateMeta::Dil { domains } => {
            let mut router = DomainRouter::new();
            for (domain, n_centers, classes) in domains {
                let centers = (0..*n_centers)
                    .map(|_| cur.take(dim).map(Vector::from_slice))
                    .collect::<Result<Vec<_>>>()?;
                let clf = cur.classifier(classes, dim, header.similarity)?;
                router.register(*domain, centers, clf)?;
            }
            ScenarioState::Dil { router }
        }
    };
    if cur.pos != flat.len() {
        return Err(CoreError::Checkpoint(format!(
            "CORERUN1: {} unread parameters",
            flat.len() - cur.pos
        )));
    }
    Ok((
        header.scenario,
        ScenarioModel {
            encoder,
            interventions,
            state,
        },
    ))
}
