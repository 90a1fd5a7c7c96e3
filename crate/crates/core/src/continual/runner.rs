//! End-to-end scenario execution: adapt on task 1, grow classifiers
//! task by task, evaluate Last/Avg after every stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::continual::metrics::{accuracy_percent, MetricsTable};
use crate::continual::prototype::{
    build_prototypes, classify_til, DomainRouter, PrototypeClassifier, Similarity,
};
use crate::continual::train::{full_finetune_first_task, train_first_task, FirstTaskReport};
use crate::continual::{Scenario, Task, TaskStream, TrainHyper};
use crate::error::{CoreError, Result};
use crate::linalg::{kmeans, Vector, KMEANS_MAX_ITERS};
use crate::nn::{features_only, FrozenEncoder};
use crate::reft::{param_count, InterventionConfig, Interventions};

/// Adaptation method for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Low-rank representation edits trained on the first task.
    #[default]
    Core,
    /// Frozen backbone, prototype classifiers only.
    Frozen,
    /// Every backbone weight finetuned on the first task, then frozen.
    FullFinetune,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Core => "core",
            Method::Frozen => "frozen",
            Method::FullFinetune => "full_finetune",
        })
    }
}

/// Everything a run needs beyond the stream and hyperparameters.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub method: Method,
    pub intervention: InterventionConfig,
    /// k-means centers per domain (DIL routing).
    pub dil_kmeans_k: usize,
    pub similarity: Similarity,
}

/// Scenario-specific inference state.
#[derive(Debug, Clone)]
pub enum ScenarioState {
    Cil { classifier: PrototypeClassifier },
    Til { classifiers: BTreeMap<usize, PrototypeClassifier> },
    Dil { router: DomainRouter },
}

/// Trained bundle: encoder, optional edits, classifier state.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    pub encoder: FrozenEncoder,
    pub interventions: Option<Interventions>,
    pub state: ScenarioState,
}

impl ScenarioModel {
    fn predict_task_split(&self, task: &Task) -> Result<(usize, usize)> {
        let features = features_only(
            &self.encoder,
            &task.test.inputs,
            self.interventions.as_ref(),
        )?;
        let mut correct = 0usize;
        for i in 0..task.test.len() {
            let feature = Vector::from_slice(features.row(i));
            let predicted = match &self.state {
                ScenarioState::Cil { classifier } => classifier.classify(&feature)?,
                ScenarioState::Til { classifiers } => {
                    classify_til(&feature, task.task_id, classifiers)?
                }
                ScenarioState::Dil { router } => router.route_and_classify(&feature)?.1,
            };
            if predicted == task.test.labels[i] {
                correct += 1;
            }
        }
        Ok((correct, task.test.len()))
    }
}

/// Top-1 accuracy (percent) over the union of test splits of tasks
/// 1..=stage, using the scenario's inference rule.
pub fn evaluate_stage(stream: &TaskStream, stage: usize, model: &ScenarioModel) -> Result<f64> {
    if stage == 0 || stage > stream.tasks.len() {
        return Err(CoreError::InvalidArgument(format!(
            "stage {stage} outside 1..={}",
            stream.tasks.len()
        )));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for task in &stream.tasks[..stage] {
        let (c, t) = model.predict_task_split(task)?;
        correct += c;
        total += t;
    }
    if total == 0 {
        return Err(CoreError::EmptyInput("evaluate_stage: empty union test set"));
    }
    Ok(accuracy_percent(correct, total))
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: MetricsTable,
    /// per_task[t-1][i-1] = accuracy of task i's test split after stage t.
    pub per_task_matrix: Vec<Vec<f64>>,
    pub model: ScenarioModel,
    pub trainable_params: usize,
    pub first_task: Option<FirstTaskReport>,
}

fn update_state(
    model: &mut ScenarioModel,
    task: &Task,
    spec: &RunSpec,
    hyper: &TrainHyper,
) -> Result<()> {
    match &mut model.state {
        ScenarioState::Cil { classifier } => build_prototypes(
            &model.encoder,
            model.interventions.as_ref(),
            &task.train,
            Some(&task.classes),
            classifier,
        ),
        ScenarioState::Til { classifiers } => {
            let mut clf = PrototypeClassifier::new(spec.similarity);
            build_prototypes(
                &model.encoder,
                model.interventions.as_ref(),
                &task.train,
                Some(&task.classes),
                &mut clf,
            )?;
            classifiers.insert(task.task_id, clf);
            Ok(())
        }
        ScenarioState::Dil { router } => {
            let domain = task.domain_id.ok_or_else(|| {
                CoreError::InvalidArgument("dil task without domain id".into())
            })?;
            let features = features_only(
                &model.encoder,
                &task.train.inputs,
                model.interventions.as_ref(),
            )?;
            let points: Vec<Vector> = (0..features.rows())
                .map(|i| Vector::from_slice(features.row(i)))
                .collect();
            let k = spec.dil_kmeans_k.clamp(1, points.len());
            let seed = crate::linalg::SeededRng::new(hyper.seed)
                .derive(1000 + task.task_id as u64)
                .seed();
            let centers = kmeans(&points, k, seed, KMEANS_MAX_ITERS)?;
            let mut clf = PrototypeClassifier::new(spec.similarity);
            build_prototypes(
                &model.encoder,
                model.interventions.as_ref(),
                &task.train,
                Some(&task.classes),
                &mut clf,
            )?;
            router.register(domain, centers, clf)
        }
    }
}

/// Run a full stream: adapt on task 1 per the chosen method, then grow
/// classifiers with everything frozen, evaluating after each task.
pub fn run_scenario(
    encoder: &FrozenEncoder,
    spec: &RunSpec,
    stream: &TaskStream,
    hyper: &TrainHyper,
) -> Result<RunOutcome> {
    stream.validate()?;
    hyper.validate()?;

    let first_train = &stream.tasks[0].train;
    let (run_encoder, interventions, trainable_params, first_task) = match spec.method {
        Method::Core => {
            let (iv, report) =
                train_first_task(encoder, &spec.intervention, first_train, hyper)?;
            let count = param_count(&spec.intervention, encoder.config().dim);
            (encoder.clone(), Some(iv), count, Some(report))
        }
        Method::Frozen => (encoder.clone(), None, 0, None),
        Method::FullFinetune => {
            let tuned = full_finetune_first_task(encoder, first_train, hyper)?;
            let count = tuned.total_param_count();
            (tuned, None, count, None)
        }
    };

    let state = match stream.scenario {
        Scenario::Cil => ScenarioState::Cil {
            classifier: PrototypeClassifier::new(spec.similarity),
        },
        Scenario::Til => ScenarioState::Til {
            classifiers: BTreeMap::new(),
        },
        Scenario::Dil => ScenarioState::Dil {
            router: DomainRouter::new(),
        },
    };
    let mut model = ScenarioModel {
        encoder: run_encoder,
        interventions,
        state,
    };

    let mut metrics = MetricsTable::new();
    let mut per_task_matrix = Vec::with_capacity(stream.tasks.len());
    for stage in 1..=stream.tasks.len() {
        update_state(&mut model, &stream.tasks[stage - 1], spec, hyper)?;
        metrics.push_last(evaluate_stage(stream, stage, &model)?)?;
        let mut row = Vec::with_capacity(stage);
        for task in &stream.tasks[..stage] {
            let (c, t) = model.predict_task_split(task)?;
            row.push(accuracy_percent(c, t));
        }
        per_task_matrix.push(row);
    }

    Ok(RunOutcome {
        metrics,
        per_task_matrix,
        model,
        trainable_params,
        first_task,
    })
}
