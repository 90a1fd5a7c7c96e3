//! Continual-learning protocol: streams, classifiers, training, metrics.

mod checkpoint;
mod metrics;
mod prototype;
mod runner;
mod stream;
mod train;

pub use checkpoint::{load_run, save_run};
pub use metrics::{accuracy_percent, MetricsTable};
pub use prototype::{
    build_prototypes, classify_til, DomainEntry, DomainRouter, PrototypeClassifier, Similarity,
};
pub use runner::{
    evaluate_stage, run_scenario, Method, RunOutcome, RunSpec, ScenarioModel, ScenarioState,
};
pub use stream::{Scenario, Task, TaskStream, TrainHyper};
pub use train::{
    full_finetune_first_task, train_first_task, FirstTaskReport,
};

use crate::error::Result;
use crate::linalg::Vector;

/// Global argmax over all seen classes (class-incremental inference).
pub fn classify_cil(feature: &Vector, clf: &PrototypeClassifier) -> Result<usize> {
    clf.classify(feature)
}

/// Nearest-domain routing followed by that domain's classifier
/// (domain-incremental inference).
pub fn route_and_classify_dil(feature: &Vector, router: &DomainRouter) -> Result<usize> {
    router.route_and_classify(feature).map(|(_, class)| class)
}
