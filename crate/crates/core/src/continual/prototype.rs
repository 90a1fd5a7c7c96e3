//! Class-mean prototype classifiers and the per-domain router.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::{dot, sq_dist, Matrix, Vector};
use crate::nn::{features_only, FrozenEncoder};
use crate::reft::Interventions;

/// Scoring rule against unit-norm prototypes. Predictions agree for
/// both (the feature norm is class-independent); scores differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

/// Classifier whose weight per class is the unit-normalized mean
/// feature of that class's training samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrototypeClassifier {
    prototypes: BTreeMap<usize, Vector>,
    pub similarity: Similarity,
}

impl PrototypeClassifier {
    pub fn new(similarity: Similarity) -> PrototypeClassifier {
        PrototypeClassifier {
            prototypes: BTreeMap::new(),
            similarity,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.prototypes.keys().copied()
    }

    pub fn prototype(&self, class: usize) -> Option<&Vector> {
        self.prototypes.get(&class)
    }

    /// Insert or replace a class prototype (stored unit-normalized).
    pub fn insert(&mut self, class: usize, mean_feature: &Vector) {
        self.prototypes.insert(class, mean_feature.normalized());
    }

    /// Insert a prototype verbatim (checkpoint loading; the stored
    /// value is already normalized).
    pub(crate) fn insert_raw(&mut self, class: usize, prototype: Vector) {
        self.prototypes.insert(class, prototype);
    }

    fn score(&self, feature: &[f64], proto: &Vector) -> f64 {
        let s = dot(feature, proto.as_slice());
        match self.similarity {
            Similarity::Dot => s,
            Similarity::Cosine => {
                let n = dot(feature, feature).sqrt();
                if n == 0.0 {
                    0.0
                } else {
                    s / n
                }
            }
        }
    }

    /// Argmax similarity over all seen classes; ties break to the
    /// lowest class id.
    pub fn classify(&self, feature: &Vector) -> Result<usize> {
        if self.prototypes.is_empty() {
            return Err(CoreError::EmptyInput("prototype classifier has no classes"));
        }
        let mut best_class = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for (&class, proto) in &self.prototypes {
            let s = self.score(feature.as_slice(), proto);
            if s > best_score {
                best_score = s;
                best_class = class;
            }
        }
        Ok(best_class)
    }
}

/// Mean features per class, computed once over a labeled split.
fn class_means(
    features: &Matrix,
    labels: &[usize],
    expected: Option<&[usize]>,
) -> Result<BTreeMap<usize, Vector>> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        let entry = sums
            .entry(label)
            .or_insert_with(|| (vec![0.0; features.cols()], 0));
        for (o, x) in entry.0.iter_mut().zip(features.row(i)) {
            *o += x;
        }
        entry.1 += 1;
    }
    if let Some(expected) = expected {
        for &class in expected {
            if !sums.contains_key(&class) {
                return Err(CoreError::EmptyClass(class));
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(class, (sum, count))| {
            let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            (class, Vector::from_slice(&mean))
        })
        .collect())
}

/// Push class-mean prototypes for every class in `data` (or in
/// `expected`, erroring on any class left empty) into the classifier.
/// Features come from the frozen encoder plus optional edits.
pub fn build_prototypes(
    encoder: &FrozenEncoder,
    interventions: Option<&Interventions>,
    data: &Dataset,
    expected: Option<&[usize]>,
    clf: &mut PrototypeClassifier,
) -> Result<()> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput("build_prototypes: empty split"));
    }
    let features = features_only(encoder, &data.inputs, interventions)?;
    for (class, mean) in class_means(&features, &data.labels, expected)? {
        clf.insert(class, &mean);
    }
    Ok(())
}

/// Per-domain k-means centers plus a per-domain prototype classifier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainRouter {
    domains: BTreeMap<usize, DomainEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainEntry {
    pub centers: Vec<Vector>,
    pub classifier: PrototypeClassifier,
}

impl DomainRouter {
    pub fn new() -> DomainRouter {
        DomainRouter::default()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> impl Iterator<Item = (usize, &DomainEntry)> {
        self.domains.iter().map(|(&d, e)| (d, e))
    }

    pub fn register(
        &mut self,
        domain: usize,
        centers: Vec<Vector>,
        classifier: PrototypeClassifier,
    ) -> Result<()> {
        if centers.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "domain {domain} has no centers"
            )));
        }
        if classifier.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "domain {domain} has an empty classifier"
            )));
        }
        self.domains.insert(domain, DomainEntry { centers, classifier });
        Ok(())
    }

    /// Domain whose nearest center is closest in Euclidean distance;
    /// ties break to the lowest domain id.
    pub fn route(&self, feature: &Vector) -> Result<usize> {
        if self.domains.is_empty() {
            return Err(CoreError::EmptyInput("domain router has no domains"));
        }
        let mut best_domain = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (&domain, entry) in &self.domains {
            for c in &entry.centers {
                let d = sq_dist(feature.as_slice(), c.as_slice());
                if d < best_d {
                    best_d = d;
                    best_domain = domain;
                }
            }
        }
        Ok(best_domain)
    }

    /// Route to the nearest domain, then classify with that domain's
    /// prototypes.
    pub fn route_and_classify(&self, feature: &Vector) -> Result<(usize, usize)> {
        let domain = self.route(feature)?;
        let class = self.domains[&domain].classifier.classify(feature)?;
        Ok((domain, class))
    }
}

/// Argmax over one task's classifier; the prediction is always inside
/// that task's class set.
pub fn classify_til(
    feature: &Vector,
    task_id: usize,
    classifiers: &BTreeMap<usize, PrototypeClassifier>,
) -> Result<usize> {
    let clf = classifiers
        .get(&task_id)
        .ok_or(CoreError::UnknownTask(task_id))?;
    clf.classify(feature)
}
