//! Disagreement between predictors, and between a predictor and annotators.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedDataset;
use crate::error::{Error, Result};
use crate::label::{LabelId, SoftLabel, TieBreak};

/// Probabilistic outputs of one model, keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub language: Option<String>,
    pub outputs: BTreeMap<String, SoftLabel>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self { model_id: model_id.into(), language: None, outputs: BTreeMap::new() }
    }

    pub fn insert(&mut self, instance_id: impl Into<String>, probs: SoftLabel) {
        self.outputs.insert(instance_id.into(), probs);
    }

    pub fn get(&self, instance_id: &str) -> Option<&SoftLabel> {
        self.outputs.get(instance_id)
    }

    pub fn hard(&self, instance_id: &str, tie: TieBreak) -> Option<LabelId> {
        self.get(instance_id).map(|s| s.argmax(tie))
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Common vector width, or `None` when empty.
    pub fn width(&self) -> Result<Option<usize>> {
        let mut width = None;
        for s in self.outputs.values() {
            match width {
                None => width = Some(s.len()),
                Some(w) if w != s.len() => return Err(Error::WidthMismatch { expected: w, found: s.len() }),
                _ => {}
            }
        }
        Ok(width)
    }

    pub fn missing<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        ids.into_iter().filter(|id| !self.outputs.contains_key(*id)).map(String::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    DisagreementRate,
    ModelHumanDelta,
    MultilingualDisagreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub kind: DivergenceKind,
    /// Disagreement rate in [0, 1], or the model-human delta.
    pub value: f64,
    pub n_compared: usize,
    /// Disagreements per label: indexed by the first predictor's hard label
    /// for rates, by the annotators' majority label for the delta.
    pub per_label: Vec<usize>,
    /// Instances skipped because they carry no annotations.
    pub excluded: usize,
}

fn check_coverage(sets: &[&PredictionSet], ids: &BTreeSet<String>) -> Result<()> {
    let mut missing = BTreeSet::new();
    for set in sets {
        missing.extend(set.missing(ids.iter().map(String::as_str)));
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::CoverageGap(missing.into_iter().collect()))
    }
}

fn rate_over<'a>(
    first: &PredictionSet,
    second: &PredictionSet,
    pairs: impl Iterator<Item = (&'a str, &'a str)>,
    tie: TieBreak,
    kind: DivergenceKind,
) -> Result<DivergenceReport> {
    let mut per_label: Vec<usize> = Vec::new();
    let mut n = 0usize;
    let mut disagree = 0usize;
    for (a, b) in pairs {
        let pa = first.get(a).ok_or_else(|| Error::CoverageGap(vec![a.into()]))?;
        let pb = second.get(b).ok_or_else(|| Error::CoverageGap(vec![b.into()]))?;
        if pa.len() != pb.len() {
            return Err(Error::WidthMismatch { expected: pa.len(), found: pb.len() });
        }
        if per_label.is_empty() {
            per_label = vec![0; pa.len()];
        }
        let (ha, hb) = (pa.argmax(tie), pb.argmax(tie));
        n += 1;
        if ha != hb {
            disagree += 1;
            per_label[ha.0] += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(DivergenceReport { kind, value: disagree as f64 / n as f64, n_compared: n, per_label, excluded: 0 })
}

/// Fraction of instances in `over` where the two predictors' argmax labels
/// differ.
pub fn disagreement_rate(
    first: &PredictionSet,
    second: &PredictionSet,
    over: &BTreeSet<String>,
    tie: TieBreak,
) -> Result<DivergenceReport> {
    check_coverage(&[first, second], over)?;
    rate_over(first, second, over.iter().map(|id| (id.as_str(), id.as_str())), tie, DivergenceKind::DisagreementRate)
}

/// How the model-human difference is measured per instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaForm {
    /// Mean absolute componentwise difference of the full vectors.
    #[default]
    Vector,
    /// Absolute difference of a single class probability.
    Class(LabelId),
}

/// Mean distance between model outputs and the annotators' empirical soft
/// labels. Unannotated instances are excluded and counted.
pub fn model_human_delta(
    preds: &PredictionSet,
    dataset: &AnnotatedDataset,
    form: DeltaForm,
    tie: TieBreak,
) -> Result<DivergenceReport> {
    dataset.require_categorical()?;
    let k = dataset.label_set().len();
    if let DeltaForm::Class(c) = form {
        dataset.label_set().check(c)?;
    }
    let mut annotated: Vec<(&str, &crate::dataset::Instance)> = dataset
        .instances()
        .iter()
        .filter(|i| !i.annotations.is_empty())
        .map(|i| (i.id.as_str(), i))
        .collect();
    // Sum in id order so the result does not depend on instance order.
    annotated.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let missing = preds.missing(annotated.iter().map(|(id, _)| *id));
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    if annotated.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_label = vec![0usize; k];
    let mut total = 0.0;
    for (id, inst) in &annotated {
        let q = preds.get(id).expect("coverage checked");
        if q.len() != k {
            return Err(Error::WidthMismatch { expected: k, found: q.len() });
        }
        let p = dataset.soft_label(inst)?;
        total += match form {
            DeltaForm::Vector => {
                q.probs().iter().zip(p.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / k as f64
            }
            DeltaForm::Class(c) => (q.probs()[c.0] - p.probs()[c.0]).abs(),
        };
        let majority = dataset.majority(inst, tie)?;
        if q.argmax(tie) != majority {
            per_label[majority.0] += 1;
        }
    }
    Ok(DivergenceReport {
        kind: DivergenceKind::ModelHumanDelta,
        value: total / annotated.len() as f64,
        n_compared: annotated.len(),
        per_label,
        excluded: dataset.unannotated_count(),
    })
}

/// Disagreement rate between predictors for two languages over aligned
/// instance pairs `(id in first language, id in second language)`.
pub fn multilingual_disagreement(
    first: &PredictionSet,
    second: &PredictionSet,
    pairing: &[(String, String)],
    tie: TieBreak,
) -> Result<DivergenceReport> {
    let mut left = BTreeSet::new();
    let mut right = BTreeSet::new();
    for (a, b) in pairing {
        if !left.insert(a.as_str()) {
            return Err(Error::PairingNotBijective(format!("`{a}` is paired twice")));
        }
        if !right.insert(b.as_str()) {
            return Err(Error::PairingNotBijective(format!("`{b}` is paired twice")));
        }
        if first.get(a).is_none() {
            return Err(Error::PairingNotBijective(format!("`{a}` has no prediction from `{}`", first.model_id)));
        }
        if second.get(b).is_none() {
            return Err(Error::PairingNotBijective(format!("`{b}` has no prediction from `{}`", second.model_id)));
        }
    }
    let mut sorted: Vec<&(String, String)> = pairing.iter().collect();
    sorted.sort_unstable();
    rate_over(
        first,
        second,
        sorted.into_iter().map(|(a, b)| (a.as_str(), b.as_str())),
        tie,
        DivergenceKind::MultilingualDisagreement,
    )
}
