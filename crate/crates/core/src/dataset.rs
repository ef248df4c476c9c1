//! Annotated datasets: instances, per-annotator labels and annotator profiles.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{LabelId, LabelSet, SoftLabel, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Categorical,
    /// Raw ordinal scores awaiting binarization.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" | "val" | "validation" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationValue {
    Label(LabelId),
    Score(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator: String,
    pub value: AnnotationValue,
}

impl Annotation {
    pub fn label(annotator: impl Into<String>, label: LabelId) -> Self {
        Self { annotator: annotator.into(), value: AnnotationValue::Label(label) }
    }

    pub fn score(annotator: impl Into<String>, score: f64) -> Self {
        Self { annotator: annotator.into(), value: AnnotationValue::Score(score) }
    }

    pub fn as_label(&self) -> Option<LabelId> {
        match self.value {
            AnnotationValue::Label(l) => Some(l),
            AnnotationValue::Score(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub language: String,
    pub annotations: Vec<Annotation>,
    /// Guideline-refinement round, present only in iterative datasets.
    pub iteration: Option<u32>,
    pub split: Option<Split>,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            language: language.into(),
            annotations: Vec::new(),
            iteration: None,
            split: None,
        }
    }

    pub fn with_annotation(mut self, annotation: Annotation) -> Self {
        self.annotations.push(annotation);
        self
    }

    pub fn with_labels<'a>(mut self, labels: impl IntoIterator<Item = (&'a str, LabelId)>) -> Self {
        self.annotations.extend(labels.into_iter().map(|(a, l)| Annotation::label(a, l)));
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn with_iteration(mut self, t: u32) -> Self {
        self.iteration = Some(t);
        self
    }

    /// Per-label annotation counts, in label-set order.
    pub fn label_counts(&self, k: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; k];
        for a in &self.annotations {
            match a.value {
                AnnotationValue::Label(l) if l.0 < k => counts[l.0] += 1,
                AnnotationValue::Label(l) => return Err(Error::LabelOutOfRange { index: l.0, k }),
                AnnotationValue::Score(_) => return Err(Error::NumericMode),
            }
        }
        Ok(counts)
    }
}

/// Empirical distribution of the labels annotators gave an instance.
pub fn empirical_soft_label(instance: &Instance, label_set: &LabelSet) -> Result<SoftLabel> {
    let counts = instance.label_counts(label_set.len())?;
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyAnnotations(instance.id.clone()));
    }
    SoftLabel::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Most frequent annotation label, ties resolved by `tie`.
pub fn majority_label(instance: &Instance, label_set: &LabelSet, tie: TieBreak) -> Result<LabelId> {
    let counts = instance.label_counts(label_set.len())?;
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyAnnotations(instance.id.clone()));
    }
    Ok(tie.argmax(&counts))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator: String,
    /// Dimension name (e.g. "culture") to group identifier.
    pub groups: BTreeMap<String, String>,
}

impl AnnotatorProfile {
    pub fn new(annotator: impl Into<String>) -> Self {
        Self { annotator: annotator.into(), groups: BTreeMap::new() }
    }

    pub fn with_group(mut self, dimension: impl Into<String>, group: impl Into<String>) -> Self {
        self.groups.insert(dimension.into(), group.into());
        self
    }
}

/// Immutable, validated multi-annotator dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDataset {
    label_set: LabelSet,
    mode: LabelMode,
    iterative: bool,
    positive: Option<LabelId>,
    instances: Vec<Instance>,
    profiles: Vec<AnnotatorProfile>,
    by_id: BTreeMap<String, usize>,
    profile_by_id: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    label_set: LabelSet,
    mode: LabelMode,
    iterative: bool,
    positive: Option<LabelId>,
    instances: Vec<Instance>,
    profiles: Vec<AnnotatorProfile>,
}

impl DatasetBuilder {
    pub fn mode(mut self, mode: LabelMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn iterative(mut self, iterative: bool) -> Self {
        self.iterative = iterative;
        self
    }

    pub fn positive_label(mut self, label: LabelId) -> Self {
        self.positive = Some(label);
        self
    }

    pub fn instance(mut self, instance: Instance) -> Self {
        self.instances.push(instance);
        self
    }

    pub fn instances(mut self, instances: impl IntoIterator<Item = Instance>) -> Self {
        self.instances.extend(instances);
        self
    }

    pub fn profiles(mut self, profiles: impl IntoIterator<Item = AnnotatorProfile>) -> Self {
        self.profiles.extend(profiles);
        self
    }

    pub fn build(self) -> Result<AnnotatedDataset> {
        let k = self.label_set.len();
        if let Some(p) = self.positive {
            self.label_set.check(p)?;
        }
        let mut by_id = BTreeMap::new();
        for (idx, inst) in self.instances.iter().enumerate() {
            if by_id.insert(inst.id.clone(), idx).is_some() {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
            if inst.iteration.is_some() != self.iterative {
                return Err(Error::IterationMismatch(inst.id.clone()));
            }
            let mut seen = BTreeSet::new();
            for a in &inst.annotations {
                if !seen.insert(a.annotator.as_str()) {
                    return Err(Error::DuplicateAnnotator {
                        instance: inst.id.clone(),
                        annotator: a.annotator.clone(),
                    });
                }
                match (self.mode, a.value) {
                    (LabelMode::Categorical, AnnotationValue::Label(l)) => {
                        if l.0 >= k {
                            return Err(Error::LabelOutOfRange { index: l.0, k });
                        }
                    }
                    (LabelMode::Numeric, AnnotationValue::Score(s)) if s.is_finite() => {}
                    _ => return Err(Error::LabelModeMismatch(inst.id.clone())),
                }
            }
        }
        let mut profile_by_id = BTreeMap::new();
        for (idx, p) in self.profiles.iter().enumerate() {
            if profile_by_id.insert(p.annotator.clone(), idx).is_some() {
                return Err(Error::DuplicateProfile(p.annotator.clone()));
            }
        }
        Ok(AnnotatedDataset {
            label_set: self.label_set,
            mode: self.mode,
            iterative: self.iterative,
            positive: self.positive,
            instances: self.instances,
            profiles: self.profiles,
            by_id,
            profile_by_id,
        })
    }
}

impl AnnotatedDataset {
    pub fn builder(label_set: LabelSet) -> DatasetBuilder {
        DatasetBuilder {
            label_set,
            mode: LabelMode::Categorical,
            iterative: false,
            positive: None,
            instances: Vec::new(),
            profiles: Vec::new(),
        }
    }

    /// Categorical, non-iterative dataset without profiles.
    pub fn new(label_set: LabelSet, instances: Vec<Instance>) -> Result<Self> {
        Self::builder(label_set).instances(instances).build()
    }

    /// Rebuilds a dataset from its parts, e.g. after filtering instances.
    pub fn to_builder(&self) -> DatasetBuilder {
        DatasetBuilder {
            label_set: self.label_set.clone(),
            mode: self.mode,
            iterative: self.iterative,
            positive: self.positive,
            instances: Vec::new(),
            profiles: self.profiles.clone(),
        }
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn is_iterative(&self) -> bool {
        self.iterative
    }

    pub fn positive_label(&self) -> Option<LabelId> {
        self.positive
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn profiles(&self) -> &[AnnotatorProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.by_id.get(id).map(|&i| &self.instances[i])
    }

    pub fn profile(&self, annotator: &str) -> Option<&AnnotatorProfile> {
        self.profile_by_id.get(annotator).map(|&i| &self.profiles[i])
    }

    pub fn require_categorical(&self) -> Result<()> {
        match self.mode {
            LabelMode::Categorical => Ok(()),
            LabelMode::Numeric => Err(Error::NumericMode),
        }
    }

    /// Minimum and maximum annotation count over instances that carry at
    /// least one annotation.
    pub fn annotator_range(&self) -> Option<(usize, usize)> {
        let mut counts = self.instances.iter().map(|i| i.annotations.len()).filter(|&m| m > 0);
        let first = counts.next()?;
        Some(counts.fold((first, first), |(lo, hi), m| (lo.min(m), hi.max(m))))
    }

    /// Instances retained by ingestion but skipped by every metric.
    pub fn unannotated_count(&self) -> usize {
        self.instances.iter().filter(|i| i.annotations.is_empty()).count()
    }

    /// Distinct annotator ids, sorted.
    pub fn annotators(&self) -> BTreeSet<&str> {
        self.instances
            .iter()
            .flat_map(|i| i.annotations.iter().map(|a| a.annotator.as_str()))
            .collect()
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.instances.iter().filter(|i| i.split == Some(split)).count()
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.instances.iter().any(|i| i.split == Some(split))
    }

    /// Keeps instances matching `keep`; labels, mode and profiles carry over.
    pub fn filter(&self, mut keep: impl FnMut(&Instance) -> bool) -> AnnotatedDataset {
        let builder = self.to_builder().instances(self.instances.iter().filter(|i| keep(i)).cloned());
        // A subset of a valid dataset is valid.
        builder.build().expect("subset of a validated dataset")
    }

    pub fn split(&self, split: Split) -> AnnotatedDataset {
        self.filter(|i| i.split == Some(split))
    }

    pub fn soft_label(&self, instance: &Instance) -> Result<SoftLabel> {
        self.require_categorical()?;
        empirical_soft_label(instance, &self.label_set)
    }

    pub fn majority(&self, instance: &Instance, tie: TieBreak) -> Result<LabelId> {
        self.require_categorical()?;
        majority_label(instance, &self.label_set, tie)
    }

    /// Converts a numeric dataset to categorical labels through `map`.
    pub fn binarize(
        &self,
        label_set: LabelSet,
        positive: Option<LabelId>,
        mut map: impl FnMut(f64) -> Result<LabelId>,
    ) -> Result<AnnotatedDataset> {
        let mut instances = self.instances.clone();
        for inst in &mut instances {
            for a in &mut inst.annotations {
                if let AnnotationValue::Score(s) = a.value {
                    a.value = AnnotationValue::Label(map(s)?);
                }
            }
        }
        let mut builder = AnnotatedDataset::builder(label_set)
            .iterative(self.iterative)
            .instances(instances)
            .profiles(self.profiles.clone());
        if let Some(p) = positive {
            builder = builder.positive_label(p);
        }
        builder.build()
    }

    /// Positive label for binary F1 and demographic gaps: the declared one,
    /// else the second label of a two-label set.
    pub fn default_positive(&self) -> Option<LabelId> {
        self.positive.or(if self.label_set.len() == 2 { Some(LabelId(1)) } else { None })
    }

    pub fn group_of(&self, annotator: &str, dimension: &str) -> Option<&str> {
        self.profile(annotator)?.groups.get(dimension).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.id.as_str())
    }

    pub fn id_set(&self) -> BTreeSet<String> {
        self.instances.iter().map(|i| i.id.to_string()).collect()
    }
}
