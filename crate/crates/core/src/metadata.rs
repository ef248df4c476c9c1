//! Diagnostics driven by annotator metadata: group label gaps, pool
//! diversity, disagreement across guideline iterations and distances between
//! group embeddings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, AnnotationValue, LabelMode};
use crate::error::{Error, Result};
use crate::label::{LabelId, TieBreak};

/// Instances and annotation volume contributed by one annotator group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSlice {
    pub group: String,
    /// Instances carrying at least one annotation by a group member.
    pub instance_ids: BTreeSet<String>,
    pub annotation_count: usize,
}

/// Slices for every group of `dimension`. Annotators without a profile
/// entry for the dimension are ignored.
pub fn group_slices(dataset: &AnnotatedDataset, dimension: &str) -> BTreeMap<String, GroupSlice> {
    let mut slices: BTreeMap<String, GroupSlice> = BTreeMap::new();
    for inst in dataset.instances() {
        for a in &inst.annotations {
            if let Some(g) = dataset.group_of(&a.annotator, dimension) {
                let slice = slices.entry(g.into()).or_insert_with(|| GroupSlice {
                    group: g.into(),
                    instance_ids: BTreeSet::new(),
                    annotation_count: 0,
                });
                slice.instance_ids.insert(inst.id.clone());
                slice.annotation_count += 1;
            }
        }
    }
    slices
}

/// What counts as the label `y(x)` of an instance when averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapLevel {
    /// Every annotation votes; the group mean runs over its members'
    /// annotations only.
    #[default]
    Annotation,
    /// Majority label per instance; the group mean runs over the instances
    /// the group touched.
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// |group rate - global rate|.
    pub gap: f64,
    /// group rate - global rate.
    pub signed: f64,
    pub group_rate: f64,
    pub global_rate: f64,
    /// Annotations (annotation level) or instances (aggregated level) in
    /// the group mean.
    pub group_support: usize,
    pub level: GapLevel,
}

/// Gap between a group's positive-label rate and the dataset's.
pub fn demographic_gap(
    dataset: &AnnotatedDataset,
    dimension: &str,
    group: &str,
    positive: LabelId,
    level: GapLevel,
) -> Result<GapReport> {
    dataset.require_categorical()?;
    dataset.label_set().check(positive)?;
    let mut group_pos = 0usize;
    let mut group_n = 0usize;
    let mut all_pos = 0usize;
    let mut all_n = 0usize;
    match level {
        GapLevel::Annotation => {
            for inst in dataset.instances() {
                for a in &inst.annotations {
                    let hit = usize::from(a.as_label() == Some(positive));
                    all_pos += hit;
                    all_n += 1;
                    if dataset.group_of(&a.annotator, dimension) == Some(group) {
                        group_pos += hit;
                        group_n += 1;
                    }
                }
            }
        }
        GapLevel::Aggregated => {
            for inst in dataset.instances().iter().filter(|i| !i.annotations.is_empty()) {
                let hit = usize::from(dataset.majority(inst, TieBreak::default())? == positive);
                all_pos += hit;
                all_n += 1;
                if inst.annotations.iter().any(|a| dataset.group_of(&a.annotator, dimension) == Some(group)) {
                    group_pos += hit;
                    group_n += 1;
                }
            }
        }
    }
    if group_n == 0 {
        return Err(Error::UnknownGroup(group.into()));
    }
    let group_rate = group_pos as f64 / group_n as f64;
    let global_rate = all_pos as f64 / all_n as f64;
    let signed = group_rate - global_rate;
    Ok(GapReport { gap: signed.abs(), signed, group_rate, global_rate, group_support: group_n, level })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => libm::log(x),
            LogBase::Two => libm::log2(x),
        }
    }
}

/// Shannon entropy of annotation shares across the groups of `dimension`.
/// Zero-share groups contribute nothing.
pub fn pool_entropy(dataset: &AnnotatedDataset, dimension: &str, base: LogBase) -> Result<f64> {
    let slices = group_slices(dataset, dimension);
    let shares: Vec<usize> = slices.values().map(|s| s.annotation_count).collect();
    entropy_of_counts(&shares, base).ok_or_else(|| Error::DimensionMissing(dimension.into()))
}

/// Entropy of the distribution proportional to `counts`; `None` when all
/// counts are zero.
pub fn entropy_of_counts(counts: &[usize], base: LogBase) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * base.log(p);
        }
    }
    // -0.0 for a single group
    Some(h + 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationVariance {
    pub iteration: u32,
    pub value: f64,
    pub n_items: usize,
    /// Instances of this iteration without annotations.
    pub excluded: usize,
}

/// Mean per-item label spread in guideline iteration `t`.
///
/// Numeric scores use the population variance. Categorical labels use the
/// Gini impurity `1 - sum p_k^2` of the item's label distribution, which is
/// twice the Bernoulli variance for two labels.
pub fn iteration_variance(dataset: &AnnotatedDataset, t: u32) -> Result<IterationVariance> {
    if !dataset.is_iterative() {
        return Err(Error::NotIterative);
    }
    let k = dataset.label_set().len();
    let mut total = 0.0;
    let mut n_items = 0usize;
    let mut excluded = 0usize;
    let mut items: Vec<_> = dataset.instances().iter().filter(|i| i.iteration == Some(t)).collect();
    items.sort_unstable_by(|a, b| a.id.cmp(&b.id));
    for inst in items {
        if inst.annotations.is_empty() {
            excluded += 1;
            continue;
        }
        let spread = match dataset.mode() {
            LabelMode::Numeric => {
                let scores: Vec<f64> = inst
                    .annotations
                    .iter()
                    .map(|a| match a.value {
                        AnnotationValue::Score(s) => s,
                        AnnotationValue::Label(l) => l.0 as f64,
                    })
                    .collect();
                population_variance(&scores)
            }
            LabelMode::Categorical => {
                let counts = inst.label_counts(k)?;
                let m = inst.annotations.len() as f64;
                1.0 - counts.iter().map(|&c| (c as f64 / m) * (c as f64 / m)).sum::<f64>()
            }
        };
        total += spread.max(0.0);
        n_items += 1;
    }
    if n_items == 0 {
        return Err(Error::EmptyIteration(t));
    }
    Ok(IterationVariance { iteration: t, value: total / n_items as f64, n_items, excluded })
}

/// Variance for every iteration present, in ascending order.
pub fn iteration_trend(dataset: &AnnotatedDataset) -> Result<Vec<IterationVariance>> {
    if !dataset.is_iterative() {
        return Err(Error::NotIterative);
    }
    let rounds: BTreeSet<u32> = dataset.instances().iter().filter_map(|i| i.iteration).collect();
    rounds
        .into_iter()
        .filter(|&t| dataset.instances().iter().any(|i| i.iteration == Some(t) && !i.annotations.is_empty()))
        .map(|t| iteration_variance(dataset, t))
        .collect()
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Fixed-dimension vector representing a group's annotation behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CulturalEmbedding {
    vector: Vec<f64>,
}

impl CulturalEmbedding {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        Ok(Self { vector })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }
}

impl TryFrom<Vec<f64>> for CulturalEmbedding {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CulturalEmbedding> for Vec<f64> {
    fn from(e: CulturalEmbedding) -> Self {
        e.vector
    }
}

/// Euclidean distance between two group embeddings.
pub fn cultural_distance(a: &CulturalEmbedding, b: &CulturalEmbedding) -> Result<f64> {
    if a.vector.len() != b.vector.len() {
        return Err(Error::DimensionMismatch(a.vector.len(), b.vector.len()));
    }
    let sq: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(sq))
}

/// Stand-in embedding: the group's empirical label distribution.
pub fn default_group_embedding(dataset: &AnnotatedDataset, dimension: &str, group: &str) -> Result<CulturalEmbedding> {
    dataset.require_categorical()?;
    let mut counts = vec![0usize; dataset.label_set().len()];
    for inst in dataset.instances() {
        for a in &inst.annotations {
            if dataset.group_of(&a.annotator, dimension) == Some(group) {
                if let Some(l) = a.as_label() {
                    counts[l.0] += 1;
                }
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::UnknownGroup(group.into()));
    }
    CulturalEmbedding::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Annotation, AnnotatorProfile, Instance};
    use crate::label::LabelSet;
    use alloc::format;
    use proptest::prelude::*;

    /// One instance per entry; every annotation is (annotator, label).
    fn dataset(items: &[&[(&str, usize)]], profiles: &[(&str, &str)]) -> AnnotatedDataset {
        let set = LabelSet::new(["off", "not"]).unwrap();
        let instances = items
            .iter()
            .enumerate()
            .map(|(i, anns)| {
                let mut inst = Instance::new(format!("i{i}"), "", "en");
                for (who, l) in anns.iter() {
                    inst.annotations.push(Annotation::label(*who, LabelId(*l)));
                }
                inst
            })
            .collect::<Vec<_>>();
        let profiles = profiles.iter().map(|(a, g)| AnnotatorProfile::new(*a).with_group("culture", *g));
        AnnotatedDataset::builder(set).instances(instances).profiles(profiles).build().unwrap()
    }

    #[test]
    fn gap_zero_when_rates_match() {
        let ds = dataset(&[&[("a", 0), ("b", 0)], &[("a", 1), ("b", 1)]], &[("a", "x"), ("b", "y")]);
        let r = demographic_gap(&ds, "culture", "x", LabelId(0), GapLevel::Annotation).unwrap();
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn gap_arithmetic() {
        // group x: 4 of 5 positive (0.8); everyone: 6 of 10 (0.6)
        let ds = dataset(
            &[
                &[("a", 0), ("b", 0)],
                &[("a", 0), ("b", 1)],
                &[("a", 0), ("b", 1)],
                &[("a", 0), ("b", 1)],
                &[("a", 1), ("b", 0)],
            ],
            &[("a", "x"), ("b", "y")],
        );
        let r = demographic_gap(&ds, "culture", "x", LabelId(0), GapLevel::Annotation).unwrap();
        assert!((r.gap - 0.2).abs() < 1e-12);
        assert!((r.group_rate - 0.8).abs() < 1e-15);
        assert!((r.global_rate - 0.6).abs() < 1e-15);
    }

    #[test]
    fn gap_singleton_group() {
        let ds = dataset(&[&[("a", 0), ("b", 1)]], &[("a", "solo"), ("b", "rest")]);
        let r = demographic_gap(&ds, "culture", "solo", LabelId(0), GapLevel::Annotation).unwrap();
        assert_eq!(r.gap, 0.5);
        assert_eq!(r.group_support, 1);
    }

    #[test]
    fn gap_unknown_group_and_label() {
        let ds = dataset(&[&[("a", 0)]], &[("a", "x")]);
        assert_eq!(
            demographic_gap(&ds, "culture", "nope", LabelId(0), GapLevel::Annotation),
            Err(Error::UnknownGroup("nope".into()))
        );
        assert!(demographic_gap(&ds, "culture", "x", LabelId(5), GapLevel::Annotation).is_err());
    }

    #[test]
    fn aggregated_gap_uses_majority() {
        // i0 majority off (touched by x), i1 majority not (not touched by x)
        let ds = dataset(&[&[("a", 0), ("b", 0), ("c", 1)], &[("b", 1), ("c", 1)]], &[("a", "x"), ("b", "y"), ("c", "y")]);
        let r = demographic_gap(&ds, "culture", "x", LabelId(0), GapLevel::Aggregated).unwrap();
        assert_eq!(r.group_rate, 1.0);
        assert_eq!(r.global_rate, 0.5);
        assert_eq!(r.gap, 0.5);
    }

    #[test]
    fn entropy_examples() {
        let one = dataset(&[&[("a", 0), ("b", 1)]], &[("a", "x"), ("b", "x")]);
        assert_eq!(pool_entropy(&one, "culture", LogBase::Natural).unwrap(), 0.0);
        let four = dataset(&[&[("a", 0), ("b", 1), ("c", 0), ("d", 1)]], &[("a", "p"), ("b", "q"), ("c", "r"), ("d", "s")]);
        let h = pool_entropy(&four, "culture", LogBase::Natural).unwrap();
        assert!((h - libm::log(4.0)).abs() < 1e-12);
        assert!((pool_entropy(&four, "culture", LogBase::Two).unwrap() - 2.0).abs() < 1e-12);
        let h = entropy_of_counts(&[5, 5, 0], LogBase::Natural).unwrap();
        assert!((h - libm::log(2.0)).abs() < 1e-12);
        assert_eq!(pool_entropy(&one, "gender", LogBase::Natural), Err(Error::DimensionMissing("gender".into())));
    }

    fn iterative(items: &[(u32, &[usize])]) -> AnnotatedDataset {
        let set = LabelSet::new(["off", "not"]).unwrap();
        let instances = items.iter().enumerate().map(|(i, (t, ls))| {
            let mut inst = Instance::new(format!("i{i}"), "", "en").with_iteration(*t);
            for (j, &l) in ls.iter().enumerate() {
                inst.annotations.push(Annotation::label(format!("a{j}"), LabelId(l)));
            }
            inst
        });
        AnnotatedDataset::builder(set).iterative(true).instances(instances).build().unwrap()
    }

    #[test]
    fn iteration_variance_unanimous_is_zero() {
        let ds = iterative(&[(1, &[0, 0, 0]), (1, &[1, 1]), (2, &[0, 1])]);
        assert_eq!(iteration_variance(&ds, 1).unwrap().value, 0.0);
        assert_eq!(iteration_variance(&ds, 2).unwrap().value, 0.5);
    }

    #[test]
    fn iteration_variance_numeric_bernoulli() {
        let set = LabelSet::new(["off", "not"]).unwrap();
        let inst = Instance::new("x", "", "en")
            .with_iteration(0)
            .with_annotation(Annotation::score("a", 0.0))
            .with_annotation(Annotation::score("b", 1.0));
        let ds = AnnotatedDataset::builder(set)
            .mode(LabelMode::Numeric)
            .iterative(true)
            .instance(inst)
            .build()
            .unwrap();
        assert_eq!(iteration_variance(&ds, 0).unwrap().value, 0.25);
    }

    #[test]
    fn iteration_errors() {
        let ds = iterative(&[(1, &[0])]);
        assert_eq!(iteration_variance(&ds, 7), Err(Error::EmptyIteration(7)));
        let flat = dataset(&[&[("a", 0)]], &[]);
        assert_eq!(iteration_variance(&flat, 1), Err(Error::NotIterative));
    }

    #[test]
    fn distance_examples() {
        let a = CulturalEmbedding::new(vec![1.0, 0.0]).unwrap();
        let b = CulturalEmbedding::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cultural_distance(&a, &a).unwrap(), 0.0);
        assert!((cultural_distance(&a, &b).unwrap() - libm::sqrt(2.0)).abs() < 1e-15);
        let c = CulturalEmbedding::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(cultural_distance(&a, &c), Err(Error::DimensionMismatch(2, 3)));
        assert!(CulturalEmbedding::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn default_embedding_examples() {
        let ds = dataset(
            &[&[("a", 0), ("c", 1)], &[("a", 0), ("d", 0)], &[("b", 1), ("d", 0)]],
            &[("a", "x"), ("b", "x"), ("c", "y"), ("d", "z")],
        );
        let x = default_group_embedding(&ds, "culture", "x").unwrap();
        assert_eq!(x.as_slice(), &[2.0 / 3.0, 1.0 / 3.0]);
        let y = default_group_embedding(&ds, "culture", "y").unwrap();
        let z = default_group_embedding(&ds, "culture", "z").unwrap();
        assert!((cultural_distance(&y, &z).unwrap() - libm::sqrt(2.0)).abs() < 1e-15);
        assert_eq!(default_group_embedding(&ds, "culture", "w"), Err(Error::UnknownGroup("w".into())));
    }

    #[test]
    fn identical_groups_have_zero_distance() {
        let ds = dataset(&[&[("a", 0), ("b", 0)], &[("a", 1), ("b", 1)]], &[("a", "x"), ("b", "y")]);
        let x = default_group_embedding(&ds, "culture", "x").unwrap();
        let y = default_group_embedding(&ds, "culture", "y").unwrap();
        assert_eq!(cultural_distance(&x, &y).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_groups(counts in proptest::collection::vec(0usize..50, 1..8)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let h = entropy_of_counts(&counts, LogBase::Natural).unwrap();
            let groups = counts.iter().filter(|&&c| c > 0).count() as f64;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= libm::log(groups) + 1e-12);
        }

        #[test]
        fn weighted_signed_gaps_cancel(
            labels in proptest::collection::vec(proptest::collection::vec(0usize..2, 4), 1..30),
            assignment in proptest::collection::vec(0usize..3, 4),
        ) {
            let names = ["a0", "a1", "a2", "a3"];
            let groups = ["g0", "g1", "g2"];
            let items: Vec<Vec<(&str, usize)>> = labels
                .iter()
                .map(|row| row.iter().enumerate().map(|(j, &l)| (names[j], l)).collect())
                .collect();
            let refs: Vec<&[(&str, usize)]> = items.iter().map(Vec::as_slice).collect();
            let profiles: Vec<(&str, &str)> = names.iter().zip(&assignment).map(|(n, &g)| (*n, groups[g])).collect();
            let ds = dataset(&refs, &profiles);
            let slices = group_slices(&ds, "culture");
            let total: usize = slices.values().map(|s| s.annotation_count).sum();
            let mut acc = 0.0;
            for (g, s) in &slices {
                let r = demographic_gap(&ds, "culture", g, LabelId(1), GapLevel::Annotation).unwrap();
                acc += s.annotation_count as f64 / total as f64 * r.signed;
            }
            prop_assert!(acc.abs() < 1e-12);
        }

        #[test]
        fn distance_is_a_metric(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            c in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let (a, b, c) = (
                CulturalEmbedding::new(a).unwrap(),
                CulturalEmbedding::new(b).unwrap(),
                CulturalEmbedding::new(c).unwrap(),
            );
            let ab = cultural_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, cultural_distance(&b, &a).unwrap());
            prop_assert!(cultural_distance(&a, &a).unwrap() <= 1e-12);
            prop_assert!(ab <= cultural_distance(&a, &c).unwrap() + cultural_distance(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn iteration_variance_zero_iff_unanimous(rows in proptest::collection::vec(proptest::collection::vec(0usize..2, 1..5), 1..10)) {
            let items: Vec<(u32, &[usize])> = rows.iter().map(|r| (0u32, r.as_slice())).collect();
            let ds = iterative(&items);
            let v = iteration_variance(&ds, 0).unwrap().value;
            let unanimous = rows.iter().all(|r| r.iter().all(|&x| x == r[0]));
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v == 0.0, unanimous);
        }
    }
}
