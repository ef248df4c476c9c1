//! F1 against majority-vote gold, and soft-label cross-entropy and Manhattan
//! distance against the annotators' empirical distributions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Instance};
use crate::divergence::PredictionSet;
use crate::error::{Error, Result};
use crate::label::{LabelId, SoftLabel, TieBreak};

/// Probability floor applied before taking logs.
pub const CE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "positive")]
pub enum Averaging {
    Binary(LabelId),
    Micro,
    Macro,
}

impl Averaging {
    /// Binary on the dataset's positive label for two-label sets, micro
    /// otherwise.
    pub fn default_for(dataset: &AnnotatedDataset) -> Averaging {
        match dataset.default_positive() {
            Some(p) if dataset.label_set().len() == 2 => Averaging::Binary(p),
            _ => Averaging::Micro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub value: f64,
    /// No positive predictions and no positive gold: value reported as 0.
    pub undefined: bool,
}

fn f1_from_counts(tp: usize, fp: usize, fne: usize) -> F1Score {
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        F1Score { value: 0.0, undefined: true }
    } else {
        // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
        F1Score { value: 2.0 * tp as f64 / denom as f64, undefined: false }
    }
}

/// F1 of the predictions' argmax labels against `gold`.
pub fn f1_score(
    preds: &PredictionSet,
    gold: &BTreeMap<String, LabelId>,
    k: usize,
    averaging: Averaging,
    tie: TieBreak,
) -> Result<F1Score> {
    let missing = preds.missing(gold.keys().map(String::as_str));
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fne = vec![0usize; k];
    for (id, &g) in gold {
        if g.0 >= k {
            return Err(Error::LabelOutOfRange { index: g.0, k });
        }
        let p = preds.hard(id, tie).expect("coverage checked");
        if p.0 >= k {
            return Err(Error::WidthMismatch { expected: k, found: p.0 + 1 });
        }
        if p == g {
            tp[g.0] += 1;
        } else {
            fp[p.0] += 1;
            fne[g.0] += 1;
        }
    }
    Ok(match averaging {
        Averaging::Binary(pos) => {
            if pos.0 >= k {
                return Err(Error::LabelOutOfRange { index: pos.0, k });
            }
            f1_from_counts(tp[pos.0], fp[pos.0], fne[pos.0])
        }
        Averaging::Micro => f1_from_counts(tp.iter().sum(), fp.iter().sum(), fne.iter().sum()),
        Averaging::Macro => {
            let per_class: Vec<F1Score> = (0..k).map(|c| f1_from_counts(tp[c], fp[c], fne[c])).collect();
            let value = per_class.iter().map(|s| s.value).sum::<f64>() / k as f64;
            F1Score { value, undefined: per_class.iter().all(|s| s.undefined) }
        }
    })
}

/// Majority-vote gold labels for every annotated instance.
pub fn majority_gold(dataset: &AnnotatedDataset, tie: TieBreak) -> Result<BTreeMap<String, LabelId>> {
    annotated(dataset)?.into_iter().map(|i| Ok((i.id.clone(), dataset.majority(i, tie)?))).collect()
}

fn annotated(dataset: &AnnotatedDataset) -> Result<Vec<&Instance>> {
    dataset.require_categorical()?;
    let mut v: Vec<&Instance> = dataset.instances().iter().filter(|i| !i.annotations.is_empty()).collect();
    v.sort_unstable_by(|a, b| a.id.cmp(&b.id));
    Ok(v)
}

fn soft_pairs<'a>(preds: &'a PredictionSet, dataset: &'a AnnotatedDataset) -> Result<Vec<(SoftLabel, &'a SoftLabel)>> {
    let items = annotated(dataset)?;
    let missing = preds.missing(items.iter().map(|i| i.id.as_str()));
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = dataset.label_set().len();
    items
        .into_iter()
        .map(|inst| {
            let q = preds.get(&inst.id).expect("coverage checked");
            if q.len() != k {
                return Err(Error::WidthMismatch { expected: k, found: q.len() });
            }
            Ok((dataset.soft_label(inst)?, q))
        })
        .collect()
}

/// `-sum_k p_k ln q_k` with `q` clamped to `[eps, 1 - eps]` and renormalized.
pub fn soft_cross_entropy_one(p: &[f64], q: &[f64]) -> f64 {
    let clamped: Vec<f64> = q.iter().map(|v| v.clamp(CE_EPSILON, 1.0 - CE_EPSILON)).collect();
    let z: f64 = clamped.iter().sum();
    p.iter().zip(&clamped).filter(|(pk, _)| **pk > 0.0).map(|(pk, qk)| -pk * libm::log(qk / z)).sum()
}

pub fn manhattan_one(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Mean soft cross-entropy over annotated instances, in id order.
pub fn soft_cross_entropy(preds: &PredictionSet, dataset: &AnnotatedDataset) -> Result<f64> {
    let pairs = soft_pairs(preds, dataset)?;
    Ok(pairs.iter().map(|(p, q)| soft_cross_entropy_one(p.probs(), q.probs())).sum::<f64>() / pairs.len() as f64)
}

/// Mean L1 distance between predicted and empirical soft labels.
pub fn manhattan_distance(preds: &PredictionSet, dataset: &AnnotatedDataset) -> Result<f64> {
    let pairs = soft_pairs(preds, dataset)?;
    Ok(pairs.iter().map(|(p, q)| manhattan_one(p.probs(), q.probs())).sum::<f64>() / pairs.len() as f64)
}

/// Per-instance losses, for paired significance tests.
pub fn per_instance_losses(preds: &PredictionSet, dataset: &AnnotatedDataset) -> Result<Vec<(f64, f64)>> {
    let pairs = soft_pairs(preds, dataset)?;
    Ok(pairs
        .iter()
        .map(|(p, q)| (soft_cross_entropy_one(p.probs(), q.probs()), manhattan_one(p.probs(), q.probs())))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub f1_undefined: bool,
    pub ce: f64,
    pub md: f64,
    pub n: usize,
    /// Unannotated instances left out.
    pub excluded: usize,
}

/// All three benchmark metrics with majority-vote gold for F1.
pub fn evaluate(
    preds: &PredictionSet,
    dataset: &AnnotatedDataset,
    averaging: Averaging,
    tie: TieBreak,
) -> Result<EvalReport> {
    let gold = majority_gold(dataset, tie)?;
    let f1 = f1_score(preds, &gold, dataset.label_set().len(), averaging, tie)?;
    Ok(EvalReport {
        f1: f1.value,
        f1_undefined: f1.undefined,
        ce: soft_cross_entropy(preds, dataset)?,
        md: manhattan_distance(preds, dataset)?,
        n: gold.len(),
        excluded: dataset.unannotated_count(),
    })
}

/// One-sided paired sign-flip permutation test of `mean(diffs) > 0`.
///
/// Returns `(1 + hits) / (1 + resamples)` where `hits` counts resamples whose
/// mean is at least the observed one.
pub fn paired_permutation_p(diffs: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let observed: f64 = diffs.iter().sum();
    let mut rng = crate::rng::stream(seed, crate::rng::streams::PERMUTATION);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let s: f64 = diffs.iter().map(|d| if rand::Rng::gen::<bool>(&mut rng) { *d } else { -*d }).sum();
        if s >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + resamples) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Annotation;
    use crate::label::LabelSet;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn preds(rows: &[(usize, usize)]) -> (PredictionSet, BTreeMap<String, LabelId>) {
        let mut p = PredictionSet::new("m");
        let mut gold = BTreeMap::new();
        for (i, &(pred, g)) in rows.iter().enumerate() {
            p.insert(i.to_string(), SoftLabel::one_hot(2, LabelId(pred)));
            gold.insert(i.to_string(), LabelId(g));
        }
        (p, gold)
    }

    #[test]
    fn f1_examples() {
        let tie = TieBreak::default();
        let pos = Averaging::Binary(LabelId(1));
        let (p, g) = preds(&[(1, 1), (0, 0), (1, 1)]);
        assert_eq!(f1_score(&p, &g, 2, pos, tie).unwrap().value, 1.0);
        let (p, g) = preds(&[(0, 1), (1, 0), (0, 1)]);
        assert_eq!(f1_score(&p, &g, 2, pos, tie).unwrap().value, 0.0);
        // TP=2, FP=1, FN=1
        let (p, g) = preds(&[(1, 1), (1, 1), (1, 0), (0, 1), (0, 0)]);
        let f = f1_score(&p, &g, 2, pos, tie).unwrap();
        assert!((f.value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_undefined_without_positives() {
        let (p, g) = preds(&[(0, 0), (0, 0)]);
        let f = f1_score(&p, &g, 2, Averaging::Binary(LabelId(1)), TieBreak::default()).unwrap();
        assert!(f.undefined);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn micro_and_macro() {
        let (p, g) = preds(&[(1, 1), (1, 0), (0, 0), (0, 0)]);
        let tie = TieBreak::default();
        assert_eq!(f1_score(&p, &g, 2, Averaging::Micro, tie).unwrap().value, 0.75);
        // class 0: tp 2 fp 0 fn 1 -> 0.8; class 1: tp 1 fp 1 fn 0 -> 2/3
        let m = f1_score(&p, &g, 2, Averaging::Macro, tie).unwrap().value;
        assert!((m - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn f1_coverage_gap() {
        let (p, mut g) = preds(&[(1, 1)]);
        g.insert("zz".into(), LabelId(0));
        assert_eq!(
            f1_score(&p, &g, 2, Averaging::Micro, TieBreak::default()),
            Err(Error::CoverageGap(vec!["zz".into()]))
        );
    }

    #[test]
    fn ce_examples() {
        assert!(soft_cross_entropy_one(&[1.0, 0.0], &[1.0, 0.0]) < 1e-6);
        let h = soft_cross_entropy_one(&[0.5, 0.5], &[0.5, 0.5]);
        assert!((h - libm::log(2.0)).abs() < 1e-12);
    }

    #[test]
    fn md_examples() {
        assert_eq!(manhattan_one(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_eq!(manhattan_one(&[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert_eq!(manhattan_one(&[0.75, 0.25], &[0.5, 0.5]), 0.5);
    }

    #[test]
    fn dataset_level_metrics() {
        let set = LabelSet::new(["a", "b"]).unwrap();
        let mut i0 = Instance::new("0", "", "en");
        i0.annotations = vec![Annotation::label("x", LabelId(0)), Annotation::label("y", LabelId(1))];
        let mut i1 = Instance::new("1", "", "en");
        i1.annotations = vec![Annotation::label("x", LabelId(1))];
        let i2 = Instance::new("2", "", "en");
        let ds = AnnotatedDataset::new(set, vec![i0, i1, i2]).unwrap();
        let mut p = PredictionSet::new("m");
        p.insert("0", SoftLabel::new(vec![0.5, 0.5]).unwrap());
        p.insert("1", SoftLabel::new(vec![0.0, 1.0]).unwrap());
        let ce = soft_cross_entropy(&p, &ds).unwrap();
        let expected = (libm::log(2.0) + soft_cross_entropy_one(&[0.0, 1.0], &[0.0, 1.0])) / 2.0;
        assert!((ce - expected).abs() < 1e-15);
        assert_eq!(manhattan_distance(&p, &ds).unwrap(), 0.0);
        let r = evaluate(&p, &ds, Averaging::Binary(LabelId(1)), TieBreak::default()).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(r.excluded, 1);
    }

    #[test]
    fn permutation_test_separates_shift_from_noise() {
        let shifted: Vec<f64> = (0..200).map(|i| 0.5 + if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        assert!(paired_permutation_p(&shifted, 2000, 1).unwrap() < 0.01);
        let centered: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        assert!(paired_permutation_p(&centered, 2000, 1).unwrap() > 0.05);
        assert_eq!(paired_permutation_p(&[], 10, 0), Err(Error::EmptyInput));
    }

    proptest! {
        #[test]
        fn ce_of_self_is_entropy(w in proptest::collection::vec(0.05f64..1.0, 2..6)) {
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let entropy: f64 = p.iter().map(|x| -x * libm::log(*x)).sum();
            prop_assert!((soft_cross_entropy_one(&p, &p) - entropy).abs() < 1e-6);
        }

        #[test]
        fn md_within_bounds(a in proptest::collection::vec(0.0f64..1.0, 3), b in proptest::collection::vec(0.0f64..1.0, 3)) {
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| (x + 1e-9 / 3.0) / s).collect::<Vec<_>>() };
            let md = manhattan_one(&norm(&a), &norm(&b));
            prop_assert!((0.0..=2.0 + 1e-12).contains(&md));
        }
    }
}
