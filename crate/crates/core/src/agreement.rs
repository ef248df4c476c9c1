//! Chance-corrected inter-annotator agreement.
//!
//! All three coefficients accumulate integer counts before dividing, so the
//! result does not depend on instance order or label naming.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedDataset;
use crate::error::{Error, Result};
use crate::label::LabelId;

/// Labels two annotators gave to the same items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedLabels {
    k: usize,
    items: Vec<(LabelId, LabelId)>,
}

impl PairedLabels {
    pub fn new(k: usize, items: Vec<(LabelId, LabelId)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &(a, b) in &items {
            for l in [a, b] {
                if l.0 >= k {
                    return Err(Error::LabelOutOfRange { index: l.0, k });
                }
            }
        }
        Ok(Self { k, items })
    }

    /// Items both annotators labelled, in dataset order.
    pub fn from_dataset(dataset: &AnnotatedDataset, first: &str, second: &str) -> Result<Self> {
        dataset.require_categorical()?;
        let mut items = Vec::new();
        for inst in dataset.instances() {
            let find = |who: &str| inst.annotations.iter().find(|a| a.annotator == who).and_then(|a| a.as_label());
            if let (Some(a), Some(b)) = (find(first), find(second)) {
                items.push((a, b));
            }
        }
        Self::new(dataset.label_set().len(), items)
    }

    pub fn items(&self) -> &[(LabelId, LabelId)] {
        &self.items
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Per-item label counts for a constant number of annotators per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    rows: Vec<Vec<usize>>,
    m: usize,
}

impl CountMatrix {
    pub fn new(rows: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::TooFewAnnotators(m));
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let k = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::WidthMismatch { expected: k, found: row.len() });
            }
            let found: usize = row.iter().sum();
            if found != m {
                return Err(Error::RowSumMismatch { row: i, expected: m, found });
            }
        }
        Ok(Self { rows, m })
    }

    /// Count rows for every annotated instance. Unannotated instances are
    /// skipped; the rest must share one annotator count.
    pub fn from_dataset(dataset: &AnnotatedDataset) -> Result<Self> {
        dataset.require_categorical()?;
        let (min, max) = dataset.annotator_range().ok_or(Error::EmptyInput)?;
        if min != max {
            return Err(Error::RaggedCounts { min, max });
        }
        let k = dataset.label_set().len();
        let rows = dataset
            .instances()
            .iter()
            .filter(|i| !i.annotations.is_empty())
            .map(|i| i.label_counts(k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, min)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn annotators_per_item(&self) -> usize {
        self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub coefficient: f64,
    /// Observed agreement (kappas) or observed disagreement (alpha).
    pub observed: f64,
    /// Chance agreement (kappas) or expected disagreement (alpha).
    pub expected: f64,
    pub n_items: usize,
    /// Chance term made the formula 0/0; coefficient set to 1.0.
    pub degenerate: bool,
    /// Items skipped for lacking enough annotations.
    pub excluded: usize,
}

/// Cohen's kappa with per-annotator empirical marginals.
pub fn cohen_kappa(pairs: &PairedLabels) -> Result<AgreementReport> {
    let n = pairs.items.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut first = vec![0u64; pairs.k];
    let mut second = vec![0u64; pairs.k];
    let mut agree = 0u64;
    for &(a, b) in &pairs.items {
        first[a.0] += 1;
        second[b.0] += 1;
        agree += u64::from(a == b);
    }
    let chance_num: u64 = first.iter().zip(&second).map(|(x, y)| x * y).sum();
    let n = n as u64;
    let p_o = agree as f64 / n as f64;
    let p_e = chance_num as f64 / (n * n) as f64;
    Ok(finish(p_o, p_e, chance_num == n * n, n as usize, 0))
}

/// Fleiss' kappa over a constant-width count matrix.
pub fn fleiss_kappa(counts: &CountMatrix) -> Result<AgreementReport> {
    let n = counts.rows.len() as u64;
    let m = counts.m as u64;
    let k = counts.rows[0].len();
    let mut agreeing_pairs = 0u64;
    let mut column = vec![0u64; k];
    for row in &counts.rows {
        for (c, &x) in row.iter().enumerate() {
            let x = x as u64;
            agreeing_pairs += x * x.saturating_sub(1);
            column[c] += x;
        }
    }
    let total = n * m;
    let chance_num: u64 = column.iter().map(|c| c * c).sum();
    let p_bar = agreeing_pairs as f64 / (n * m * (m - 1)) as f64;
    let p_e = chance_num as f64 / (total * total) as f64;
    Ok(finish(p_bar, p_e, chance_num == total * total, n as usize, 0))
}

fn finish(observed: f64, expected: f64, degenerate: bool, n_items: usize, excluded: usize) -> AgreementReport {
    let coefficient = if degenerate { 1.0 } else { (observed - expected) / (1.0 - expected) };
    AgreementReport { coefficient, observed, expected, n_items, degenerate, excluded }
}

/// Distance between two label values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    /// 0 for equal labels, 1 otherwise.
    #[default]
    Nominal,
}

/// Krippendorff's alpha over the annotated instances of `dataset`.
///
/// Items with fewer than two annotations are not pairable; they count as
/// excluded and contribute nothing.
pub fn krippendorff_alpha(dataset: &AnnotatedDataset, metric: AlphaMetric) -> Result<AgreementReport> {
    dataset.require_categorical()?;
    let units = dataset
        .instances()
        .iter()
        .map(|i| i.annotations.iter().filter_map(|a| a.as_label()).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    krippendorff_alpha_units(&units, dataset.label_set().len(), metric)
}

/// Krippendorff's alpha over raw units (one label list per item).
pub fn krippendorff_alpha_units(units: &[Vec<LabelId>], k: usize, metric: AlphaMetric) -> Result<AgreementReport> {
    let AlphaMetric::Nominal = metric;
    // Ordered within-unit value pairs, bucketed by unit size m so the
    // 1/(m-1) weights are applied once per bucket in ascending m.
    let mut pairs_by_size: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    let mut value_totals = vec![0u64; k];
    let mut pairable_units = 0usize;
    let mut excluded = 0usize;
    let mut counts = vec![0u64; k];
    for unit in units {
        if unit.len() < 2 {
            excluded += 1;
            continue;
        }
        pairable_units += 1;
        counts.iter_mut().for_each(|c| *c = 0);
        for l in unit {
            if l.0 >= k {
                return Err(Error::LabelOutOfRange { index: l.0, k });
            }
            counts[l.0] += 1;
        }
        let bucket = pairs_by_size.entry(unit.len()).or_insert_with(|| vec![0u64; k * k]);
        for c in 0..k {
            value_totals[c] += counts[c];
            for d in 0..k {
                bucket[c * k + d] += if c == d { counts[c] * counts[c].saturating_sub(1) } else { counts[c] * counts[d] };
            }
        }
    }
    if pairable_units == 0 {
        return Err(Error::NoPairableValues);
    }
    let n: u64 = value_totals.iter().sum();
    let mut observed_sum = 0.0;
    for (&m, bucket) in &pairs_by_size {
        let mut disagreeing = 0u64;
        for c in 0..k {
            for d in 0..k {
                if c != d {
                    disagreeing += bucket[c * k + d];
                }
            }
        }
        observed_sum += disagreeing as f64 / (m - 1) as f64;
    }
    let mut expected_num = 0u64;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                expected_num += value_totals[c] * value_totals[d];
            }
        }
    }
    let d_o = observed_sum / n as f64;
    let d_e = expected_num as f64 / (n * (n - 1)) as f64;
    let degenerate = expected_num == 0;
    let coefficient = if degenerate { 1.0 } else { 1.0 - d_o / d_e };
    Ok(AgreementReport { coefficient, observed: d_o, expected: d_e, n_items: pairable_units, degenerate, excluded })
}

/// The annotator pair sharing the most instances, ties broken by name.
pub fn most_overlapping_pair(dataset: &AnnotatedDataset) -> Option<(String, String, usize)> {
    let mut shared: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for inst in dataset.instances() {
        let mut names: Vec<&str> = inst.annotations.iter().map(|a| a.annotator.as_str()).collect();
        names.sort_unstable();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                *shared.entry((names[i], names[j])).or_default() += 1;
            }
        }
    }
    let mut best: Option<((&str, &str), usize)> = None;
    for (pair, count) in shared {
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((pair, count));
        }
    }
    best.map(|((a, b), c)| (a.into(), b.into(), c))
}
