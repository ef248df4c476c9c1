//! Report blocks for the agreement, divergence and metadata analytics.

use std::collections::{BTreeMap, BTreeSet};

use annobias_core::agreement::{self, AlphaMetric, CountMatrix, PairedLabels};
use annobias_core::divergence::{self, DeltaForm, PredictionSet};
use annobias_core::metadata::{self, CulturalEmbedding, GapLevel, LogBase};
use annobias_core::{AnnotatedDataset, LabelId, LabelMode, Result, Split, TieBreak};
use serde_json::{json, Value};

use crate::format;
use crate::preset::Preset;
use crate::report::Report;

pub const COHEN: &str = "eq1_cohen_kappa";
pub const CHANCE: &str = "eq2_chance_agreement";
pub const FLEISS: &str = "eq3_fleiss_kappa";
pub const ALPHA: &str = "eq4_krippendorff_alpha";
pub const RATE: &str = "eq5_disagreement_rate";
pub const DELTA: &str = "eq6_model_human_delta";
pub const GAP: &str = "eq7_demographic_gap";
pub const MULTILINGUAL: &str = "eq8_multilingual_disagreement";
pub const CULTURAL: &str = "eq9_cultural_distance";
pub const ENTROPY: &str = "eq10_pool_entropy";
pub const ITERATION: &str = "eq11_iteration_variance";
pub const DEBIAS: &str = "eq12_debias";
pub const WEL: &str = "eq15_wel";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum AgreementMetric {
    Cohen,
    Fleiss,
    Krippendorff,
}

/// Adds a block, or a skip note when `lenient` and the metric does not
/// apply; otherwise propagates the error.
pub fn add(report: &mut Report, name: &str, lenient: bool, block: Result<(Value, usize)>) -> Result<()> {
    match block {
        Ok((value, excluded)) => {
            report.block(name, value);
            report.exclude(name, excluded);
            Ok(())
        }
        Err(e) if lenient => {
            report.skip(name, e);
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn label_names(ds: &AnnotatedDataset) -> &[String] {
    ds.label_set().labels()
}

pub fn cohen(ds: &AnnotatedDataset, pair: Option<(&str, &str)>) -> Result<(Value, Value, usize)> {
    let (a, b) = match pair {
        Some((a, b)) => (a.to_string(), b.to_string()),
        None => {
            let (a, b, _) = agreement::most_overlapping_pair(ds).ok_or(annobias_core::Error::TooFewAnnotators(1))?;
            (a, b)
        }
    };
    let pairs = PairedLabels::from_dataset(ds, &a, &b)?;
    let r = agreement::cohen_kappa(&pairs)?;
    let k = ds.label_set().len();
    let mut first = vec![0usize; k];
    let mut second = vec![0usize; k];
    for &(x, y) in pairs.items() {
        first[x.0] += 1;
        second[y.0] += 1;
    }
    let n = pairs.items().len() as f64;
    let share = |c: &[usize]| c.iter().map(|&x| x as f64 / n).collect::<Vec<_>>();
    let shared = ds.instances().iter().filter(|i| !i.annotations.is_empty()).count();
    let main = json!({
        "annotators": [a, b],
        "coefficient": r.coefficient,
        "observed": r.observed,
        "expected": r.expected,
        "n_items": r.n_items,
        "degenerate": r.degenerate,
    });
    let chance = json!({
        "annotators": [a, b],
        "value": r.expected,
        "labels": label_names(ds),
        "marginals": [share(&first), share(&second)],
    });
    Ok((main, chance, shared - r.n_items))
}

pub fn fleiss(ds: &AnnotatedDataset) -> Result<(Value, usize)> {
    let counts = CountMatrix::from_dataset(ds)?;
    let r = agreement::fleiss_kappa(&counts)?;
    Ok((
        json!({
            "coefficient": r.coefficient,
            "observed": r.observed,
            "expected": r.expected,
            "n_items": r.n_items,
            "annotators_per_item": counts.annotators_per_item(),
            "degenerate": r.degenerate,
        }),
        ds.unannotated_count(),
    ))
}

pub fn alpha(ds: &AnnotatedDataset) -> Result<(Value, usize)> {
    let r = agreement::krippendorff_alpha(ds, AlphaMetric::Nominal)?;
    Ok((
        json!({
            "coefficient": r.coefficient,
            "observed_disagreement": r.observed,
            "expected_disagreement": r.expected,
            "metric": "nominal",
            "n_items": r.n_items,
            "degenerate": r.degenerate,
        }),
        r.excluded,
    ))
}

pub fn agreement(
    report: &mut Report,
    ds: &AnnotatedDataset,
    metrics: &BTreeSet<AgreementMetric>,
    pair: Option<(&str, &str)>,
    lenient: bool,
) -> Result<()> {
    if metrics.contains(&AgreementMetric::Cohen) {
        match cohen(ds, pair) {
            Ok((main, chance, excluded)) => {
                add(report, COHEN, lenient, Ok((main, excluded)))?;
                add(report, CHANCE, lenient, Ok((chance, excluded)))?;
            }
            Err(e) if lenient => {
                report.skip(COHEN, &e);
                report.skip(CHANCE, &e);
            }
            Err(e) => return Err(e),
        }
    }
    if metrics.contains(&AgreementMetric::Fleiss) {
        add(report, FLEISS, lenient, fleiss(ds))?;
    }
    if metrics.contains(&AgreementMetric::Krippendorff) {
        add(report, ALPHA, lenient, alpha(ds))?;
    }
    Ok(())
}

fn divergence_value(r: &divergence::DivergenceReport, labels: &[String]) -> Value {
    json!({
        "value": r.value,
        "n_compared": r.n_compared,
        "per_label": labels.iter().cloned().zip(r.per_label.iter().copied()).collect::<BTreeMap<_, _>>(),
    })
}

/// Rate over `over`, or over every id either set covers.
pub fn rate(first: &PredictionSet, second: &PredictionSet, over: Option<&BTreeSet<String>>, labels: &[String]) -> Result<(Value, usize)> {
    let ids: BTreeSet<String> = match over {
        Some(ids) => ids.clone(),
        None => first.outputs.keys().chain(second.outputs.keys()).cloned().collect(),
    };
    let r = divergence::disagreement_rate(first, second, &ids, TieBreak::default())?;
    let mut v = divergence_value(&r, labels);
    v["models"] = json!([first.model_id, second.model_id]);
    Ok((v, 0))
}

pub fn delta(preds: &PredictionSet, ds: &AnnotatedDataset, form: DeltaForm) -> Result<(Value, usize)> {
    let r = divergence::model_human_delta(preds, ds, form, TieBreak::default())?;
    let mut v = divergence_value(&r, label_names(ds));
    v["model"] = json!(preds.model_id);
    v["form"] = match form {
        DeltaForm::Vector => json!("vector"),
        DeltaForm::Class(c) => json!({ "class": label_names(ds)[c.0] }),
    };
    Ok((v, r.excluded))
}

pub fn multilingual(first: &PredictionSet, second: &PredictionSet, pairing: &[(String, String)], labels: &[String]) -> Result<(Value, usize)> {
    let r = divergence::multilingual_disagreement(first, second, pairing, TieBreak::default())?;
    let mut v = divergence_value(&r, labels);
    v["models"] = json!([first.model_id, second.model_id]);
    v["languages"] = json!([first.language, second.language]);
    Ok((v, 0))
}

fn dimension_groups(ds: &AnnotatedDataset, dimension: &str) -> Result<Vec<String>> {
    let groups: Vec<String> = metadata::group_slices(ds, dimension).into_keys().collect();
    if groups.is_empty() {
        return Err(annobias_core::Error::DimensionMissing(dimension.into()));
    }
    Ok(groups)
}

pub fn gap(ds: &AnnotatedDataset, dimension: &str, positive: Option<LabelId>, level: GapLevel) -> Result<(Value, usize)> {
    let positive = positive
        .or_else(|| ds.default_positive())
        .ok_or_else(|| annobias_core::Error::InvalidConfig("multi-class dataset needs --positive".into()))?;
    let mut groups = BTreeMap::new();
    for g in dimension_groups(ds, dimension)? {
        let r = metadata::demographic_gap(ds, dimension, &g, positive, level)?;
        groups.insert(
            g,
            json!({
                "gap": r.gap,
                "signed": r.signed,
                "group_rate": r.group_rate,
                "global_rate": r.global_rate,
                "support": r.group_support,
            }),
        );
    }
    let level = match level {
        GapLevel::Annotation => "annotation",
        GapLevel::Aggregated => "aggregated",
    };
    Ok((
        json!({
            "dimension": dimension,
            "positive": label_names(ds)[positive.0],
            "level": level,
            "groups": groups,
        }),
        ds.unannotated_count(),
    ))
}

pub fn cultural(
    ds: &AnnotatedDataset,
    dimension: &str,
    embeddings: Option<&BTreeMap<String, CulturalEmbedding>>,
) -> Result<(Value, usize)> {
    let (source, vectors): (&str, BTreeMap<String, CulturalEmbedding>) = match embeddings {
        Some(e) => ("file", e.clone()),
        None => {
            let groups = dimension_groups(ds, dimension)?;
            let vectors = groups
                .into_iter()
                .map(|g| Ok((g.clone(), metadata::default_group_embedding(ds, dimension, &g)?)))
                .collect::<Result<_>>()?;
            ("label-distribution", vectors)
        }
    };
    let names: Vec<&String> = vectors.keys().collect();
    let mut pairs = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let d = metadata::cultural_distance(&vectors[names[i]], &vectors[names[j]])?;
            pairs.push(json!({ "groups": [names[i], names[j]], "value": d }));
        }
    }
    Ok((json!({ "dimension": dimension, "embedding": source, "pairs": pairs }), 0))
}

pub fn entropy(ds: &AnnotatedDataset, dimension: &str, base: LogBase) -> Result<(Value, usize)> {
    let value = metadata::pool_entropy(ds, dimension, base)?;
    let shares: BTreeMap<String, usize> =
        metadata::group_slices(ds, dimension).into_iter().map(|(g, s)| (g, s.annotation_count)).collect();
    let max = match base {
        LogBase::Natural => (shares.len() as f64).ln(),
        LogBase::Two => (shares.len() as f64).log2(),
    };
    let unprofiled: usize = ds
        .instances()
        .iter()
        .flat_map(|i| &i.annotations)
        .filter(|a| ds.group_of(&a.annotator, dimension).is_none())
        .count();
    let base = match base {
        LogBase::Natural => "e",
        LogBase::Two => "2",
    };
    Ok((json!({ "dimension": dimension, "value": value, "base": base, "max": max, "annotations": shares }), unprofiled))
}

pub fn iteration(ds: &AnnotatedDataset) -> Result<(Value, usize)> {
    let trend = metadata::iteration_trend(ds)?;
    let excluded = trend.iter().map(|t| t.excluded).sum();
    let spread = match ds.mode() {
        LabelMode::Numeric => "population-variance",
        LabelMode::Categorical => "gini-impurity",
    };
    Ok((json!({ "spread": spread, "iterations": trend }), excluded))
}

/// Dataset shape, as `ingest validate` reports it.
pub fn describe(ds: &AnnotatedDataset) -> Value {
    let k = ds.label_set().len();
    let mut label_counts = vec![0usize; k];
    let mut score_count = 0usize;
    for a in ds.instances().iter().flat_map(|i| &i.annotations) {
        match a.as_label() {
            Some(l) => label_counts[l.0] += 1,
            None => score_count += 1,
        }
    }
    let languages: BTreeMap<&str, usize> = ds.instances().iter().fold(BTreeMap::new(), |mut m, i| {
        *m.entry(i.language.as_str()).or_default() += 1;
        m
    });
    let mut block = json!({
        "n": ds.len(),
        "splits": format::split_counts(ds),
        "labels": label_names(ds),
        "label_mode": ds.mode(),
        "positive": ds.positive_label().map(|p| label_names(ds)[p.0].clone()),
        "iterative": ds.is_iterative(),
        "annotators_total": ds.annotators().len(),
        "annotators_per_instance": ds.annotator_range().map(|(lo, hi)| [lo, hi]),
        "unannotated": ds.unannotated_count(),
        "languages": languages,
    });
    if ds.mode() == LabelMode::Categorical {
        block["label_counts"] = json!(label_names(ds).iter().cloned().zip(label_counts).collect::<BTreeMap<_, _>>());
    } else {
        block["score_count"] = json!(score_count);
    }
    block
}

/// Compares the loaded splits and annotator counts against a preset's
/// published statistics.
pub fn table_check(ds: &AnnotatedDataset, preset: &Preset) -> Value {
    let e = preset.expected;
    let found = json!({
        "train": ds.split_count(Split::Train),
        "dev": ds.split_count(Split::Dev),
        "test": ds.split_count(Split::Test),
        "total_annotators": ds.annotators().len(),
        "per_instance": ds.annotator_range().map(|(lo, hi)| [lo, hi]),
    });
    let expected = json!({
        "train": e.train,
        "dev": e.dev,
        "test": e.test,
        "total_annotators": e.total_annotators,
        "per_instance": [e.per_instance.0, e.per_instance.1],
    });
    let fields: BTreeMap<&str, bool> = ["train", "dev", "test", "total_annotators", "per_instance"]
        .into_iter()
        .map(|k| (k, found[k] == expected[k]))
        .collect();
    json!({
        "preset": preset.name,
        "expected": expected,
        "found": found,
        "fields": fields,
        "matches": fields.values().all(|&m| m),
    })
}

/// Every dataset-level block that applies, skipping the rest with a note.
pub fn audit(
    report: &mut Report,
    ds: &AnnotatedDataset,
    dimensions: &[String],
    embeddings: Option<&BTreeMap<String, CulturalEmbedding>>,
) -> Result<()> {
    let all = [AgreementMetric::Cohen, AgreementMetric::Fleiss, AgreementMetric::Krippendorff].into_iter().collect();
    agreement(report, ds, &all, None, true)?;
    per_dimension(report, GAP, dimensions, true, |d| gap(ds, d, None, GapLevel::default()))?;
    per_dimension(report, CULTURAL, dimensions, true, |d| cultural(ds, d, embeddings))?;
    per_dimension(report, ENTROPY, dimensions, true, |d| entropy(ds, d, LogBase::default()))?;
    if ds.is_iterative() {
        add(report, ITERATION, true, iteration(ds))?;
    }
    Ok(())
}

/// One block keyed by dimension. Under `lenient` a failing dimension is
/// recorded as skipped inside the block.
pub fn per_dimension(
    report: &mut Report,
    name: &str,
    dimensions: &[String],
    lenient: bool,
    mut f: impl FnMut(&str) -> Result<(Value, usize)>,
) -> Result<()> {
    if dimensions.is_empty() {
        if lenient {
            report.skip(name, "no annotator profiles");
        }
        return Ok(());
    }
    let mut by_dimension = BTreeMap::new();
    let mut excluded = 0;
    for dim in dimensions {
        match f(dim) {
            Ok((v, e)) => {
                excluded += e;
                by_dimension.insert(dim.clone(), v);
            }
            Err(e) if lenient => {
                report.warn(format!("{name} for `{dim}` skipped: {e}"));
                by_dimension.insert(dim.clone(), json!({ "skipped": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
    }
    report.block(name, json!({ "by_dimension": by_dimension }));
    report.exclude(name, excluded);
    Ok(())
}

/// Dimension names present in the dataset's profiles.
pub fn dimensions(ds: &AnnotatedDataset) -> Vec<String> {
    let set: BTreeSet<&String> = ds.profiles().iter().flat_map(|p| p.groups.keys()).collect();
    set.into_iter().cloned().collect()
}
