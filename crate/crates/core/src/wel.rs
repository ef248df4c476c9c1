//! Weak ensemble learning over annotator label variants, and post-hoc
//! output debiasing.
//!
//! Training is split into three pure steps so callers can run the member
//! fits on any executor without changing the result:
//!
//! 1. [`plan_wel`] fixes the train/holdout split and samples `K` label
//!    variants, each from its own `(master_seed, k)` random stream.
//! 2. [`train_member`] fits one weak predictor on one variant.
//! 3. [`assemble_wel`] scores every member on the holdout and turns the
//!    scores into convex weights, always in member order.
//!
//! [`train_wel`] runs the three steps sequentially.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Split};
use crate::divergence::PredictionSet;
use crate::error::{Error, Result};
use crate::eval::{self, Averaging, EvalReport};
use crate::label::{LabelId, LabelSet, SoftLabel, TieBreak, SIMPLEX_TOLERANCE};
use crate::learn::{self, Predictor, TrainConfig, TrainedPredictor};
use crate::rng;

/// One label per instance, each drawn uniformly from that instance's
/// annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVariant {
    /// 1-based variant number; also the random stream id.
    pub index: usize,
    pub seed: u64,
    pub labels: BTreeMap<String, LabelId>,
    /// Annotator whose label was drawn, per instance.
    pub sources: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSample {
    pub variants: Vec<LabelVariant>,
    /// Instances skipped for having no annotations.
    pub excluded: usize,
}

/// Draws variant `index` (1-based) of `dataset`.
pub fn sample_variant(dataset: &AnnotatedDataset, index: usize, master_seed: u64) -> Result<LabelVariant> {
    dataset.require_categorical()?;
    let mut rng = rng::stream(master_seed, index as u64);
    let mut labels = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for inst in dataset.instances() {
        if inst.annotations.is_empty() {
            continue;
        }
        let pick = &inst.annotations[rng.gen_range(0..inst.annotations.len())];
        let label = pick.as_label().ok_or(Error::NumericMode)?;
        labels.insert(inst.id.clone(), label);
        sources.insert(inst.id.clone(), pick.annotator.clone());
    }
    Ok(LabelVariant { index, seed: master_seed, labels, sources })
}

/// Variants `1..=k`. Variant `i` depends only on `(master_seed, i)`.
pub fn sample_label_variants(dataset: &AnnotatedDataset, k: usize, master_seed: u64) -> Result<VariantSample> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one label variant".into()));
    }
    let variants = (1..=k).map(|i| sample_variant(dataset, i, master_seed)).collect::<Result<Vec<_>>>()?;
    Ok(VariantSample { variants, excluded: dataset.unannotated_count() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMetric {
    F1,
    Ce,
    Md,
}

impl ScoreMetric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, ScoreMetric::F1)
    }

    pub fn of(self, r: &EvalReport) -> f64 {
        match self {
            ScoreMetric::F1 => r.f1,
            ScoreMetric::Ce => r.ce,
            ScoreMetric::Md => r.md,
        }
    }
}

/// Additive guard in inverse-loss weights.
pub const INVERSE_LOSS_EPSILON: f64 = 1e-6;

/// Turns per-member holdout scores into weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `w_k ∝ F1_k`.
    F1Proportional,
    /// `w_k ∝ 1 / (eps + loss_k)` for cross-entropy or Manhattan distance.
    InverseLoss { metric: ScoreMetric },
    /// Softmax of standardized scores (losses negated) at `temperature`.
    Softmax { metric: ScoreMetric, temperature: f64 },
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::F1Proportional
    }
}

impl WeightScheme {
    pub const INV_CE: WeightScheme = WeightScheme::InverseLoss { metric: ScoreMetric::Ce };
    pub const INV_MD: WeightScheme = WeightScheme::InverseLoss { metric: ScoreMetric::Md };
    pub const SOFTMAX_F1: WeightScheme = WeightScheme::Softmax { metric: ScoreMetric::F1, temperature: 1.0 };

    pub fn metric(&self) -> ScoreMetric {
        match *self {
            WeightScheme::F1Proportional => ScoreMetric::F1,
            WeightScheme::InverseLoss { metric } | WeightScheme::Softmax { metric, .. } => metric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightScheme::InverseLoss { metric: ScoreMetric::F1 } => {
                Err(Error::InvalidConfig("inverse-loss weighting needs a loss metric (ce or md)".into()))
            }
            WeightScheme::Softmax { temperature, .. } if !(temperature > 0.0) || !temperature.is_finite() => {
                Err(Error::InvalidConfig("softmax temperature must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::F1Proportional => "f1",
            WeightScheme::InverseLoss { metric: ScoreMetric::Ce } => "inv-ce",
            WeightScheme::InverseLoss { metric: ScoreMetric::Md } => "inv-md",
            WeightScheme::InverseLoss { .. } => "inv-f1",
            WeightScheme::Softmax { .. } => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub weights: Vec<f64>,
    /// Scores gave no usable signal; weights fell back to uniform.
    pub fell_back_to_uniform: bool,
}

/// Normalized non-negative weights for `scores` under `scheme`.
pub fn compute_weights(scores: &[EvalReport], scheme: &WeightScheme) -> Result<Weights> {
    scheme.validate()?;
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = scores.len();
    let values: Vec<f64> = scores.iter().map(|s| scheme.metric().of(s)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite holdout score".into()));
    }
    let raw: Vec<f64> = match *scheme {
        WeightScheme::F1Proportional => values.iter().map(|v| v.max(0.0)).collect(),
        WeightScheme::InverseLoss { .. } => values.iter().map(|v| 1.0 / (INVERSE_LOSS_EPSILON + v.max(0.0))).collect(),
        WeightScheme::Softmax { metric, temperature } => {
            let sign = if metric.higher_is_better() { 1.0 } else { -1.0 };
            let mean = values.iter().sum::<f64>() / k as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
            let sd = libm::sqrt(var);
            let z: Vec<f64> =
                values.iter().map(|v| if sd > 0.0 { sign * (v - mean) / sd / temperature } else { 0.0 }).collect();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            z.iter().map(|v| libm::exp(v - max)).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Ok(Weights { weights: alloc::vec![1.0 / k as f64; k], fell_back_to_uniform: true });
    }
    Ok(Weights { weights: raw.iter().map(|w| w / total).collect(), fell_back_to_uniform: false })
}

/// Where member weights are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "holdout", rename_all = "kebab-case")]
pub enum HoldoutSpec {
    /// The dev split when the dataset has one, else a seeded carve-out.
    Auto { fraction: f64, seed: u64 },
    DevSplit,
    /// Seeded carve-out of the training pool, ignoring any dev split.
    CarveOut { fraction: f64, seed: u64 },
}

impl Default for HoldoutSpec {
    fn default() -> Self {
        HoldoutSpec::Auto { fraction: 0.15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelSettings {
    /// Number of label variants and weak learners.
    pub k: usize,
    pub master_seed: u64,
    pub train: TrainConfig,
    pub scheme: WeightScheme,
    pub holdout: HoldoutSpec,
    /// F1 averaging for holdout scoring; dataset default when `None`.
    pub averaging: Option<Averaging>,
    pub tie: TieBreak,
}

impl Default for WelSettings {
    fn default() -> Self {
        Self {
            k: 10,
            master_seed: 0,
            train: TrainConfig::default(),
            scheme: WeightScheme::default(),
            holdout: HoldoutSpec::default(),
            averaging: None,
            tie: TieBreak::default(),
        }
    }
}

/// Train and holdout instance ids. Test-split instances are never used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub holdout: Vec<String>,
}

pub fn plan_split(dataset: &AnnotatedDataset, spec: &HoldoutSpec) -> Result<SplitPlan> {
    let pool: Vec<&str> = dataset
        .instances()
        .iter()
        .filter(|i| matches!(i.split, None | Some(Split::Train)))
        .map(|i| i.id.as_str())
        .collect();
    let carve = |fraction: f64, seed: u64| -> Result<SplitPlan> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("holdout fraction {fraction} outside (0, 1)")));
        }
        if pool.len() < 2 {
            return Err(Error::EmptyHoldout);
        }
        let mut order: Vec<&str> = pool.clone();
        order.shuffle(&mut rng::stream(seed, rng::streams::HOLDOUT_SPLIT));
        let n_hold = (libm::ceil(pool.len() as f64 * fraction) as usize).clamp(1, pool.len() - 1);
        let holdout: alloc::collections::BTreeSet<&str> = order[..n_hold].iter().copied().collect();
        Ok(SplitPlan {
            train: pool.iter().filter(|id| !holdout.contains(*id)).map(|s| String::from(*s)).collect(),
            holdout: pool.iter().filter(|id| holdout.contains(*id)).map(|s| String::from(*s)).collect(),
        })
    };
    let dev = || SplitPlan {
        train: pool.iter().map(|s| String::from(*s)).collect(),
        holdout: dataset.instances().iter().filter(|i| i.split == Some(Split::Dev)).map(|i| i.id.clone()).collect(),
    };
    let plan = match *spec {
        HoldoutSpec::DevSplit => dev(),
        HoldoutSpec::Auto { fraction, seed } => {
            if dataset.has_split(Split::Dev) {
                dev()
            } else {
                carve(fraction, seed)?
            }
        }
        HoldoutSpec::CarveOut { fraction, seed } => carve(fraction, seed)?,
    };
    let annotated = |ids: &[String]| ids.iter().any(|id| dataset.instance(id).is_some_and(|i| !i.annotations.is_empty()));
    if !annotated(&plan.holdout) {
        return Err(Error::EmptyHoldout);
    }
    if !annotated(&plan.train) {
        return Err(Error::EmptyTraining);
    }
    Ok(plan)
}

fn subset(dataset: &AnnotatedDataset, ids: &[String]) -> AnnotatedDataset {
    let keep: alloc::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    dataset.filter(|i| keep.contains(i.id.as_str()))
}

/// Everything fixed before any member is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct WelPlan {
    pub settings: WelSettings,
    pub split: SplitPlan,
    pub variants: Vec<LabelVariant>,
    /// Unannotated training instances skipped by sampling.
    pub excluded: usize,
}

impl WelPlan {
    /// Training seed of member `index` (0-based).
    pub fn member_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.settings.train.seed, index as u64)
    }
}

pub fn plan_wel(dataset: &AnnotatedDataset, settings: &WelSettings) -> Result<WelPlan> {
    dataset.require_categorical()?;
    settings.train.validate()?;
    settings.scheme.validate()?;
    let split = plan_split(dataset, &settings.holdout)?;
    let train = subset(dataset, &split.train);
    let sample = sample_label_variants(&train, settings.k, settings.master_seed)?;
    Ok(WelPlan { settings: settings.clone(), split, variants: sample.variants, excluded: sample.excluded })
}

/// Fits member `index` (0-based) on its label variant.
pub fn train_member(dataset: &AnnotatedDataset, plan: &WelPlan, index: usize) -> Result<TrainedPredictor> {
    let variant = plan
        .variants
        .get(index)
        .ok_or_else(|| Error::InvalidConfig(format!("no label variant {index}")))?;
    let data: Vec<(&str, LabelId)> = plan
        .split
        .train
        .iter()
        .filter_map(|id| Some((dataset.instance(id)?.text.as_str(), *variant.labels.get(id)?)))
        .collect();
    let config = TrainConfig { seed: plan.member_seed(index), ..plan.settings.train };
    learn::fit(&config, dataset.label_set(), &data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelEnsemble {
    pub label_set: LabelSet,
    pub members: Vec<TrainedPredictor>,
    pub weights: Vec<f64>,
    pub scheme: WeightScheme,
    pub holdout_scores: Vec<EvalReport>,
    pub member_seeds: Vec<u64>,
    pub master_seed: u64,
    pub warnings: Vec<String>,
}

/// Predictions of `predictor` for every instance of `dataset`.
pub fn predict_dataset<P: Predictor + ?Sized>(predictor: &P, dataset: &AnnotatedDataset, model_id: &str) -> PredictionSet {
    let mut set = PredictionSet::new(model_id);
    for inst in dataset.instances() {
        set.insert(inst.id.clone(), predictor.predict_proba(&inst.text));
    }
    set
}

/// Scores members on the holdout and derives their weights.
pub fn assemble_wel(dataset: &AnnotatedDataset, plan: &WelPlan, members: Vec<TrainedPredictor>) -> Result<WelEnsemble> {
    if members.len() != plan.variants.len() {
        return Err(Error::InvalidConfig(format!(
            "{} members for {} label variants",
            members.len(),
            plan.variants.len()
        )));
    }
    let holdout = subset(dataset, &plan.split.holdout).filter(|i| !i.annotations.is_empty());
    let averaging = plan.settings.averaging.unwrap_or_else(|| Averaging::default_for(dataset));
    let holdout_scores = members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let preds = predict_dataset(m, &holdout, &format!("member-{i}"));
            eval::evaluate(&preds, &holdout, averaging, plan.settings.tie)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = compute_weights(&holdout_scores, &plan.settings.scheme)?;
    let mut warnings = Vec::new();
    if weights.fell_back_to_uniform {
        warnings.push(format!(
            "all holdout scores under `{}` were zero; using uniform weights",
            plan.settings.scheme.name()
        ));
    }
    Ok(WelEnsemble {
        label_set: dataset.label_set().clone(),
        member_seeds: (0..members.len()).map(|i| plan.member_seed(i)).collect(),
        members,
        weights: weights.weights,
        scheme: plan.settings.scheme,
        holdout_scores,
        master_seed: plan.settings.master_seed,
        warnings,
    })
}

/// Plans, trains every member in order, and assembles.
pub fn train_wel(dataset: &AnnotatedDataset, settings: &WelSettings) -> Result<(WelPlan, WelEnsemble)> {
    let plan = plan_wel(dataset, settings)?;
    let members = (0..plan.variants.len()).map(|i| train_member(dataset, &plan, i)).collect::<Result<Vec<_>>>()?;
    let ensemble = assemble_wel(dataset, &plan, members)?;
    Ok((plan, ensemble))
}

impl WelEnsemble {
    /// Re-weights the same members under another scheme.
    pub fn reweighted(&self, scheme: WeightScheme) -> Result<WelEnsemble> {
        let w = compute_weights(&self.holdout_scores, &scheme)?;
        Ok(WelEnsemble { weights: w.weights, scheme, ..self.clone() })
    }
}

/// Weighted sum of member distributions, in member order.
pub fn wel_predict(ensemble: &WelEnsemble, text: &str) -> SoftLabel {
    let k = ensemble.label_set.len();
    let mut acc = alloc::vec![0.0; k];
    for (member, &w) in ensemble.members.iter().zip(&ensemble.weights) {
        let p = member.predict_proba(text);
        for (a, q) in acc.iter_mut().zip(p.probs()) {
            *a += w * q;
        }
    }
    acc.iter_mut().for_each(|a| *a = a.clamp(0.0, 1.0));
    SoftLabel::new(acc).unwrap_or_else(|_| SoftLabel::uniform(k))
}

impl Predictor for WelEnsemble {
    fn n_labels(&self) -> usize {
        self.label_set.len()
    }

    fn predict_proba(&self, text: &str) -> SoftLabel {
        wel_predict(self, text)
    }
}

/// Target used by a single-model baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleTarget {
    MajorityVote,
    SoftLabel,
}

/// One learner on the same training split a WEL run would use.
pub fn train_single(
    dataset: &AnnotatedDataset,
    settings: &WelSettings,
    target: SingleTarget,
) -> Result<(SplitPlan, TrainedPredictor)> {
    dataset.require_categorical()?;
    let split = plan_split(dataset, &settings.holdout)?;
    let mut data: Vec<(&str, SoftLabel)> = Vec::new();
    for id in &split.train {
        let inst = dataset.instance(id).expect("planned ids exist");
        if inst.annotations.is_empty() {
            continue;
        }
        let t = match target {
            SingleTarget::MajorityVote => {
                SoftLabel::one_hot(dataset.label_set().len(), dataset.majority(inst, settings.tie)?)
            }
            SingleTarget::SoftLabel => dataset.soft_label(inst)?,
        };
        data.push((inst.text.as_str(), t));
    }
    let predictor = learn::fit_soft(&settings.train, dataset.label_set(), &data)?;
    Ok((split, predictor))
}

/// Bias vector subtracted from model outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasComponent {
    /// Same vector for every instance.
    Global(Vec<f64>),
    PerInstance(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasConfig {
    pub lambda: f64,
    pub bias: BiasComponent,
}

impl DebiasConfig {
    pub fn new(lambda: f64, bias: BiasComponent) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig("lambda must be a finite non-negative number".into()));
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        let ok = match &bias {
            BiasComponent::Global(v) => finite(v),
            BiasComponent::PerInstance(m) => m.values().all(finite),
        };
        if !ok {
            return Err(Error::InvalidConfig("bias component has a non-finite entry".into()));
        }
        Ok(Self { lambda, bias })
    }

    fn component(&self, instance_id: &str) -> Result<&[f64]> {
        match &self.bias {
            BiasComponent::Global(v) => Ok(v),
            BiasComponent::PerInstance(m) => {
                m.get(instance_id).map(Vec::as_slice).ok_or_else(|| Error::MissingBiasComponent(instance_id.into()))
            }
        }
    }
}

/// `f(x) - lambda * b(x)` without projecting back onto the simplex.
pub fn debias_raw(pred: &[f64], config: &DebiasConfig, instance_id: &str) -> Result<Vec<f64>> {
    let b = config.component(instance_id)?;
    if b.len() != pred.len() {
        return Err(Error::WidthMismatch { expected: pred.len(), found: b.len() });
    }
    Ok(pred.iter().zip(b).map(|(f, b)| f - config.lambda * b).collect())
}

/// Debiased distribution. A raw vector already on the simplex is returned
/// unchanged; otherwise negative components are clamped to zero and the rest
/// renormalized. If nothing positive remains the result is uniform.
pub fn debias_output(pred: &SoftLabel, config: &DebiasConfig, instance_id: &str) -> Result<SoftLabel> {
    let raw = debias_raw(pred.probs(), config, instance_id)?;
    if let Ok(valid) = SoftLabel::new(raw.clone()) {
        return Ok(valid);
    }
    let clamped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Ok(SoftLabel::uniform(raw.len()));
    }
    let probs: Vec<f64> = clamped.iter().map(|v| (v / total).min(1.0)).collect();
    Ok(SoftLabel::new(probs).unwrap_or_else(|_| SoftLabel::uniform(raw.len())))
}

/// Learns a global bias vector: mean predicted distribution minus mean
/// empirical soft label over the annotated instances of `dataset`.
pub fn estimate_prior_bias(preds: &PredictionSet, dataset: &AnnotatedDataset) -> Result<Vec<f64>> {
    dataset.require_categorical()?;
    let k = dataset.label_set().len();
    let mut items: Vec<_> = dataset.instances().iter().filter(|i| !i.annotations.is_empty()).collect();
    items.sort_unstable_by(|a, b| a.id.cmp(&b.id));
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let missing = preds.missing(items.iter().map(|i| i.id.as_str()));
    if !missing.is_empty() {
        return Err(Error::CoverageGap(missing));
    }
    let mut acc = alloc::vec![0.0; k];
    for inst in &items {
        let q = preds.get(&inst.id).expect("coverage checked");
        if q.len() != k {
            return Err(Error::WidthMismatch { expected: k, found: q.len() });
        }
        let p = dataset.soft_label(inst)?;
        for c in 0..k {
            acc[c] += q.probs()[c] - p.probs()[c];
        }
    }
    Ok(acc.iter().map(|v| v / items.len() as f64).collect())
}

/// Checks the weight-vector contract: non-negative, summing to one.
pub fn weights_are_valid(weights: &[f64]) -> bool {
    !weights.is_empty()
        && weights.iter().all(|w| *w >= 0.0 && w.is_finite())
        && (weights.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE
}
