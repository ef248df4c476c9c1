//! Bias-recovery runs on synthetic corpora with a known adversary.
//!
//! A WEL ensemble and a single majority-vote model are trained on the same
//! split; member weights are scored on the dev split and the two models are
//! compared on the test split.

use std::collections::BTreeMap;

use annobias_core::eval::{self, Averaging, EvalReport};
use annobias_core::learn::TrainConfig;
use annobias_core::synth::{self, Adversary, SynthConfig, SynthCorpus};
use annobias_core::wel::{self, SingleTarget, WeightScheme, WelPlan, WelSettings};
use annobias_core::{AnnotatedDataset, LabelId, Result, Split, TieBreak};
use serde::Serialize;

use crate::train::train_wel_parallel;

pub const SCHEMES: [WeightScheme; 4] =
    [WeightScheme::F1Proportional, WeightScheme::INV_CE, WeightScheme::INV_MD, WeightScheme::SOFTMAX_F1];

pub const PERMUTATION_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRecoveryConfig {
    pub synth: SynthConfig,
    pub k: usize,
    pub train: TrainConfig,
    pub threads: usize,
}

impl BiasRecoveryConfig {
    /// Five annotators, the last flipping 80% of labels.
    pub fn adversarial(seed: u64) -> Self {
        Self {
            synth: SynthConfig {
                seed,
                n: 2000,
                annotators: 5,
                honest_noise: 0.1,
                adversary: Some(Adversary { annotator: 4, flip_rate: 0.8 }),
                ..SynthConfig::default()
            },
            k: 10,
            train: TrainConfig { seed, ..TrainConfig::default() },
            threads: 1,
        }
    }

    /// Three honest annotators with ArMIS-sized splits.
    pub fn small_pool(seed: u64) -> Self {
        Self {
            synth: SynthConfig {
                seed,
                n: 943,
                annotators: 3,
                honest_noise: 0.1,
                adversary: None,
                split: (657.0 / 943.0, 141.0 / 943.0),
                ..SynthConfig::default()
            },
            k: 10,
            train: TrainConfig { seed, ..TrainConfig::default() },
            threads: 1,
        }
    }

    pub fn settings(&self) -> WelSettings {
        WelSettings {
            k: self.k,
            master_seed: self.synth.seed,
            train: self.train,
            averaging: Some(Averaging::Binary(LabelId(1))),
            ..WelSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeWeights {
    pub scheme: &'static str,
    pub weights: Vec<f64>,
    /// Member with the smallest weight; ties go to the lowest index.
    pub lightest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRecoveryOutcome {
    /// Per member: training labels drawn from the adversary that disagree
    /// with the hidden truth.
    pub contamination: Vec<usize>,
    /// Members sharing the highest contamination.
    pub most_contaminated: Vec<usize>,
    pub schemes: Vec<SchemeWeights>,
    pub wel: EvalReport,
    pub single: EvalReport,
    /// Single-model CE minus WEL CE on the test split.
    pub ce_margin: f64,
    /// One-sided paired permutation p-value for a positive CE margin.
    pub ce_p_value: f64,
}

impl BiasRecoveryOutcome {
    /// The lightest member under `scheme` is a most-contaminated one and
    /// its weight is strictly below every other member's.
    pub fn recovers(&self, scheme: &SchemeWeights) -> bool {
        let w = &scheme.weights;
        self.most_contaminated.contains(&scheme.lightest)
            && w.iter().enumerate().all(|(i, x)| i == scheme.lightest || *x > w[scheme.lightest])
    }

    pub fn recovers_under_every_scheme(&self) -> bool {
        self.schemes.iter().all(|s| self.recovers(s))
    }
}

pub fn contamination(plan: &WelPlan, corpus: &SynthCorpus, adversary: &str) -> Vec<usize> {
    plan.variants
        .iter()
        .map(|v| {
            plan.split
                .train
                .iter()
                .filter(|id| v.sources.get(*id).is_some_and(|a| a == adversary) && v.labels.get(*id) != corpus.truth.get(*id))
                .count()
        })
        .collect()
}

fn lightest(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w < weights[best] {
            best = i;
        }
    }
    best
}

fn test_split(ds: &AnnotatedDataset) -> AnnotatedDataset {
    ds.split(Split::Test).filter(|i| !i.annotations.is_empty())
}

pub fn run_bias_recovery(config: &BiasRecoveryConfig) -> Result<BiasRecoveryOutcome> {
    let corpus = synth::generate(&config.synth)?;
    let ds = &corpus.dataset;
    let settings = config.settings();
    let (plan, ensemble) = train_wel_parallel(ds, &settings, config.threads)?;
    let contamination = match config.synth.adversary {
        Some(a) => contamination(&plan, &corpus, &synth::annotator_name(a.annotator)),
        None => vec![0; plan.variants.len()],
    };
    let top = contamination.iter().copied().max().unwrap_or(0);
    let most_contaminated = (0..contamination.len()).filter(|&i| contamination[i] == top).collect();
    let schemes = SCHEMES
        .iter()
        .map(|s| {
            let w = ensemble.reweighted(*s)?.weights;
            Ok(SchemeWeights { scheme: s.name(), lightest: lightest(&w), weights: w })
        })
        .collect::<Result<Vec<_>>>()?;

    let (_, single) = wel::train_single(ds, &settings, SingleTarget::MajorityVote)?;
    let test = test_split(ds);
    let averaging = settings.averaging.expect("set above");
    let wel_preds = wel::predict_dataset(&ensemble, &test, "wel");
    let single_preds = wel::predict_dataset(&single, &test, "single");
    let wel_eval = eval::evaluate(&wel_preds, &test, averaging, TieBreak::default())?;
    let single_eval = eval::evaluate(&single_preds, &test, averaging, TieBreak::default())?;
    let wel_losses = eval::per_instance_losses(&wel_preds, &test)?;
    let single_losses = eval::per_instance_losses(&single_preds, &test)?;
    let diffs: Vec<f64> = single_losses.iter().zip(&wel_losses).map(|(s, w)| s.0 - w.0).collect();
    let ce_p_value = eval::paired_permutation_p(&diffs, PERMUTATION_RESAMPLES, config.synth.seed)?;
    Ok(BiasRecoveryOutcome {
        contamination,
        most_contaminated,
        schemes,
        ce_margin: single_eval.ce - wel_eval.ce,
        wel: wel_eval,
        single: single_eval,
        ce_p_value,
    })
}

/// Outcomes keyed by seed.
pub fn run_seeds(make: impl Fn(u64) -> BiasRecoveryConfig, seeds: impl IntoIterator<Item = u64>) -> Result<BTreeMap<u64, BiasRecoveryOutcome>> {
    seeds.into_iter().map(|s| Ok((s, run_bias_recovery(&make(s))?))).collect()
}
