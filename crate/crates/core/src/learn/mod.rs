//! Weak predictors: a majority-class prior and a hashed linear classifier.

pub mod hashing;
pub mod linear;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{LabelId, LabelSet, SoftLabel, TieBreak};
use crate::rng;

pub use hashing::{FeatureHasher, SparseVec};
pub use linear::{HashedLinear, LinearModel, SgdSettings};

/// A trained text classifier with probabilistic output.
pub trait Predictor {
    fn n_labels(&self) -> usize;

    /// Distribution over the label set, in label order.
    fn predict_proba(&self, text: &str) -> SoftLabel;

    fn predict(&self, text: &str, tie: TieBreak) -> LabelId {
        self.predict_proba(text).argmax(tie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Ignores text; predicts the add-one smoothed label prior.
    MajorityClass,
    #[default]
    HashedLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learner: LearnerKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hash_dims: u32,
    /// Inclusive word n-gram range.
    pub word_ngrams: (usize, usize),
    /// Inclusive character n-gram range; `None` disables character features.
    pub char_ngrams: Option<(usize, usize)>,
    pub l2: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learner: LearnerKind::HashedLinear,
            epochs: 8,
            learning_rate: 0.5,
            batch_size: 16,
            hash_dims: 1 << 16,
            word_ngrams: (1, 2),
            char_ngrams: None,
            l2: 0.0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.hash_dims < 2 {
            return bad("hash_dims must be at least 2");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        let (lo, hi) = self.word_ngrams;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("bad word n-gram range {lo}..={hi}")));
        }
        if let Some((lo, hi)) = self.char_ngrams {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidConfig(format!("bad char n-gram range {lo}..={hi}")));
            }
        }
        Ok(())
    }

    pub fn hasher(&self) -> FeatureHasher {
        FeatureHasher { dims: self.hash_dims, word_ngrams: self.word_ngrams, char_ngrams: self.char_ngrams }
    }

    fn sgd(&self) -> SgdSettings {
        SgdSettings {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            l2: self.l2,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityClass {
    probs: SoftLabel,
}

impl MajorityClass {
    pub fn probs(&self) -> &SoftLabel {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainedPredictor {
    MajorityClass(MajorityClass),
    HashedLinear(HashedLinear),
}

impl Predictor for TrainedPredictor {
    fn n_labels(&self) -> usize {
        match self {
            TrainedPredictor::MajorityClass(m) => m.probs.len(),
            TrainedPredictor::HashedLinear(h) => h.model.k(),
        }
    }

    fn predict_proba(&self, text: &str) -> SoftLabel {
        match self {
            TrainedPredictor::MajorityClass(m) => m.probs.clone(),
            TrainedPredictor::HashedLinear(h) => {
                let p = h.probs(text);
                let k = p.len();
                SoftLabel::new(p).unwrap_or_else(|_| SoftLabel::uniform(k))
            }
        }
    }
}

/// Trains on hard labels.
pub fn fit<S: AsRef<str>>(config: &TrainConfig, labels: &LabelSet, data: &[(S, LabelId)]) -> Result<TrainedPredictor> {
    let k = labels.len();
    let targets = data
        .iter()
        .map(|(t, l)| {
            labels.check(*l)?;
            Ok((t.as_ref(), SoftLabel::one_hot(k, *l)))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_soft(config, labels, &targets)
}

/// Trains on soft targets (cross-entropy against a distribution).
pub fn fit_soft<S: AsRef<str>>(
    config: &TrainConfig,
    labels: &LabelSet,
    data: &[(S, SoftLabel)],
) -> Result<TrainedPredictor> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let k = labels.len();
    for (_, t) in data {
        if t.len() != k {
            return Err(Error::WidthMismatch { expected: k, found: t.len() });
        }
    }
    match config.learner {
        LearnerKind::MajorityClass => {
            let mut mass = vec![1.0; k];
            for (_, t) in data {
                for (m, p) in mass.iter_mut().zip(t.probs()) {
                    *m += p;
                }
            }
            Ok(TrainedPredictor::MajorityClass(MajorityClass { probs: SoftLabel::from_weights(&mass)? }))
        }
        LearnerKind::HashedLinear => {
            let hasher = config.hasher();
            let encoded: Vec<(SparseVec, Vec<f64>)> =
                data.iter().map(|(text, t)| (hasher.features(text.as_ref()), t.probs().to_vec())).collect();
            let mut model = LinearModel::zeros(k, config.hash_dims as usize);
            let mut rng = rng::stream(config.seed, rng::streams::LEARNER_BASE);
            linear::train(&mut model, &encoded, &config.sgd(), &mut rng);
            Ok(TrainedPredictor::HashedLinear(HashedLinear { hasher, model }))
        }
    }
}
