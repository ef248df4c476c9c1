//! Label sets and the probability vectors defined over them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the component sum of a [`SoftLabel`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Position of a label inside its [`LabelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub usize);

impl LabelId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered, duplicate-free list of categorical labels.
///
/// The order fixes the component order of every probability vector in the
/// crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::TooFewLabels(labels.len()));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        (0..self.labels.len()).map(LabelId)
    }

    pub fn id_of(&self, name: &str) -> Result<LabelId> {
        self.labels
            .iter()
            .position(|l| l == name)
            .map(LabelId)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, id: LabelId) -> Result<&str> {
        self.labels
            .get(id.0)
            .map(String::as_str)
            .ok_or(Error::LabelOutOfRange { index: id.0, k: self.labels.len() })
    }

    pub fn check(&self, id: LabelId) -> Result<LabelId> {
        if id.0 < self.labels.len() {
            Ok(id)
        } else {
            Err(Error::LabelOutOfRange { index: id.0, k: self.labels.len() })
        }
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        LabelSet::new(labels)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.labels
    }
}

/// How ties between equally frequent labels are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// The tied label that comes first in label-set order wins.
    #[default]
    FirstInLabelOrder,
    /// The tied label that comes last in label-set order wins.
    LastInLabelOrder,
}

impl TieBreak {
    /// Index of the maximal entry of `values` under this rule.
    ///
    /// Values are compared exactly; `values` must be non-empty.
    pub fn argmax<T: PartialOrd + Copy>(self, values: &[T]) -> LabelId {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            let better = match self {
                TieBreak::FirstInLabelOrder => v > values[best],
                TieBreak::LastInLabelOrder => v >= values[best],
            };
            if better {
                best = i;
            }
        }
        LabelId(best)
    }
}

/// Probability distribution over a label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    /// Validates that every component lies in `[0, 1]` and that the vector
    /// sums to one within [`SIMPLEX_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSoftLabel("empty vector".into()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSoftLabel(alloc::format!("component {p} outside [0, 1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidSoftLabel(alloc::format!("components sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Builds a distribution from non-negative weights by dividing through
    /// their total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidSoftLabel("weights must be non-negative with a positive total".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn one_hot(k: usize, id: LabelId) -> Self {
        let mut probs = alloc::vec![0.0; k];
        probs[id.0] = 1.0;
        Self { probs }
    }

    pub fn uniform(k: usize) -> Self {
        Self { probs: alloc::vec![1.0 / k as f64; k] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self, tie: TieBreak) -> LabelId {
        tie.argmax(&self.probs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl TryFrom<Vec<f64>> for SoftLabel {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        SoftLabel::new(probs)
    }
}

impl From<SoftLabel> for Vec<f64> {
    fn from(s: SoftLabel) -> Self {
        s.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn label_set_rejects_duplicates_and_singletons() {
        assert_eq!(LabelSet::new(["a", "b", "a"]), Err(Error::DuplicateLabel("a".into())));
        assert_eq!(LabelSet::new(["a"]), Err(Error::TooFewLabels(1)));
        let set = LabelSet::new(["off", "not"]).unwrap();
        assert_eq!(set.id_of("not").unwrap(), LabelId(1));
        assert!(matches!(set.id_of("x"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn soft_label_validation() {
        assert!(SoftLabel::new(vec![0.5, 0.5]).is_ok());
        assert!(SoftLabel::new(vec![0.5, 0.6]).is_err());
        assert!(SoftLabel::new(vec![-0.1, 1.1]).is_err());
        assert!(SoftLabel::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SoftLabel::new(vec![]).is_err());
    }

    #[test]
    fn tie_break_rules() {
        let v = [1, 3, 3, 0];
        assert_eq!(TieBreak::FirstInLabelOrder.argmax(&v), LabelId(1));
        assert_eq!(TieBreak::LastInLabelOrder.argmax(&v), LabelId(2));
    }
}
