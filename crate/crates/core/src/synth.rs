//! Seeded synthetic multi-annotator corpora.
//!
//! Each instance has a hidden binary label. Its text mixes tokens drawn from
//! a label-specific vocabulary with neutral filler; how many tokens carry
//! signal depends on a per-instance clarity draw. Honest annotators err more
//! on unclear instances. An optional adversary flips the hidden label at a
//! fixed rate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotation, Instance, Split};
use crate::error::{Error, Result};
use crate::label::{LabelId, LabelSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    /// 0-based annotator index.
    pub annotator: usize,
    pub flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n: usize,
    pub annotators: usize,
    /// Share of hidden labels that are `LabelId(1)`.
    pub positive_rate: f64,
    pub adversary: Option<Adversary>,
    /// Honest error rate on a fully unclear instance; scales with `1 - clarity`.
    pub honest_noise: f64,
    /// Clarity is uniform on this range.
    pub clarity: (f64, f64),
    pub tokens_per_text: usize,
    pub signal_vocab: usize,
    pub neutral_vocab: usize,
    /// Train, dev fractions; the rest is test.
    pub split: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 2000,
            annotators: 5,
            positive_rate: 0.5,
            adversary: None,
            honest_noise: 0.3,
            clarity: (0.0, 1.0),
            tokens_per_text: 8,
            signal_vocab: 40,
            neutral_vocab: 400,
            split: (0.7, 0.15),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dataset: AnnotatedDataset,
    pub truth: BTreeMap<String, LabelId>,
    pub clarity: BTreeMap<String, f64>,
}

pub fn annotator_name(index: usize) -> String {
    format!("ann{index}")
}

pub fn instance_name(index: usize) -> String {
    format!("syn{index:05}")
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n == 0 || self.annotators == 0 || self.tokens_per_text == 0 {
            return bad("n, annotators and tokens_per_text must be positive");
        }
        if self.signal_vocab == 0 || self.neutral_vocab == 0 {
            return bad("vocabularies must be non-empty");
        }
        if !unit(self.positive_rate) || !unit(self.honest_noise) {
            return bad("rates must lie in [0, 1]");
        }
        if !unit(self.clarity.0) || !unit(self.clarity.1) || self.clarity.0 > self.clarity.1 {
            return bad("clarity range must be an interval inside [0, 1]");
        }
        if !unit(self.split.0) || !unit(self.split.1) || self.split.0 + self.split.1 > 1.0 {
            return bad("split fractions must be non-negative and sum to at most 1");
        }
        if let Some(a) = self.adversary {
            if a.annotator >= self.annotators || !unit(a.flip_rate) {
                return bad("adversary out of range");
            }
        }
        Ok(())
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::streams::SYNTH);
    let labels = LabelSet::new(["neg", "pos"])?;
    let n_train = libm::round(config.n as f64 * config.split.0) as usize;
    let n_dev = libm::round(config.n as f64 * config.split.1) as usize;
    let mut instances = Vec::with_capacity(config.n);
    let mut truth = BTreeMap::new();
    let mut clarity_of = BTreeMap::new();
    for i in 0..config.n {
        let id = instance_name(i);
        let y = usize::from(rng.gen_bool(config.positive_rate));
        let clarity = config.clarity.0 + (config.clarity.1 - config.clarity.0) * rng.gen::<f64>();
        let mut words = Vec::with_capacity(config.tokens_per_text);
        for _ in 0..config.tokens_per_text {
            if rng.gen_bool(clarity) {
                let w = rng.gen_range(0..config.signal_vocab);
                words.push(format!("{}{w}", if y == 1 { "pos" } else { "neg" }));
            } else {
                words.push(format!("w{}", rng.gen_range(0..config.neutral_vocab)));
            }
        }
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        let mut inst = Instance::new(id.clone(), words.join(" "), "en").with_split(split);
        let honest_flip = config.honest_noise * (1.0 - clarity);
        for a in 0..config.annotators {
            let flip = match config.adversary {
                Some(adv) if adv.annotator == a => adv.flip_rate,
                _ => honest_flip,
            };
            let label = if rng.gen_bool(flip) { 1 - y } else { y };
            inst.annotations.push(Annotation::label(annotator_name(a), LabelId(label)));
        }
        truth.insert(id.clone(), LabelId(y));
        clarity_of.insert(id, clarity);
        instances.push(inst);
    }
    let dataset = AnnotatedDataset::builder(labels).positive_label(LabelId(1)).instances(instances).build()?;
    Ok(SynthCorpus { dataset, truth, clarity: clarity_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig { n: 50, ..SynthConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().dataset, generate(&other).unwrap().dataset);
    }

    #[test]
    fn shape_matches_config() {
        let cfg = SynthConfig { n: 100, annotators: 3, ..SynthConfig::default() };
        let c = generate(&cfg).unwrap();
        assert_eq!(c.dataset.len(), 100);
        assert_eq!(c.dataset.annotator_range(), Some((3, 3)));
        assert_eq!(c.dataset.split_count(Split::Train), 70);
        assert_eq!(c.dataset.split_count(Split::Dev), 15);
        assert_eq!(c.dataset.split_count(Split::Test), 15);
    }

    #[test]
    fn adversary_flips_at_its_rate() {
        let cfg = SynthConfig {
            n: 4000,
            honest_noise: 0.0,
            adversary: Some(Adversary { annotator: 2, flip_rate: 0.8 }),
            ..SynthConfig::default()
        };
        let c = generate(&cfg).unwrap();
        let flips = c
            .dataset
            .instances()
            .iter()
            .filter(|i| i.annotations[2].as_label() != Some(c.truth[&i.id]))
            .count();
        let rate = flips as f64 / 4000.0;
        assert!((rate - 0.8).abs() < 0.03, "{rate}");
        let honest_ok = c.dataset.instances().iter().all(|i| i.annotations[0].as_label() == Some(c.truth[&i.id]));
        assert!(honest_ok);
    }
}
