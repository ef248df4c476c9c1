//! Per-corpus label sets, preprocessing and published split statistics.

use annobias_core::text::{AbuseLabel, PreprocessConfig};
use serde::Serialize;

/// Split sizes and annotator counts a full copy of the corpus should show.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Expected {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub total_annotators: usize,
    pub per_instance: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub language: &'static str,
    /// Negative label first; index 1 is the positive class.
    pub labels: [&'static str; 2],
    pub preprocess: PreprocessConfig,
    /// Annotations are five-point abuse scores to binarize.
    pub scored: bool,
    pub expected: Expected,
}

const ENGLISH: PreprocessConfig = PreprocessConfig::ALL;

const ARABIC: PreprocessConfig = PreprocessConfig { strip_non_ascii: false, ..PreprocessConfig::ALL };

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "armis",
        language: "ar",
        labels: ["not-misogynous", "misogynous"],
        preprocess: ARABIC,
        scored: false,
        expected: Expected { train: 657, dev: 141, test: 145, total_annotators: 3, per_instance: (3, 3) },
    },
    Preset {
        name: "convabuse",
        language: "en",
        labels: AbuseLabel::NAMES,
        preprocess: ENGLISH,
        scored: true,
        expected: Expected { train: 2398, dev: 812, test: 840, total_annotators: 8, per_instance: (2, 7) },
    },
    Preset {
        name: "hsbrexit",
        language: "en",
        labels: ["not-hateful", "hateful"],
        preprocess: ENGLISH,
        scored: false,
        expected: Expected { train: 784, dev: 168, test: 168, total_annotators: 6, per_instance: (6, 6) },
    },
    Preset {
        name: "mdagreement",
        language: "en",
        labels: ["not-offensive", "offensive"],
        preprocess: ENGLISH,
        scored: false,
        expected: Expected { train: 6592, dev: 1104, test: 3057, total_annotators: 670, per_instance: (5, 5) },
    },
];

impl Preset {
    pub fn by_name(name: &str) -> Option<&'static Preset> {
        PRESETS.iter().find(|p| p.name == name)
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|p| p.name)
    }
}
