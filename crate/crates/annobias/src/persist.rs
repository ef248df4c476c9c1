//! Single-model files and WEL ensemble directories.
//!
//! An ensemble directory holds `manifest.json` plus one `member-NN.json` per
//! learner. The manifest records seeds, scheme, holdout scores, weights and
//! the SHA-256 of every member file; nothing time-dependent is written, so
//! identical runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use annobias_core::eval::EvalReport;
use annobias_core::learn::{TrainConfig, TrainedPredictor};
use annobias_core::wel::{WelEnsemble, WelPlan, WelSettings};
use annobias_core::LabelSet;
use serde::{Deserialize, Serialize};

use crate::error::{IngestError, IngestResult};
use crate::io;

pub const MODEL_FORMAT: &str = "annobias-model";
pub const ENSEMBLE_FORMAT: &str = "annobias-wel";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub labels: Vec<String>,
    pub config: TrainConfig,
    pub model: TrainedPredictor,
}

impl ModelFile {
    pub fn new(labels: &LabelSet, config: TrainConfig, model: TrainedPredictor) -> Self {
        Self { format: MODEL_FORMAT.into(), version: VERSION, labels: labels.labels().to_vec(), config, model }
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory value serializes");
    bytes.push(b'\n');
    bytes
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> IngestResult<T> {
    let bytes = io::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IngestError::parse(path, e.line(), e.to_string()))
}

pub fn save_model(path: &Path, file: &ModelFile) -> IngestResult<()> {
    io::write_atomic(path, &serde_json::to_vec(file).expect("model serializes"))
}

pub fn load_model(path: &Path) -> IngestResult<ModelFile> {
    let file: ModelFile = from_json(path)?;
    if file.format != MODEL_FORMAT || file.version != VERSION {
        return Err(IngestError::parse(path, 1, format!("not an {MODEL_FORMAT} v{VERSION} file")));
    }
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub file: String,
    pub sha256: String,
    /// 1-based label variant the member was trained on.
    pub variant: usize,
    pub seed: u64,
    pub weight: f64,
    pub holdout: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub labels: Vec<String>,
    pub settings: WelSettings,
    pub dataset_fingerprint: String,
    pub train_size: usize,
    pub holdout_size: usize,
    /// Unannotated training instances skipped by variant sampling.
    pub excluded: usize,
    pub members: Vec<MemberEntry>,
    pub warnings: Vec<String>,
}

pub fn member_file_name(index: usize) -> String {
    format!("member-{index:02}.json")
}

/// Writes members first, then the manifest.
pub fn save_ensemble(dir: &Path, plan: &WelPlan, ensemble: &WelEnsemble, fingerprint: &str) -> IngestResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut members = Vec::with_capacity(ensemble.members.len());
    for (i, member) in ensemble.members.iter().enumerate() {
        let file = member_file_name(i);
        let bytes = serde_json::to_vec(member).expect("member serializes");
        io::write_atomic(&dir.join(&file), &bytes)?;
        members.push(MemberEntry {
            file,
            sha256: io::sha256_hex(&bytes),
            variant: plan.variants[i].index,
            seed: ensemble.member_seeds[i],
            weight: ensemble.weights[i],
            holdout: ensemble.holdout_scores[i],
        });
    }
    let manifest = Manifest {
        format: ENSEMBLE_FORMAT.into(),
        version: VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        labels: ensemble.label_set.labels().to_vec(),
        settings: WelSettings { scheme: ensemble.scheme, ..plan.settings.clone() },
        dataset_fingerprint: fingerprint.into(),
        train_size: plan.split.train.len(),
        holdout_size: plan.split.holdout.len(),
        excluded: plan.excluded,
        members,
        warnings: ensemble.warnings.clone(),
    };
    io::write_atomic(&dir.join(MANIFEST), &to_json(&manifest))?;
    Ok(manifest)
}

pub fn load_ensemble(dir: &Path) -> IngestResult<(Manifest, WelEnsemble)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest = from_json(&manifest_path)?;
    if manifest.format != ENSEMBLE_FORMAT || manifest.version != VERSION {
        return Err(IngestError::parse(&manifest_path, 1, format!("not an {ENSEMBLE_FORMAT} v{VERSION} manifest")));
    }
    let label_set = LabelSet::new(manifest.labels.clone()).map_err(|e| IngestError::invalid(&manifest_path, e))?;
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let path: PathBuf = dir.join(&entry.file);
        let bytes = io::read(&path)?;
        if io::sha256_hex(&bytes) != entry.sha256 {
            return Err(IngestError::parse(&path, 0, "checksum does not match the manifest"));
        }
        let member: TrainedPredictor =
            serde_json::from_slice(&bytes).map_err(|e| IngestError::parse(&path, e.line(), e.to_string()))?;
        members.push(member);
    }
    let weights: Vec<f64> = manifest.members.iter().map(|m| m.weight).collect();
    if !annobias_core::wel::weights_are_valid(&weights) {
        return Err(IngestError::parse(&manifest_path, 0, "member weights are not a convex combination"));
    }
    let ensemble = WelEnsemble {
        label_set,
        members,
        weights,
        scheme: manifest.settings.scheme,
        holdout_scores: manifest.members.iter().map(|m| m.holdout).collect(),
        member_seeds: manifest.members.iter().map(|m| m.seed).collect(),
        master_seed: manifest.settings.master_seed,
        warnings: manifest.warnings.clone(),
    };
    Ok((manifest, ensemble))
}
