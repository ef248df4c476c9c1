//! Prediction files: one `{instance_id, model_id, probs}` object per line.

use std::path::Path;

use annobias_core::divergence::PredictionSet;
use annobias_core::SoftLabel;
use serde::{Deserialize, Serialize};

use crate::error::{IngestError, IngestResult};
use crate::io;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    instance_id: String,
    model_id: String,
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
}

pub fn parse_predictions(content: &str, path: &Path) -> IngestResult<PredictionSet> {
    let mut set: Option<PredictionSet> = None;
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: PredictionLine = serde_json::from_str(raw).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
        let probs = SoftLabel::new(row.probs).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
        let set = set.get_or_insert_with(|| {
            let mut s = PredictionSet::new(row.model_id.clone());
            s.language = row.lang.clone();
            s
        });
        if set.model_id != row.model_id {
            return Err(IngestError::parse(path, line, format!("model `{}` in a file for `{}`", row.model_id, set.model_id)));
        }
        if set.get(&row.instance_id).is_some() {
            return Err(IngestError::DuplicateId { path: path.to_path_buf(), line, id: row.instance_id });
        }
        set.insert(row.instance_id, probs);
    }
    let set = set.ok_or_else(|| IngestError::parse(path, 0, "file holds no predictions"))?;
    set.width().map_err(|e| IngestError::invalid(path, e))?;
    Ok(set)
}

pub fn load_predictions(path: &Path) -> IngestResult<PredictionSet> {
    let bytes = io::read(path)?;
    let content = String::from_utf8(bytes).map_err(|e| IngestError::parse(path, 0, format!("not UTF-8: {e}")))?;
    parse_predictions(&content, path)
}

/// Lines in instance-id order.
pub fn to_jsonl(set: &PredictionSet) -> String {
    let mut out = String::new();
    for (id, probs) in &set.outputs {
        let row = PredictionLine {
            instance_id: id.clone(),
            model_id: set.model_id.clone(),
            probs: probs.probs().to_vec(),
            lang: set.language.clone(),
        };
        out.push_str(&serde_json::to_string(&row).expect("prediction serializes"));
        out.push('\n');
    }
    out
}
