//! LeWiDi shared-task JSON: one object keyed by instance id.
//!
//! Each record carries `text`, comma-separated `annotators` and
//! `annotations`, and optionally `lang` and `split`. Without `split` the
//! file name decides (`*train*`, `*dev*`, `*test*`). Dialogue text arrives as
//! an object with `prev_agent`, `prev_user`, `agent` and `user` turns.

use std::path::Path;

use annobias_core::text::Speaker;
use annobias_core::Split;
use serde_json::Value;

use super::{parse_split, DialogueTurn, Parsed, RawRecord, RawValue};
use crate::error::{IngestError, IngestResult};

const DIALOGUE_KEYS: [(&str, Speaker); 4] = [
    ("prev_agent", Speaker::Agent),
    ("prev_user", Speaker::User),
    ("agent", Speaker::Agent),
    ("user", Speaker::User),
];

/// Split implied by a file name such as `ArMIS_dev.json`.
pub fn split_from_file_name(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
    [("train", Split::Train), ("dev", Split::Dev), ("val", Split::Dev), ("test", Split::Test)]
        .into_iter()
        .find(|(tag, _)| stem.contains(tag))
        .map(|(_, s)| s)
}

fn line_of(content: &str, id: &str) -> usize {
    let needle = format!("{}:", Value::String(id.into()));
    let at = content.find(&needle).or_else(|| content.find(&format!("\"{id}\""))).unwrap_or(0);
    content[..at].matches('\n').count() + 1
}

fn tokens(value: Option<&Value>) -> Option<Vec<String>> {
    match value? {
        Value::String(s) if s.trim().is_empty() => Some(Vec::new()),
        Value::String(s) => Some(s.split(',').map(|t| t.trim().to_string()).collect()),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Some(s.trim().to_string()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
        Value::Null => Some(Vec::new()),
        _ => None,
    }
}

pub(crate) fn parse(content: &str, path: &Path, source: usize) -> IngestResult<Parsed> {
    if content.trim().is_empty() {
        return Ok(Parsed { header: None, records: Vec::new() });
    }
    let root: serde_json::Map<String, Value> =
        serde_json::from_str(content).map_err(|e| IngestError::parse(path, e.line(), e.to_string()))?;
    let file_split = split_from_file_name(path);
    let mut records = Vec::with_capacity(root.len());
    for (id, value) in root {
        let line = line_of(content, &id);
        let bad = |m: &str| IngestError::parse(path, line, format!("record `{id}`: {m}"));
        let obj = value.as_object().ok_or_else(|| bad("not an object"))?;
        let (text, turns) = match obj.get("text") {
            Some(Value::String(s)) => (s.clone(), None),
            Some(Value::Object(parts)) => {
                if let Some(k) = parts.keys().find(|k| !DIALOGUE_KEYS.iter().any(|(d, _)| d == k)) {
                    return Err(bad(&format!("unknown dialogue field `{k}`")));
                }
                let turns: Vec<DialogueTurn> = DIALOGUE_KEYS
                    .iter()
                    .filter_map(|(key, speaker)| match parts.get(*key) {
                        Some(Value::String(t)) if !t.trim().is_empty() => {
                            Some(DialogueTurn { speaker: *speaker, text: t.clone() })
                        }
                        _ => None,
                    })
                    .collect();
                (String::new(), Some(turns))
            }
            _ => return Err(bad("missing `text`")),
        };
        let annotators = tokens(obj.get("annotators")).ok_or_else(|| bad("missing or malformed `annotators`"))?;
        let labels = tokens(obj.get("annotations")).ok_or_else(|| bad("missing or malformed `annotations`"))?;
        if annotators.len() != labels.len() {
            return Err(bad(&format!("{} annotators but {} annotations", annotators.len(), labels.len())));
        }
        let split = match obj.get("split") {
            Some(Value::String(s)) => Some(parse_split(s, path, line)?),
            Some(_) => return Err(bad("`split` must be a string")),
            None => file_split,
        };
        let language = match obj.get("lang") {
            Some(Value::String(s)) => Some(s.clone()),
            _ => None,
        };
        records.push(RawRecord {
            id,
            text,
            language,
            split,
            annotations: annotators.into_iter().zip(labels.into_iter().map(RawValue::Label)).collect(),
            turns,
            iteration: None,
            meta: None,
            source,
            line,
        });
    }
    Ok(Parsed { header: None, records })
}
