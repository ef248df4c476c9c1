//! Canonical JSON Lines: an optional header line, then one record per line.

use std::collections::BTreeMap;
use std::path::Path;

use annobias_core::{AnnotatedDataset, AnnotationValue, LabelMode};
use serde::{Deserialize, Serialize};

use super::{parse_split, DialogueTurn, Extras, Parsed, RawRecord, RawValue};
use crate::error::{IngestError, IngestResult};

pub const HEADER_TAG: &str = "dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub annobias: String,
    pub version: u32,
    pub labels: Vec<String>,
    #[serde(default)]
    pub label_mode: LabelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterative: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LabelToken {
    Name(String),
    Index(u64),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordAnnotation {
    annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<LabelToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default)]
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    #[serde(default)]
    annotations: Vec<RecordAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turns: Option<Vec<DialogueTurn>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iteration: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

pub(crate) fn parse(content: &str, path: &Path, source: usize) -> IngestResult<Parsed> {
    let mut header = None;
    let mut records = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
        if value.get("annobias").is_some() {
            if header.is_some() || !records.is_empty() {
                return Err(IngestError::parse(path, line, "header must be the first line"));
            }
            let h: Header = serde_json::from_value(value).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
            if h.annobias != HEADER_TAG || h.version != FORMAT_VERSION {
                return Err(IngestError::parse(path, line, format!("unsupported header {}/{}", h.annobias, h.version)));
            }
            header = Some(h);
            continue;
        }
        let rec: Record = serde_json::from_value(value).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
        if rec.id.is_empty() {
            return Err(IngestError::parse(path, line, "empty id"));
        }
        let split = rec.split.as_deref().map(|s| parse_split(s, path, line)).transpose()?;
        let annotations = rec
            .annotations
            .into_iter()
            .map(|a| {
                let value = match (a.label, a.score) {
                    (Some(LabelToken::Name(l)), None) => RawValue::Label(l),
                    (Some(LabelToken::Index(i)), None) => RawValue::Label(i.to_string()),
                    (None, Some(s)) if s.is_finite() => RawValue::Score(s),
                    _ => return Err(IngestError::parse(path, line, "annotation needs exactly one of label or score")),
                };
                Ok((a.annotator, value))
            })
            .collect::<IngestResult<Vec<_>>>()?;
        records.push(RawRecord {
            id: rec.id,
            text: rec.text,
            language: rec.lang,
            split,
            annotations,
            turns: rec.turns,
            iteration: rec.iteration,
            meta: rec.meta,
            source,
            line,
        });
    }
    Ok(Parsed { header, records })
}

/// Canonical serialization: header line, then records in dataset order.
pub fn to_jsonl(dataset: &AnnotatedDataset, extras: &BTreeMap<String, Extras>) -> String {
    let labels = dataset.label_set();
    let header = Header {
        annobias: HEADER_TAG.into(),
        version: FORMAT_VERSION,
        labels: labels.labels().to_vec(),
        label_mode: dataset.mode(),
        positive: dataset.positive_label().and_then(|p| labels.name(p).ok()).map(String::from),
        iterative: Some(dataset.is_iterative()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for inst in dataset.instances() {
        let extra = extras.get(&inst.id);
        let rec = Record {
            id: inst.id.clone(),
            text: inst.text.clone(),
            lang: Some(inst.language.clone()),
            split: inst.split.map(|s| s.as_str().into()),
            annotations: inst
                .annotations
                .iter()
                .map(|a| match a.value {
                    AnnotationValue::Label(l) => RecordAnnotation {
                        annotator: a.annotator.clone(),
                        label: Some(LabelToken::Name(labels.name(l).expect("validated label").into())),
                        score: None,
                    },
                    AnnotationValue::Score(s) => {
                        RecordAnnotation { annotator: a.annotator.clone(), label: None, score: Some(s) }
                    }
                })
                .collect(),
            turns: extra.and_then(|e| e.turns.clone()),
            iteration: inst.iteration,
            meta: extra.and_then(|e| e.meta.clone()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}
