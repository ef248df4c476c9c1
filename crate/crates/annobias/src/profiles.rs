//! Annotator profile tables and group embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use annobias_core::metadata::CulturalEmbedding;
use annobias_core::{AnnotatedDataset, AnnotatorProfile};
use serde::Deserialize;

use crate::error::{IngestError, IngestResult};
use crate::io;

/// Reads `annotator_id,dimension,group` rows.
pub fn load_profiles(path: &Path) -> IngestResult<Vec<AnnotatorProfile>> {
    let bytes = io::read(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| IngestError::parse(path, 1, e.to_string()))?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let (Some(a), Some(d), Some(g)) = (column(&["annotator_id", "annotator"]), column(&["dimension"]), column(&["group"]))
    else {
        return Err(IngestError::parse(path, 1, "expected columns annotator_id, dimension, group"));
    };
    let mut profiles: BTreeMap<String, AnnotatorProfile> = BTreeMap::new();
    let mut order = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let get = |c: usize| row.get(c).unwrap_or("");
        let (annotator, dimension, group) = (get(a), get(d), get(g));
        if annotator.is_empty() || dimension.is_empty() || group.is_empty() {
            return Err(IngestError::parse(path, line, "empty field"));
        }
        let profile = profiles.entry(annotator.to_string()).or_insert_with(|| {
            order.push(annotator.to_string());
            AnnotatorProfile::new(annotator)
        });
        if profile.groups.get(dimension).is_some_and(|prev| prev != group) {
            return Err(IngestError::parse(path, line, format!("`{annotator}` has two groups for `{dimension}`")));
        }
        profile.groups.insert(dimension.to_string(), group.to_string());
    }
    if order.is_empty() {
        return Err(IngestError::parse(path, 0, "profile table is empty"));
    }
    Ok(order.into_iter().map(|a| profiles.remove(&a).expect("inserted")).collect())
}

/// Returns `dataset` with `profiles` attached.
pub fn attach(dataset: &AnnotatedDataset, profiles: Vec<AnnotatorProfile>, path: &Path) -> IngestResult<AnnotatedDataset> {
    dataset.to_builder().instances(dataset.instances().iter().cloned()).profiles(profiles).build().map_err(|e| IngestError::invalid(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRow {
    group: String,
    vector: Vec<f64>,
}

/// Reads `[{"group": ..., "vector": [...]}, ...]`.
pub fn load_embeddings(path: &Path) -> IngestResult<BTreeMap<String, CulturalEmbedding>> {
    let bytes = io::read(path)?;
    let rows: Vec<EmbeddingRow> =
        serde_json::from_slice(&bytes).map_err(|e| IngestError::parse(path, e.line(), e.to_string()))?;
    let mut out = BTreeMap::new();
    for row in rows {
        let e = CulturalEmbedding::new(row.vector).map_err(|e| IngestError::invalid(path, e))?;
        if out.insert(row.group.clone(), e).is_some() {
            return Err(IngestError::parse(path, 0, format!("group `{}` appears twice", row.group)));
        }
    }
    Ok(out)
}
