//! Long-format CSV for binary tasks: one row per (instance, annotator).
//!
//! Columns: `id,text,lang,split,annotator,label`; `lang` and `split` are
//! optional. A row with empty `annotator` and `label` declares an
//! unannotated instance.

use std::collections::BTreeMap;
use std::path::Path;

use super::{parse_split, Parsed, RawRecord, RawValue};
use crate::error::{IngestError, IngestResult};

pub(crate) fn parse(content: &str, path: &Path, source: usize) -> IngestResult<Parsed> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(content.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::parse(path, 1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| IngestError::parse(path, 1, format!("missing column `{name}`")));
    let (id_col, text_col, ann_col, label_col) = (required("id")?, required("text")?, required("annotator")?, required("label")?);
    let (lang_col, split_col) = (column("lang"), column("split"));

    let mut records: Vec<RawRecord> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            IngestError::parse(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| row.get(c).unwrap_or("");
        let opt = |c: Option<usize>| c.map(field).filter(|s| !s.is_empty());
        let id = field(id_col);
        if id.is_empty() {
            return Err(IngestError::parse(path, line, "empty id"));
        }
        let split = opt(split_col).map(|s| parse_split(s, path, line)).transpose()?;
        let lang = opt(lang_col).map(String::from);
        let slot = match index.get(id) {
            Some(&i) => {
                let r = &records[i];
                if r.text != field(text_col) || r.split != split || r.language != lang {
                    return Err(IngestError::parse(path, line, format!("rows for `{id}` disagree on text, lang or split")));
                }
                i
            }
            None => {
                index.insert(id.to_string(), records.len());
                records.push(RawRecord {
                    id: id.to_string(),
                    text: field(text_col).to_string(),
                    language: lang,
                    split,
                    annotations: Vec::new(),
                    turns: None,
                    iteration: None,
                    meta: None,
                    source,
                    line,
                });
                records.len() - 1
            }
        };
        match (field(ann_col), field(label_col)) {
            ("", "") => {}
            ("", _) | (_, "") => return Err(IngestError::parse(path, line, "annotator and label must both be set or both empty")),
            (a, l) => records[slot].annotations.push((a.to_string(), RawValue::Label(l.to_string()))),
        }
    }
    Ok(Parsed { header: None, records })
}
