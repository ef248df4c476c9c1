//! Dataset file formats and the shared record-to-dataset assembly.

mod csv;
mod jsonl;
mod lewidi;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use annobias_core::text::{self, PreprocessConfig, Speaker};
use annobias_core::{AnnotatedDataset, Annotation, Instance, LabelId, LabelMode, LabelSet, Split};
use serde::{Deserialize, Serialize};

use crate::error::{IngestError, IngestResult};
use crate::io::{self, Fingerprint};
use crate::preset::Preset;

pub use jsonl::{to_jsonl, Header};

/// Language tag used when neither the record nor a preset names one.
pub const UNKNOWN_LANGUAGE: &str = "und";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
    Lewidi,
}

impl Format {
    /// `.jsonl` → canonical, `.csv` → long CSV, `.json` → LeWiDi.
    pub fn detect(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Lewidi),
            _ => None,
        }
    }
}

/// Annotation value before label resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Label(String),
    Score(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub language: Option<String>,
    pub split: Option<Split>,
    pub annotations: Vec<(String, RawValue)>,
    pub turns: Option<Vec<DialogueTurn>>,
    pub iteration: Option<u32>,
    pub meta: Option<serde_json::Value>,
    /// Index into the loaded source files.
    pub source: usize,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub text: String,
}

/// Record fields the analytics do not use but serialization keeps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extras {
    pub turns: Option<Vec<DialogueTurn>>,
    pub meta: Option<serde_json::Value>,
}

impl Extras {
    fn is_empty(&self) -> bool {
        self.turns.is_none() && self.meta.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Preprocessing {
    /// The preset's steps, or none without a preset.
    #[default]
    Auto,
    Off,
    Custom(PreprocessConfig),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub format: Option<Format>,
    pub preset: Option<&'static Preset>,
    pub preprocessing: Preprocessing,
}

impl LoadOptions {
    fn preprocess_config(&self) -> Option<PreprocessConfig> {
        match self.preprocessing {
            Preprocessing::Auto => self.preset.map(|p| p.preprocess),
            Preprocessing::Off => None,
            Preprocessing::Custom(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: AnnotatedDataset,
    pub extras: BTreeMap<String, Extras>,
    /// `sha256:` digest over the raw bytes of every source, in order.
    pub fingerprint: String,
    pub sources: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Parsed file contents before assembly.
pub(crate) struct Parsed {
    pub header: Option<Header>,
    pub records: Vec<RawRecord>,
}

/// Loads and concatenates `paths`, all in one format.
pub fn load(paths: &[PathBuf], options: &LoadOptions) -> IngestResult<LoadedDataset> {
    let first = paths.first().ok_or_else(|| IngestError::parse(Path::new("-"), 0, "no input files"))?;
    let format = match options.format {
        Some(f) => f,
        None => Format::detect(first)
            .ok_or_else(|| IngestError::parse(first, 0, "cannot tell the format from the extension; pass --format"))?,
    };
    let mut fingerprint = Fingerprint::new();
    let mut header = None;
    let mut records = Vec::new();
    for (source, path) in paths.iter().enumerate() {
        let bytes = io::read(path)?;
        fingerprint.update(&bytes);
        let content = String::from_utf8(bytes).map_err(|e| IngestError::parse(path, 0, format!("not UTF-8: {e}")))?;
        let parsed = match format {
            Format::Jsonl => jsonl::parse(&content, path, source)?,
            Format::Csv => csv::parse(&content, path, source)?,
            Format::Lewidi => lewidi::parse(&content, path, source)?,
        };
        if parsed.records.is_empty() {
            return Err(IngestError::parse(path, 0, "file holds no records"));
        }
        if let Some(h) = parsed.header {
            if header.as_ref().is_some_and(|prev| *prev != h) {
                return Err(IngestError::parse(path, 1, "header disagrees with an earlier file"));
            }
            header = Some(h);
        }
        records.extend(parsed.records);
    }
    if format == Format::Csv {
        let distinct: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| &r.annotations)
            .filter_map(|(_, v)| match v {
                RawValue::Label(l) => Some(l.as_str()),
                RawValue::Score(_) => None,
            })
            .collect();
        if distinct.len() > 2 && options.preset.is_none_or(|p| !p.scored) {
            return Err(IngestError::parse(first, 0, "csv input supports binary tasks only"));
        }
    }
    let (dataset, extras, warnings) = assemble(records, header, options, paths)?;
    Ok(LoadedDataset { dataset, extras, fingerprint: fingerprint.finish(), sources: paths.to_vec(), warnings })
}

/// Reads one annotation token against `labels`: a label name, else a
/// 0-based label index. Scored presets read numeric tokens as scores
/// instead.
fn resolve_label(labels: &LabelSet, token: &str) -> Option<LabelId> {
    labels.id_of(token).ok().or_else(|| token.parse::<usize>().ok().filter(|&i| i < labels.len()).map(LabelId))
}

fn assemble(
    records: Vec<RawRecord>,
    header: Option<Header>,
    options: &LoadOptions,
    paths: &[PathBuf],
) -> IngestResult<(AnnotatedDataset, BTreeMap<String, Extras>, Vec<String>)> {
    let path_of = |r: &RawRecord| paths[r.source].as_path();
    let scored = options.preset.is_some_and(|p| p.scored);
    let has_score = records.iter().any(|r| r.annotations.iter().any(|(_, v)| matches!(v, RawValue::Score(_))));
    let has_label = records.iter().any(|r| r.annotations.iter().any(|(_, v)| matches!(v, RawValue::Label(_))));
    let mode = match header.as_ref().map(|h| h.label_mode) {
        Some(m) => m,
        None if has_score && !scored => LabelMode::Numeric,
        None => LabelMode::Categorical,
    };
    if mode == LabelMode::Numeric && has_label {
        let r = records.iter().find(|r| r.annotations.iter().any(|(_, v)| matches!(v, RawValue::Label(_)))).unwrap();
        return Err(IngestError::parse(path_of(r), r.line, "label annotation in a numeric dataset"));
    }

    let label_names: Vec<String> = if let Some(h) = &header {
        h.labels.clone()
    } else if let Some(p) = options.preset {
        p.labels.iter().map(|s| s.to_string()).collect()
    } else if mode == LabelMode::Numeric {
        vec!["negative".into(), "positive".into()]
    } else {
        let distinct: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| &r.annotations)
            .filter_map(|(_, v)| match v {
                RawValue::Label(l) => Some(l.as_str()),
                RawValue::Score(_) => None,
            })
            .collect();
        distinct.into_iter().map(String::from).collect()
    };
    let label_set = LabelSet::new(label_names).map_err(|e| IngestError::invalid(&paths[0], e))?;
    let positive = match (&header, options.preset) {
        (Some(h), _) => match &h.positive {
            Some(name) => Some(label_set.id_of(name).map_err(|e| IngestError::invalid(&paths[0], e))?),
            None => None,
        },
        (None, Some(_)) => Some(LabelId(1)),
        (None, None) => None,
    };

    let preprocess = options.preprocess_config();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut instances = Vec::with_capacity(records.len());
    let mut extras = BTreeMap::new();
    let mut iterative = header.as_ref().and_then(|h| h.iterative);
    for r in records {
        let path = path_of(&r).to_path_buf();
        if !seen.insert(r.id.clone()) {
            return Err(IngestError::DuplicateId { path, line: r.line, id: r.id });
        }
        let iterative_here = r.iteration.is_some();
        match iterative {
            None => iterative = Some(iterative_here),
            Some(it) if it != iterative_here => {
                return Err(IngestError::parse(&path, r.line, "iteration must be set on every record or none"));
            }
            _ => {}
        }
        let clean = |t: &str| match &preprocess {
            Some(cfg) => text::preprocess(t, cfg),
            None => t.to_string(),
        };
        // Dialogue text is always rebuilt from its turns, each cleaned on
        // its own so the separators survive.
        let turns: Option<Vec<DialogueTurn>> =
            r.turns.as_ref().map(|ts| ts.iter().map(|t| DialogueTurn { speaker: t.speaker, text: clean(&t.text) }).collect());
        let text = match &turns {
            Some(ts) => {
                let pairs: Vec<(Speaker, &str)> = ts.iter().map(|t| (t.speaker, t.text.as_str())).collect();
                text::flatten_dialogue(&pairs).map_err(|e| IngestError::invalid(&path, e))?
            }
            None => clean(&r.text),
        };
        let language = r
            .language
            .clone()
            .or_else(|| options.preset.map(|p| p.language.to_string()))
            .unwrap_or_else(|| UNKNOWN_LANGUAGE.into());
        let mut inst = Instance::new(r.id.clone(), text, language);
        inst.split = r.split;
        inst.iteration = r.iteration;
        let mut annotators = BTreeSet::new();
        for (annotator, value) in &r.annotations {
            if !annotators.insert(annotator.as_str()) {
                return Err(IngestError::parse(&path, r.line, format!("annotator `{annotator}` appears twice")));
            }
            let annotation = match (mode, value) {
                (LabelMode::Numeric, RawValue::Score(s)) => Annotation::score(annotator.clone(), *s),
                (LabelMode::Numeric, RawValue::Label(_)) => unreachable!("rejected above"),
                (LabelMode::Categorical, RawValue::Label(token)) => {
                    let by_name = label_set.id_of(token).ok();
                    let id = match by_name {
                        Some(id) => id,
                        None if scored => convabuse_label(&label_set, token.parse().ok(), &path, r.line, token)?,
                        None => match resolve_label(&label_set, token) {
                            Some(id) => id,
                            None => {
                                return Err(IngestError::parse(&path, r.line, format!("unknown label `{token}`")));
                            }
                        },
                    };
                    Annotation::label(annotator.clone(), id)
                }
                (LabelMode::Categorical, RawValue::Score(s)) if scored => {
                    Annotation::label(annotator.clone(), convabuse_label(&label_set, Some(*s), &path, r.line, "")?)
                }
                (LabelMode::Categorical, RawValue::Score(_)) => {
                    return Err(IngestError::parse(&path, r.line, "score annotation in a categorical dataset"));
                }
            };
            inst.annotations.push(annotation);
        }
        let extra = Extras { turns, meta: r.meta };
        if !extra.is_empty() {
            extras.insert(r.id.clone(), extra);
        }
        instances.push(inst);
    }
    let mut builder =
        AnnotatedDataset::builder(label_set).mode(mode).iterative(iterative.unwrap_or(false)).instances(instances);
    if let Some(p) = positive {
        builder = builder.positive_label(p);
    }
    let dataset = builder.build().map_err(|e| IngestError::invalid(&paths[0], e))?;
    let mut warnings = Vec::new();
    let unannotated = dataset.unannotated_count();
    if unannotated > 0 {
        warnings.push(format!("{unannotated} instance(s) carry no annotations and are excluded from every metric"));
    }
    Ok((dataset, extras, warnings))
}

fn convabuse_label(labels: &LabelSet, score: Option<f64>, path: &Path, line: usize, token: &str) -> IngestResult<LabelId> {
    let score = score.ok_or_else(|| IngestError::parse(path, line, format!("`{token}` is neither a label nor a score")))?;
    let label = text::binarize_convabuse(score).map_err(|e| IngestError::parse(path, line, e.to_string()))?;
    labels.id_of(label.as_str()).map_err(|e| IngestError::invalid(path, e))
}

/// Parses a split tag, mapping failures to `UnknownSplit`.
pub(crate) fn parse_split(tag: &str, path: &Path, line: usize) -> IngestResult<Split> {
    Split::parse(tag).ok_or_else(|| IngestError::UnknownSplit { path: path.to_path_buf(), line, split: tag.into() })
}

/// Counts per split tag, plus `untagged`.
pub fn split_counts(dataset: &AnnotatedDataset) -> BTreeMap<&'static str, usize> {
    let mut counts: BTreeMap<&'static str, usize> = Split::ALL.iter().map(|s| (s.as_str(), 0)).collect();
    counts.insert("untagged", 0);
    for inst in dataset.instances() {
        *counts.entry(inst.split.map_or("untagged", Split::as_str)).or_default() += 1;
    }
    counts
}
