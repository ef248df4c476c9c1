//! Machine-readable run reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TOOL: &str = "annobias";
pub const SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub invocation: Vec<String>,
    pub dataset_fingerprint: Option<String>,
    pub blocks: BTreeMap<String, Value>,
    /// Instances or items left out, per block.
    pub exclusions: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: impl Into<String>, invocation: Vec<String>) -> Self {
        Self {
            tool: TOOL.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            invocation,
            dataset_fingerprint: None,
            blocks: BTreeMap::new(),
            exclusions: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn block(&mut self, name: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("block serializes");
        if value.get("degenerate") == Some(&Value::Bool(true)) {
            self.warn(format!("{name}: chance term is degenerate; coefficient reported as 1.0"));
        }
        self.blocks.insert(name.into(), value);
    }

    pub fn exclude(&mut self, name: &str, count: usize) {
        self.exclusions.insert(name.into(), count);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Block left out of a combined run, with the reason.
    pub fn skip(&mut self, name: &str, reason: impl std::fmt::Display) {
        let reason = reason.to_string();
        self.warn(format!("{name} skipped: {reason}"));
        self.blocks.insert(name.into(), serde_json::json!({ "skipped": reason }));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
