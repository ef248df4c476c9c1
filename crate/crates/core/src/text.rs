//! Text normalization and the task adaptations applied at ingestion.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Toggles for [`preprocess`]. Steps always run in field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub strip_html: bool,
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub strip_punctuation: bool,
    pub strip_digits: bool,
    /// Off by default: it would erase non-Latin scripts entirely.
    pub strip_non_ascii: bool,
    pub collapse_whitespace: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            strip_html: true,
            strip_urls: true,
            strip_mentions: true,
            strip_punctuation: true,
            strip_digits: true,
            strip_non_ascii: false,
            collapse_whitespace: true,
        }
    }
}

impl PreprocessConfig {
    pub const NONE: PreprocessConfig = PreprocessConfig {
        strip_html: false,
        strip_urls: false,
        strip_mentions: false,
        strip_punctuation: false,
        strip_digits: false,
        strip_non_ascii: false,
        collapse_whitespace: false,
    };

    /// Every step on, including non-ASCII removal.
    pub const ALL: PreprocessConfig = PreprocessConfig {
        strip_html: true,
        strip_urls: true,
        strip_mentions: true,
        strip_punctuation: true,
        strip_digits: true,
        strip_non_ascii: true,
        collapse_whitespace: true,
    };
}

/// Applies the enabled steps in order, repeating the pass until the text
/// stops changing.
///
/// A later step can expose a pattern an earlier one removes (dropping a
/// digit can turn `www1.x` into a URL), so a single pass is not idempotent.
/// Every changing pass shortens the text or turns a non-space character into
/// a space, so the loop terminates.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> String {
    let mut current = String::from(text);
    loop {
        let next = preprocess_pass(&current, config);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn preprocess_pass(text: &str, c: &PreprocessConfig) -> String {
    let mut s = String::from(text);
    if c.strip_html {
        s = strip_html(&s);
    }
    if c.strip_urls {
        s = drop_tokens(&s, is_url);
    }
    if c.strip_mentions {
        s = drop_tokens(&s, is_mention);
    }
    if c.strip_punctuation {
        s.retain(|ch| !is_punctuation(ch));
    }
    if c.strip_digits {
        s.retain(|ch| !ch.is_numeric());
    }
    if c.strip_non_ascii {
        s.retain(|ch| ch.is_ascii());
    }
    if c.collapse_whitespace {
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    s
}

/// Replaces `<tag ...>` spans and `&entity;` references with a space.
fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(ch) = rest.chars().next() {
        if let Some(len) = tag_len(rest).or_else(|| entity_len(rest)) {
            out.push(' ');
            rest = &rest[len..];
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

fn tag_len(s: &str) -> Option<usize> {
    let mut chars = s.chars();
    if chars.next()? != '<' {
        return None;
    }
    let first = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '/' || first == '!') {
        return None;
    }
    let close = s[1..].find(['>', '<'])? + 1;
    (s.as_bytes()[close] == b'>').then_some(close + 1)
}

fn entity_len(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'&') {
        return None;
    }
    let body = bytes[1..].iter().take_while(|b| b.is_ascii_alphanumeric() || **b == b'#').count();
    ((1..=10).contains(&body) && bytes.get(1 + body) == Some(&b';')).then_some(body + 2)
}

fn is_url(token: &str) -> bool {
    let lower = token.as_bytes();
    let starts = |p: &str| lower.len() > p.len() && lower[..p.len()].eq_ignore_ascii_case(p.as_bytes());
    starts("http://") || starts("https://") || starts("www.")
}

fn is_mention(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next() == Some('@') && chars.next().is_some_and(|c| c.is_alphanumeric() || c == '_')
}

/// Removes whitespace-delimited tokens matching `drop`, together with the
/// whitespace run that follows them (or precedes them at the end of the
/// text), so neighbouring words stay separated by the original gap.
fn drop_tokens(s: &str, drop: fn(&str) -> bool) -> String {
    // Pieces alternate: (is_space, text).
    let mut pieces: Vec<(bool, &str)> = Vec::new();
    let mut start = 0;
    let mut in_space = None;
    for (i, ch) in s.char_indices() {
        let space = ch.is_whitespace();
        if in_space.is_some_and(|w| w != space) {
            pieces.push((in_space.unwrap(), &s[start..i]));
            start = i;
        }
        in_space = Some(space);
    }
    if let Some(w) = in_space {
        pieces.push((w, &s[start..]));
    }
    let mut keep = alloc::vec![true; pieces.len()];
    for i in 0..pieces.len() {
        let (space, text) = pieces[i];
        if space || !drop(text) {
            continue;
        }
        keep[i] = false;
        if i + 1 < pieces.len() {
            keep[i + 1] = false;
        } else if i > 0 {
            keep[i - 1] = false;
        }
    }
    pieces.iter().zip(keep).filter(|(_, k)| *k).map(|((_, t), _)| *t).collect()
}

/// ASCII punctuation and symbols plus the common Unicode punctuation blocks
/// (general punctuation, CJK, Arabic, fullwidth forms).
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(c as u32,
        0x00A1..=0x00BF
        | 0x00D7 | 0x00F7
        | 0x2010..=0x205E
        | 0x3000..=0x303F
        | 0xFE10..=0xFE6F
        | 0xFF01..=0xFF0F | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65
        | 0x060C | 0x061B | 0x061E | 0x061F | 0x066A..=0x066D | 0x06D4)
}

/// Binary label derived from a five-point abuse score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbuseLabel {
    Offensive,
    NonOffensive,
}

impl AbuseLabel {
    pub const NAMES: [&'static str; 2] = ["non-offensive", "offensive"];

    pub fn as_str(self) -> &'static str {
        match self {
            AbuseLabel::Offensive => "offensive",
            AbuseLabel::NonOffensive => "non-offensive",
        }
    }
}

/// Scores run from -3 (highly abusive) to 1 (non-abusive); negative means
/// offensive.
pub fn binarize_convabuse(score: f64) -> Result<AbuseLabel> {
    if !(-3.0..=1.0).contains(&score) || libm::trunc(score) != score {
        return Err(Error::ScoreOutOfRange(score));
    }
    Ok(if score < 0.0 { AbuseLabel::Offensive } else { AbuseLabel::NonOffensive })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

impl Speaker {
    pub fn prefix(self) -> &'static str {
        match self {
            Speaker::User => "user:",
            Speaker::Agent => "agent:",
        }
    }
}

/// Separator placed between flattened turns.
pub const TURN_SEPARATOR: &str = " [SEP] ";

/// Joins turns as `user: <text> [SEP] agent: <text> ...`.
pub fn flatten_dialogue<S: AsRef<str>>(turns: &[(Speaker, S)]) -> Result<String> {
    if turns.is_empty() {
        return Err(Error::EmptyDialogue);
    }
    let mut out = String::new();
    for (i, (speaker, text)) in turns.iter().enumerate() {
        if i > 0 {
            out.push_str(TURN_SEPARATOR);
        }
        out.push_str(speaker.prefix());
        out.push(' ');
        out.push_str(text.as_ref().trim());
    }
    Ok(out)
}
