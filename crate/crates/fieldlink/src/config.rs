//! Plain-text configuration format shared by preset, plan and mission files.
//!
//! The format is line oriented: `[section name]` headers followed by
//! `key = value` pairs. `#` starts a comment, blank lines are ignored.
//! Section headers may carry an argument after the first word, e.g.
//! `[location P.R.L.]` has kind `location` and argument `P.R.L.`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: key/value pair before any [section] header")]
    OrphanEntry { line: usize },
    #[error("section `{section}`: {}", describe_schema(missing, problems))]
    Schema {
        section: String,
        missing: Vec<String>,
        problems: Vec<String>,
    },
    #[error("missing required section `{0}`")]
    MissingSection(String),
    #[error("duplicate section `{0}`")]
    DuplicateSection(String),
}

fn describe_schema(missing: &[String], problems: &[String]) -> String {
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing required key(s): {}", missing.join(", ")));
    }
    if !problems.is_empty() {
        parts.push(format!("invalid value(s): {}", problems.join("; ")));
    }
    parts.join("; ")
}

/// One `[header]` block and its key/value entries.
#[derive(Debug, Clone)]
pub struct Section {
    /// First word of the header, lowercased for kinds like `location`.
    pub kind: String,
    /// Remainder of the header after the first word, verbatim (may be empty).
    pub arg: String,
    pub line: usize,
    entries: Vec<(String, String, usize)>,
}

impl Section {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    /// Full header text as written, e.g. `location P.R.L.`.
    pub fn header(&self) -> String {
        if self.arg.is_empty() {
            self.kind.clone()
        } else {
            format!("{} {}", self.kind, self.arg)
        }
    }

    /// Typed accessor bundle that accumulates schema problems instead of
    /// failing on the first one, so errors can list every offending key.
    pub fn reader(&self) -> SectionReader<'_> {
        SectionReader {
            section: self,
            missing: Vec::new(),
            problems: Vec::new(),
        }
    }
}

/// Accumulates missing keys and parse failures while reading a section.
pub struct SectionReader<'a> {
    section: &'a Section,
    missing: Vec<String>,
    problems: Vec<String>,
}

impl<'a> SectionReader<'a> {
    pub fn require<T: FromConfigValue>(&mut self, key: &str) -> Option<T> {
        match self.section.raw(key) {
            None => {
                self.missing.push(key.to_string());
                None
            }
            Some(v) => self.parse_value(key, v),
        }
    }

    pub fn optional<T: FromConfigValue>(&mut self, key: &str, default: T) -> T {
        match self.section.raw(key) {
            None => default,
            Some(v) => self.parse_value(key, v).unwrap_or(default),
        }
    }

    pub fn optional_str(&mut self, key: &str, default: &str) -> String {
        self.section
            .raw(key)
            .map(str::to_string)
            .unwrap_or_else(|| default.to_string())
    }

    fn parse_value<T: FromConfigValue>(&mut self, key: &str, v: &str) -> Option<T> {
        match T::from_config_value(v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.problems.push(format!("{key} = {v} ({e})"));
                None
            }
        }
    }

    pub fn note_problem(&mut self, text: impl fmt::Display) {
        self.problems.push(text.to_string());
    }

    /// Resolves to an error naming every missing/invalid key at once.
    pub fn finish(self) -> Result<(), ConfigError> {
        if self.missing.is_empty() && self.problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Schema {
                section: self.section.header(),
                missing: self.missing,
                problems: self.problems,
            })
        }
    }
}

pub trait FromConfigValue: Sized {
    fn from_config_value(v: &str) -> Result<Self, String>;
}

impl FromConfigValue for f64 {
    fn from_config_value(v: &str) -> Result<Self, String> {
        v.parse::<f64>().map_err(|_| "not a number".to_string())
    }
}

impl FromConfigValue for u64 {
    fn from_config_value(v: &str) -> Result<Self, String> {
        v.parse::<u64>().map_err(|_| "not an integer".to_string())
    }
}

impl FromConfigValue for u32 {
    fn from_config_value(v: &str) -> Result<Self, String> {
        v.parse::<u32>().map_err(|_| "not an integer".to_string())
    }
}

impl FromConfigValue for usize {
    fn from_config_value(v: &str) -> Result<Self, String> {
        v.parse::<usize>().map_err(|_| "not an integer".to_string())
    }
}

impl FromConfigValue for String {
    fn from_config_value(v: &str) -> Result<Self, String> {
        Ok(v.to_string())
    }
}

/// Comma-separated list of names.
impl FromConfigValue for Vec<String> {
    fn from_config_value(v: &str) -> Result<Self, String> {
        Ok(v.split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect())
    }
}

/// Parses the whole document into its sections, preserving order.
pub fn parse(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Malformed {
                    line: line_no,
                    text: raw_line.trim().to_string(),
                })?
                .trim();
            let (kind, arg) = match header.split_once(char::is_whitespace) {
                Some((k, a)) => (k.to_string(), a.trim().to_string()),
                None => (header.to_string(), String::new()),
            };
            sections.push(Section {
                kind,
                arg,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: line_no,
            text: line.to_string(),
        })?;
        let section = sections
            .last_mut()
            .ok_or(ConfigError::OrphanEntry { line: line_no })?;
        section
            .entries
            .push((key.trim().to_string(), value.trim().to_string(), line_no));
    }
    Ok(sections)
}

/// Finds the single section of a given kind, for documents like mission files.
pub fn single<'a>(sections: &'a [Section], kind: &str) -> Result<&'a Section, ConfigError> {
    let mut found = None;
    for s in sections {
        if s.kind == kind && s.arg.is_empty() {
            if found.is_some() {
                return Err(ConfigError::DuplicateSection(kind.to_string()));
            }
            found = Some(s);
        }
    }
    found.ok_or_else(|| ConfigError::MissingSection(kind.to_string()))
}
