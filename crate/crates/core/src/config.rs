//! Flat `key=value` text format shared by preset, experiment and sweep files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys keep their file order so files can be re-emitted deterministically.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("unknown key `{key}` (line {line})")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line, 0 for programmatic entries.
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: content.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            }
            if kv.get(key).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            kv.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(kv)
    }

    /// Insert or replace, keeping the original position of an existing key.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value,
            None => self.entries.push(Entry {
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
    }

    /// Copy every entry of `other`, keeping its source line. Existing keys are
    /// replaced in place.
    pub fn extend_from(&mut self, other: &KeyValues) {
        for e in &other.entries {
            match self.entries.iter_mut().find(|x| x.key == e.key) {
                Some(x) => {
                    x.value = e.value.clone();
                    x.line = e.line;
                }
                None => self.entries.push(e.clone()),
            }
        }
    }

    /// Parse a `key=value` override string and apply it.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| ConfigError::InvalidValue {
                line: e.line,
                key: e.key.clone(),
                value: e.value.clone(),
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parsed::<f64>(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.parsed(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Fail on the first key that `known` rejects.
    pub fn check_keys<F>(&self, known: F) -> Result<(), ConfigError>
    where
        F: Fn(&str) -> bool,
    {
        match self.entries.iter().find(|e| !known(&e.key)) {
            Some(e) => Err(ConfigError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.key);
            out.push('=');
            out.push_str(&e.value);
            out.push('\n');
        }
        out
    }
}
