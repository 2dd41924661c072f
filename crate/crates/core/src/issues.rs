//! Level-tagged issue log shared by the processing phases.
//!
//! An ERROR entry anywhere in a phase's log blocks output generation of the
//! phases downstream of it.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Info,
    Warn,
    Error,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Info => "INFO",
            Level::Warn => "WARN",
            Level::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub level: Level,
    pub code: String,
    pub sample_id: Option<u64>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<5} [{}]", self.level, self.code)?;
        if let Some(id) = self.sample_id {
            write!(f, " sample={id}")?;
        }
        write!(f, " {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueLog {
    entries: Vec<Issue>,
}

impl IssueLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        level: Level,
        code: impl Into<String>,
        sample_id: Option<u64>,
        message: impl Into<String>,
    ) {
        let issue = Issue {
            level,
            code: code.into(),
            sample_id,
            message: message.into(),
        };
        match level {
            Level::Info => log::debug!("{issue}"),
            Level::Warn => log::info!("{issue}"),
            Level::Error => log::warn!("{issue}"),
        }
        self.entries.push(issue);
    }

    pub fn info(&mut self, code: &str, sample_id: Option<u64>, message: impl Into<String>) {
        self.push(Level::Info, code, sample_id, message);
    }

    pub fn warn(&mut self, code: &str, sample_id: Option<u64>, message: impl Into<String>) {
        self.push(Level::Warn, code, sample_id, message);
    }

    pub fn error(&mut self, code: &str, sample_id: Option<u64>, message: impl Into<String>) {
        self.push(Level::Error, code, sample_id, message);
    }

    pub fn entries(&self) -> &[Issue] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, level: Level) -> usize {
        self.entries.iter().filter(|e| e.level == level).count()
    }

    pub fn has_errors(&self) -> bool {
        self.entries.iter().any(|e| e.level == Level::Error)
    }

    pub fn extend(&mut self, other: IssueLog) {
        self.entries.extend(other.entries);
    }

    pub fn with_code<'a>(&'a self, code: &'a str) -> impl Iterator<Item = &'a Issue> + 'a {
        self.entries.iter().filter(move |e| e.code == code)
    }
}
