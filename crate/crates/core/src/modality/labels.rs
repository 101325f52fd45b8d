use std::collections::HashSet;
use std::path::Path;

use super::sequence::{window_positions, WindowKind};
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::ingest::{ANOMALY, NORMAL};

pub const DEFAULT_NEGATIVE_WORDS: &[&str] = &[
    "error", "fail", "failed", "failure", "fatal", "denied", "invalid", "unable", "exception",
    "critical", "refused", "timeout", "corrupt", "panic", "warning",
];

/// Words whose presence marks a message as negative (anomalous).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            words: DEFAULT_NEGATIVE_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl Lexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Result<Self> {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::config("negative lexicon is empty"));
        }
        Ok(Lexicon { words })
    }

    /// One word per line, `#` comments allowed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// 0 when any token of `message` is a negative word, else 1. Header-only
/// records (empty message) are therefore normal.
pub fn label_with_keywords(message: &str, lexicon: &Lexicon) -> u8 {
    if tokenize(message).iter().any(|t| lexicon.contains(t)) {
        ANOMALY
    } else {
        NORMAL
    }
}

/// Four-way coding of (event label, window label):
/// 0 both anomalous, 1 only the event, 2 only the window, 3 both normal.
pub fn joint_label(point: u8, window: u8) -> u8 {
    match (point, window) {
        (ANOMALY, ANOMALY) => 0,
        (ANOMALY, _) => 1,
        (_, ANOMALY) => 2,
        _ => 3,
    }
}

/// Window and joint labels of event `i` given all point labels of its file.
/// The window is anomalous iff any in-file window event is anomalous.
pub fn derive_labels(point_labels: &[u8], i: usize, w: usize, kind: WindowKind) -> (u8, u8) {
    let file = 0..point_labels.len();
    let window = if window_positions(&file, i, w, kind)
        .into_iter()
        .flatten()
        .any(|j| point_labels[j] == ANOMALY)
    {
        ANOMALY
    } else {
        NORMAL
    };
    (window, joint_label(point_labels[i], window))
}
