use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// The `W` events preceding the current one.
    Background,
    /// The `W` preceding events followed by the `W` following ones.
    Context,
}

impl WindowKind {
    pub fn span(self, w: usize) -> usize {
        match self {
            WindowKind::Background => w,
            WindowKind::Context => 2 * w,
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "background" => Ok(WindowKind::Background),
            "context" => Ok(WindowKind::Context),
            other => Err(Error::config(format!(
                "window kind must be `background` or `context`, got `{other}`"
            ))),
        }
    }
}

/// Global indices (into an event store) of the events in one file's window
/// positions, oldest first; the current event itself never appears.
pub fn window_positions(file: &Range<usize>, i: usize, w: usize, kind: WindowKind) -> Vec<Option<usize>> {
    debug_assert!(file.contains(&i));
    let before = (1..=w).rev().map(|d| i.checked_sub(d).filter(|j| *j >= file.start));
    let after = (1..=w).map(|d| Some(i + d).filter(|j| *j < file.end));
    match kind {
        WindowKind::Background => before.collect(),
        WindowKind::Context => before.chain(after).collect(),
    }
}

/// Sequence-modality slots for one sample: `Some(event index)` for real
/// events, `None` for out-of-file, empty-message and padding positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceInput {
    pub rows: Vec<Option<usize>>,
}

impl SequenceInput {
    pub fn mask(&self) -> Vec<bool> {
        self.rows.iter().map(Option::is_some).collect()
    }
}

/// Build the padded sequence input for event `i` of the file occupying
/// `file` in the event store. `present[j]` is false for events whose
/// message produced no tokens; those slots are masked like padding.
pub fn build_sequence(
    file: &Range<usize>,
    present: &[bool],
    i: usize,
    w: usize,
    kind: WindowKind,
    l_seq: usize,
) -> Result<SequenceInput> {
    if w == 0 {
        return Err(Error::config("window size must be >= 1"));
    }
    if kind.span(w) > l_seq {
        return Err(Error::config(format!(
            "window span {} exceeds sequence length {l_seq}",
            kind.span(w)
        )));
    }
    let mut rows: Vec<Option<usize>> = window_positions(file, i, w, kind)
        .into_iter()
        .map(|j| j.filter(|&j| present[j]))
        .collect();
    rows.resize(l_seq, None);
    Ok(SequenceInput { rows })
}
