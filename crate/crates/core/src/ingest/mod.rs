//! Raw log text to structured records and mined templates.

pub mod drain;
pub mod header;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub use drain::{DrainConfig, DrainTree, Template, Token};
pub use header::{HeaderPattern, SplitLine};

use crate::error::{Error, Result};

/// Anomaly (negative sentiment).
pub const ANOMALY: u8 = 0;
/// Normal (positive sentiment).
pub const NORMAL: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub line_no: usize,
    pub timestamp: Option<String>,
    pub host: Option<String>,
    pub service: Option<String>,
    pub message: String,
    pub header_only: bool,
    pub label: Option<u8>,
}

impl LogRecord {
    pub fn from_split(line_no: usize, split: SplitLine) -> Self {
        LogRecord {
            line_no,
            timestamp: split.timestamp,
            host: split.host,
            service: split.service,
            message: split.message,
            header_only: split.header_only,
            label: None,
        }
    }
}

/// One record plus the template it was mined into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRecord {
    pub record: LogRecord,
    pub template_id: usize,
}

/// Split a single raw line; blank lines produce nothing.
pub fn split_header(raw_line: &str, line_no: usize, pattern: &HeaderPattern) -> Option<LogRecord> {
    pattern
        .split(raw_line)
        .map(|s| LogRecord::from_split(line_no, s))
}

/// Parse already-loaded text. Line numbers are physical 0-based line indices.
pub fn parse_text(text: &str, pattern: &HeaderPattern, tree: &mut DrainTree) -> Vec<ParsedRecord> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| split_header(line, i, pattern))
        .map(|record| {
            let m = tree.add_message(&record.message);
            ParsedRecord {
                record,
                template_id: m.template_id,
            }
        })
        .collect()
}

/// Read `path` (invalid UTF-8 is replaced, not rejected) and parse it.
pub fn parse_file(
    path: &Path,
    pattern: &HeaderPattern,
    tree: &mut DrainTree,
) -> Result<Vec<ParsedRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(parse_text(&text, pattern, tree))
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Tab-separated `line_no, template_id, message, label` rows (`-` when unlabeled).
pub fn write_records(path: &Path, records: &[ParsedRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let label = r
            .record
            .label
            .map_or_else(|| "-".to_string(), |l| l.to_string());
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.record.line_no,
            r.template_id,
            clean_field(&r.record.message),
            label
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ParsedRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        let bad = || Error::data(format!("{}:{}: malformed record row", path.display(), i + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        let line_no: usize = cols[0].parse().map_err(|_| bad())?;
        if last.is_some_and(|l| line_no <= l) {
            return Err(Error::data(format!(
                "{}:{}: line numbers must be strictly increasing",
                path.display(),
                i + 1
            )));
        }
        last = Some(line_no);
        let template_id = cols[1].parse().map_err(|_| bad())?;
        let label = match cols[3] {
            "-" => None,
            "0" => Some(ANOMALY),
            "1" => Some(NORMAL),
            _ => return Err(bad()),
        };
        out.push(ParsedRecord {
            record: LogRecord {
                line_no,
                timestamp: None,
                host: None,
                service: None,
                header_only: cols[2].is_empty(),
                message: cols[2].to_string(),
                label,
            },
            template_id,
        });
    }
    Ok(out)
}

/// Tab-separated `template_id, count, template text` rows.
pub fn write_templates(path: &Path, templates: &[Template]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in templates {
        writeln!(w, "{}\t{}\t{}", t.id, t.count, clean_field(&t.text()))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ground-truth point labels keyed by physical line number
/// (`line_no \t point_label [\t ...]`, extra columns ignored).
pub fn read_truth(path: &Path) -> Result<std::collections::HashMap<usize, u8>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let parsed = (|| {
            let no: usize = cols.next()?.parse().ok()?;
            let label: u8 = cols.next()?.parse().ok()?;
            (label <= 1).then_some((no, label))
        })();
        let (no, label) = parsed.ok_or_else(|| {
            Error::data(format!("{}:{}: malformed truth row", path.display(), i + 1))
        })?;
        out.insert(no, label);
    }
    Ok(out)
}
