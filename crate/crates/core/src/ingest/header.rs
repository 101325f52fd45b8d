use regex::Regex;

use crate::error::{Error, Result};

/// Built-in header layouts.
pub const SYSLOG: &str = r"^(?P<timestamp>[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2})\s+(?P<host>\S+)\s+(?P<service>[^\s:\[]+)(?:\[\d+\])?:\s*(?P<message>.*)$";
pub const KERNEL: &str =
    r"^(?:(?P<timestamp>[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2})\s+(?P<host>\S+)\s+(?P<service>kernel):\s*)?\[\s*\d+\.\d+\]\s*(?P<message>.*)$";
pub const GENERIC: &str = r"^(?P<timestamp>\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?)\s+(?:(?P<service>[A-Z]{3,8})\s+)?(?P<message>.*)$";

/// Regex header splitter with named groups `timestamp`, `host`, `service`
/// and (required) `message`.
#[derive(Debug, Clone)]
pub struct HeaderPattern {
    regex: Regex,
}

/// Header fields plus the free-text message of one line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitLine {
    pub timestamp: Option<String>,
    pub host: Option<String>,
    pub service: Option<String>,
    pub message: String,
    /// The line matched the header but carried no message text.
    pub header_only: bool,
}

impl HeaderPattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let regex =
            Regex::new(pattern).map_err(|e| Error::config(format!("invalid header pattern: {e}")))?;
        if !regex.capture_names().flatten().any(|n| n == "message") {
            return Err(Error::config(
                "header pattern must define a named `message` group",
            ));
        }
        Ok(HeaderPattern { regex })
    }

    /// Resolve `syslog`, `kernel`, `generic` or treat the argument as a regex.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "syslog" => Self::new(SYSLOG),
            "kernel" => Self::new(KERNEL),
            "generic" => Self::new(GENERIC),
            other => Self::new(other),
        }
    }

    /// Split one raw line. Returns `None` for blank lines.
    pub fn split(&self, raw: &str) -> Option<SplitLine> {
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            return None;
        }
        let Some(caps) = self.regex.captures(line) else {
            return Some(SplitLine {
                message: line.trim().to_string(),
                ..Default::default()
            });
        };
        let field = |name: &str| {
            caps.name(name)
                .map(|m| m.as_str().trim().to_string())
                .filter(|s| !s.is_empty())
        };
        let message = field("message").unwrap_or_default();
        Some(SplitLine {
            timestamp: field("timestamp"),
            host: field("host"),
            service: field("service"),
            header_only: message.is_empty(),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syslog_fields() {
        let p = HeaderPattern::named("syslog").unwrap();
        let s = p
            .split("Jun 9 06:06:20 host1 sshd[2094]: Failed password")
            .unwrap();
        assert_eq!(s.timestamp.as_deref(), Some("Jun 9 06:06:20"));
        assert_eq!(s.host.as_deref(), Some("host1"));
        assert_eq!(s.service.as_deref(), Some("sshd"));
        assert_eq!(s.message, "Failed password");
        assert!(!s.header_only);
    }

    #[test]
    fn blank_line_is_skipped() {
        let p = HeaderPattern::named("syslog").unwrap();
        assert!(p.split("").is_none());
        assert!(p.split("   \r\n").is_none());
    }

    #[test]
    fn unmatched_line_is_all_message() {
        let p = HeaderPattern::named("syslog").unwrap();
        let s = p.split("something without a header").unwrap();
        assert_eq!(s.message, "something without a header");
        assert!(s.timestamp.is_none() && s.host.is_none() && s.service.is_none());
    }

    #[test]
    fn header_only_line_is_flagged() {
        let p = HeaderPattern::named("syslog").unwrap();
        let s = p.split("Jun 9 06:06:20 host1 kernel:").unwrap();
        assert!(s.header_only);
        assert_eq!(s.message, "");
    }

    #[test]
    fn kernel_and_generic() {
        let k = HeaderPattern::named("kernel").unwrap();
        assert_eq!(
            k.split("[ 12.345678] usb 1-1: new device").unwrap().message,
            "usb 1-1: new device"
        );
        let g = HeaderPattern::named("generic").unwrap();
        let s = g.split("2024-01-02 03:04:05,123 INFO job started").unwrap();
        assert_eq!(s.service.as_deref(), Some("INFO"));
        assert_eq!(s.message, "job started");
    }

    #[test]
    fn bad_patterns_rejected_at_load() {
        assert!(matches!(HeaderPattern::new("(unclosed"), Err(Error::Config(_))));
        assert!(matches!(HeaderPattern::new(r"^(?P<ts>\S+)"), Err(Error::Config(_))));
    }
}
