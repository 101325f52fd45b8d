//! Seeded synthetic syslog generator with point anomalies, collective
//! bursts and unstable-event injection.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ANOMALY, NORMAL};
use crate::modality::{derive_labels, WindowKind};

/// A message template. `{user}`, `{ip}`, `{port}`, `{n}` and `{hex}` are
/// filled per line; `variant` is the rephrased form used for injection.
struct Pattern {
    service: &'static str,
    text: &'static str,
    variant: &'static str,
}

const fn p(service: &'static str, text: &'static str, variant: &'static str) -> Pattern {
    Pattern {
        service,
        text,
        variant,
    }
}

const NORMAL_PATTERNS: &[Pattern] = &[
    p("sshd", "Accepted publickey for {user} from {ip} port {port} ssh2", "Publickey accepted for {user} coming from {ip} on port {port}"),
    p("systemd", "Started Session {n} of user {user}.", "Session {n} was started for {user}."),
    p("CRON", "pam_unix(cron:session): session opened for user {user}", "cron session now open for account {user}"),
    p("sshd", "Connection closed by {ip} port {port}", "Peer {ip} closed the connection on port {port} cleanly"),
    p("dhclient", "DHCPACK of {ip} from {ip}", "Lease acknowledged address {ip} via server {ip}"),
    p("systemd", "Reached target Timers.", "Timers target has been reached."),
    p("kernel", "usb device attached on bus {n} port {n}", "new usb device connected bus {n} slot {n}"),
    p("ntpd", "clock synchronized to server {ip} stratum {n}", "time sync with {ip} complete at stratum {n}"),
    p("postfix", "message queued with id {hex} for {user}", "queued mail {hex} addressed to {user}"),
    p("rsyslogd", "log rotation completed for file syslog.{n}", "rotated syslog.{n} successfully"),
    p("nginx", "GET request served for path /api/{n} in {n} ms", "served /api/{n} GET in {n} ms"),
    p("dbus", "Successfully activated service org.freedesktop.{user}", "activation done for service org.freedesktop.{user}"),
];

const POINT_PATTERNS: &[Pattern] = &[
    p("sshd", "Failed password for {user} from {ip} port {port} ssh2", "Password check failed for {user} at {ip} port {port}"),
    p("sshd", "error: connection refused by {ip} port {port}", "refused connection error from {ip} via {port}"),
    p("su", "pam_authenticate: authentication failure for {user}", "authentication attempt for {user} ended in failure"),
    p("kernel", "critical temperature reached on cpu {n}", "cpu {n} hit a critical temperature"),
    p("sshd", "Invalid user {user} from {ip}", "rejected invalid account {user} at {ip}"),
    p("systemd", "Unit backup.service entered fatal state", "backup.service unit is now in fatal state"),
];

const BURST_PATTERNS: &[Pattern] = &[
    p("haproxy", "backend pool rebalanced to {n} members", "pool of backends rebalanced with {n} members"),
    p("kubelet", "pod sandbox recreated for {user} generation {n}", "recreated sandbox of pod {user} gen {n}"),
    p("zookeeper", "leader election round {n} started by {ip}", "election round {n} begun by {ip}"),
];

const USERS: &[&str] = &["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi"];
const MONTHS: &[&str] = &["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lines: usize,
    /// Distinct normal templates used.
    pub templates: usize,
    /// Fraction of anomalous lines, burst members included.
    pub anomaly_ratio: f64,
    pub bursts: usize,
    pub burst_len: usize,
    /// Window the bursts must cover (`burst_len >= 2 * window + 1`).
    pub window: usize,
    pub window_kind: WindowKind,
    /// Fraction of lines in the final `injection_region` rewritten into
    /// never-seen variants of their template.
    pub injection_ratio: f64,
    pub injection_region: f64,
    pub hosts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            lines: 1000,
            templates: 5,
            anomaly_ratio: 0.1,
            bursts: 0,
            burst_len: 5,
            window: 1,
            window_kind: WindowKind::Context,
            injection_ratio: 0.0,
            injection_region: 0.2,
            hosts: 3,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(format!("synth: {m}")));
        for (name, v) in [
            ("anomaly_ratio", self.anomaly_ratio),
            ("injection_ratio", self.injection_ratio),
            ("injection_region", self.injection_region),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.lines == 0 {
            return fail("lines must be >= 1".into());
        }
        if self.templates == 0 || self.templates > NORMAL_PATTERNS.len() {
            return fail(format!("templates must be in 1..={}", NORMAL_PATTERNS.len()));
        }
        if self.bursts > 0 && self.burst_len < 2 * self.window + 1 {
            return fail(format!(
                "burst_len {} must be >= 2 * window + 1 = {}",
                self.burst_len,
                2 * self.window + 1
            ));
        }
        if self.window == 0 {
            return fail("window must be >= 1".into());
        }
        let anomalies = self.anomaly_lines();
        let burst_lines = self.bursts * self.burst_len;
        if burst_lines > anomalies {
            return fail(format!("{burst_lines} burst lines exceed the {anomalies} anomalous lines"));
        }
        // Bursts need a normal gap of `window` lines on both sides.
        if self.bursts * (self.burst_len + self.window) + self.window > self.lines {
            return fail("bursts do not fit into the requested number of lines".into());
        }
        Ok(())
    }

    pub fn anomaly_lines(&self) -> usize {
        (self.anomaly_ratio * self.lines as f64).round() as usize
    }
}

/// Ground truth of one generated line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TruthRow {
    pub point: u8,
    pub window: u8,
    pub joint: u8,
    pub burst: bool,
    pub injected: bool,
}

#[derive(Debug, Clone)]
pub struct SynthLog {
    pub lines: Vec<String>,
    pub truth: Vec<TruthRow>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Normal,
    Point,
    Burst(usize),
}

fn fill(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = start + rest[start..].find('}').expect("closed slot");
        match &rest[start + 1..end] {
            "user" => out.push_str(USERS.choose(rng).expect("users")),
            "ip" => out.push_str(&format!(
                "10.{}.{}.{}",
                rng.random_range(0..4),
                rng.random_range(0..256),
                rng.random_range(1..255)
            )),
            "port" => out.push_str(&rng.random_range(1024..65535u32).to_string()),
            "n" => out.push_str(&rng.random_range(1..5000u32).to_string()),
            "hex" => out.push_str(&format!("{:08X}", rng.random::<u32>())),
            other => panic!("unknown slot {other}"),
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Generate the log and its ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<SynthLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.lines;
    let mut kinds = vec![Kind::Normal; n];

    // Bursts: choose `bursts` start offsets in a compressed line space so
    // that they never overlap and keep `window` normal lines between them.
    let slack = n - cfg.bursts * (cfg.burst_len + cfg.window) - cfg.window;
    let mut offsets: Vec<usize> = (0..cfg.bursts).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    for (b, off) in offsets.iter().enumerate() {
        let start = off + cfg.window + b * (cfg.burst_len + cfg.window);
        let pattern = rng.random_range(0..BURST_PATTERNS.len());
        for k in kinds.iter_mut().skip(start).take(cfg.burst_len) {
            *k = Kind::Burst(pattern);
        }
    }
    let points = cfg.anomaly_lines() - cfg.bursts * cfg.burst_len;
    let mut free: Vec<usize> = (0..n).filter(|&i| kinds[i] == Kind::Normal).collect();
    free.shuffle(&mut rng);
    for &i in free.iter().take(points) {
        kinds[i] = Kind::Point;
    }

    let point_labels: Vec<u8> = kinds
        .iter()
        .map(|k| if *k == Kind::Normal { NORMAL } else { ANOMALY })
        .collect();

    let region_start = n - (cfg.injection_region * n as f64).round() as usize;
    let mut eligible: Vec<usize> = (region_start..n)
        .filter(|&i| !matches!(kinds[i], Kind::Burst(_)))
        .collect();
    eligible.shuffle(&mut rng);
    let inject = ((cfg.injection_ratio * (n - region_start) as f64).round() as usize).min(eligible.len());
    let mut injected = vec![false; n];
    for &i in eligible.iter().take(inject) {
        injected[i] = true;
    }

    let hosts: Vec<String> = (1..=cfg.hosts.max(1)).map(|h| format!("node-{h}")).collect();
    let month = MONTHS[rng.random_range(0..12)];
    let mut t = rng.random_range(0..86_400u64);
    let day = rng.random_range(1..=28u64);
    let mut lines = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let pattern = match kinds[i] {
            Kind::Normal => &NORMAL_PATTERNS[rng.random_range(0..cfg.templates)],
            Kind::Point => POINT_PATTERNS.choose(&mut rng).expect("patterns"),
            Kind::Burst(b) => &BURST_PATTERNS[b],
        };
        let text = if injected[i] { pattern.variant } else { pattern.text };
        let message = fill(text, &mut rng);
        t += rng.random_range(1..30);
        let d = day + t / 86_400;
        let s = t % 86_400;
        lines.push(format!(
            "{month} {d:>2} {:02}:{:02}:{:02} {} {}[{}]: {message}",
            s / 3600,
            s / 60 % 60,
            s % 60,
            hosts.choose(&mut rng).expect("hosts"),
            pattern.service,
            rng.random_range(100..32_768u32),
        ));
        let (window, joint) = derive_labels(&point_labels, i, cfg.window, cfg.window_kind);
        truth.push(TruthRow {
            point: point_labels[i],
            window,
            joint,
            burst: matches!(kinds[i], Kind::Burst(_)),
            injected: injected[i],
        });
    }
    Ok(SynthLog { lines, truth })
}

impl SynthLog {
    pub fn truth_tsv(&self) -> String {
        let mut s = String::from("#line_no\tpoint\twindow\tjoint\n");
        for (i, r) in self.truth.iter().enumerate() {
            s.push_str(&format!("{i}\t{}\t{}\t{}\n", r.point, r.window, r.joint));
        }
        s
    }

    /// Write `<stem>.log` and `<stem>.truth.tsv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join(format!("{stem}.log"));
        let mut body = self.lines.join("\n");
        body.push('\n');
        std::fs::write(&log, body).map_err(|e| Error::io(&log, e))?;
        let truth = dir.join(format!("{stem}.truth.tsv"));
        std::fs::write(&truth, self.truth_tsv()).map_err(|e| Error::io(&truth, e))?;
        Ok((log, truth))
    }
}
