//! The TOML file that drives every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::FileWeighting;
use crate::ingest::{DrainConfig, HeaderPattern};
use crate::modality::{PrepareConfig, WindowKind};
use crate::model::ModelConfig;
use crate::par::Exec;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub work_dir: PathBuf,
    /// Run data-parallel stages on the thread pool.
    pub parallel: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            work_dir: PathBuf::from("work"),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseSection {
    /// `syslog`, `kernel`, `generic` or a regex with a `message` group.
    pub pattern: String,
    /// Per-input patterns matching `inputs` one to one. Empty means `pattern`
    /// for every input.
    pub patterns: Vec<String>,
    /// Raw log files. Empty means the synthetic log in the work directory.
    pub inputs: Vec<PathBuf>,
    /// Ground-truth files matching `inputs` one to one. Empty means
    /// keyword labelling (or the synthetic truth for synthetic input).
    pub labels: Vec<PathBuf>,
    pub drain: DrainConfig,
}

impl ParseSection {
    pub fn pattern_for(&self, input: usize) -> &str {
        self.patterns.get(input).map_or(&self.pattern, String::as_str)
    }
}

impl Default for ParseSection {
    fn default() -> Self {
        ParseSection {
            pattern: "syslog".into(),
            patterns: Vec::new(),
            inputs: Vec::new(),
            labels: Vec::new(),
            drain: DrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    pub enabled: bool,
}

impl Default for BalanceSection {
    fn default() -> Self {
        BalanceSection { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub weighting: FileWeighting,
    pub batch: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            weighting: FileWeighting::Uniform,
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineSection,
    pub synth: SynthConfig,
    pub parse: ParseSection,
    pub prepare: PrepareConfig,
    pub balance: BalanceSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub classes: Option<usize>,
    pub window: Option<usize>,
    pub window_kind: Option<WindowKind>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.synth.seed = s;
            self.prepare.embed_seed = s;
            self.model.seed = s;
            self.train.seed = s;
        }
        if let Some(c) = o.classes {
            self.model.n_classes = c;
        }
        if let Some(w) = o.window {
            self.prepare.window = w;
            self.synth.window = w;
        }
        if let Some(k) = o.window_kind {
            self.prepare.window_kind = k;
            self.synth.window_kind = k;
        }
        if let Some(out) = &o.out {
            self.pipeline.work_dir = out.clone();
        }
    }

    /// Checks that do not depend on prepared data.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.parse.drain.validate()?;
        self.prepare.validate()?;
        self.train.validate()?;
        if !self.parse.labels.is_empty() && self.parse.labels.len() != self.parse.inputs.len() {
            return Err(Error::config("parse.labels must match parse.inputs one to one"));
        }
        if !self.parse.patterns.is_empty() && self.parse.patterns.len() != self.parse.inputs.len() {
            return Err(Error::config("parse.patterns must match parse.inputs one to one"));
        }
        for i in 0..self.parse.inputs.len().max(1) {
            HeaderPattern::named(self.parse.pattern_for(i))?;
        }
        if ![2, 4].contains(&self.model.n_classes) {
            return Err(Error::config("model.n_classes must be 2 or 4"));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.pipeline.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}
