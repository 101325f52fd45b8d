//! Stage functions shared by the command-line driver and the tests. Every
//! stage reads its inputs from and writes its outputs to the work
//! directory named in the config.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::balance::{balance_dataset, BalanceReport};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{self, Curves, EvalReport, Pca};
use crate::ingest::{
    parse_file, read_records, read_truth, write_records, write_templates, DrainTree, HeaderPattern,
    ParsedRecord,
};
use crate::modality::embed::read_word_vectors;
use crate::modality::{Dataset, PreparedMeta, Split};
use crate::model::checkpoint::{load_checkpoint_matching, save_checkpoint};
use crate::model::{Model, ModelConfig};
use crate::synth::{generate, SynthLog};
use crate::train::{fit, write_history, EpochRecord, FitResult};

const SYNTH_STEM: &str = "synth";

/// Locations of every stage artefact below the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub work: PathBuf,
}

impl Layout {
    pub fn new(cfg: &Config) -> Self {
        Layout {
            work: cfg.pipeline.work_dir.clone(),
        }
    }

    pub fn raw(&self) -> PathBuf {
        self.work.join("raw")
    }
    pub fn parsed(&self) -> PathBuf {
        self.work.join("parsed")
    }
    pub fn prepared(&self) -> PathBuf {
        self.work.join("prepared")
    }
    pub fn balanced(&self) -> PathBuf {
        self.work.join("balanced")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.work.join("model")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.model_dir().join("model.ckpt")
    }
    pub fn history(&self) -> PathBuf {
        self.model_dir().join("history.csv")
    }
    pub fn eval(&self) -> PathBuf {
        self.work.join("eval")
    }
    pub fn predict(&self) -> PathBuf {
        self.work.join("predict")
    }
    pub fn vectors(&self) -> PathBuf {
        self.work.join("vectors")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Generate the synthetic log into `raw/`.
pub fn synth(cfg: &Config) -> Result<SynthLog> {
    let log = generate(&cfg.synth)?;
    log.write(&Layout::new(cfg).raw(), SYNTH_STEM)?;
    Ok(log)
}

/// Raw inputs with their optional truth files and a stem per input.
fn inputs(cfg: &Config) -> Result<Vec<(String, PathBuf, Option<PathBuf>)>> {
    let layout = Layout::new(cfg);
    if cfg.parse.inputs.is_empty() {
        let raw = layout.raw();
        let log = raw.join(format!("{SYNTH_STEM}.log"));
        if !log.exists() {
            return Err(Error::config(
                "parse.inputs is empty and no synthetic log exists; run synth first",
            ));
        }
        return Ok(vec![(
            SYNTH_STEM.into(),
            log,
            Some(raw.join(format!("{SYNTH_STEM}.truth.tsv"))),
        )]);
    }
    let mut out = Vec::new();
    for (i, path) in cfg.parse.inputs.iter().enumerate() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("input{i}"));
        if out.iter().any(|(s, _, _)| s == &stem) {
            return Err(Error::config(format!("two inputs share the file stem {stem:?}")));
        }
        out.push((stem, path.clone(), cfg.parse.labels.get(i).cloned()));
    }
    Ok(out)
}

fn attach_truth(records: &mut [ParsedRecord], truth: Option<&Path>) -> Result<()> {
    if let Some(t) = truth {
        let labels = read_truth(t)?;
        for r in records {
            r.record.label = labels.get(&r.record.line_no).copied();
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ParseSummary {
    pub files: Vec<(String, usize)>,
    pub templates: usize,
}

/// Split headers, mine templates across all inputs and attach labels.
pub fn parse(cfg: &Config) -> Result<ParseSummary> {
    let layout = Layout::new(cfg);
    let mut tree = DrainTree::new(cfg.parse.drain)?;
    let dir = layout.parsed();
    mkdir(&dir)?;
    let mut files = Vec::new();
    let mut stems = String::new();
    for (i, (stem, path, truth)) in inputs(cfg)?.into_iter().enumerate() {
        let pattern = HeaderPattern::named(cfg.parse.pattern_for(i))?;
        let mut records = parse_file(&path, &pattern, &mut tree)?;
        attach_truth(&mut records, truth.as_deref())?;
        write_records(&dir.join(format!("{stem}.records.tsv")), &records)?;
        stems.push_str(&stem);
        stems.push('\n');
        files.push((stem, records.len()));
    }
    let list = dir.join("files.txt");
    std::fs::write(&list, stems).map_err(|e| Error::io(&list, e))?;
    write_templates(&dir.join("templates.tsv"), tree.templates())?;
    Ok(ParseSummary {
        files,
        templates: tree.templates().len(),
    })
}

/// Parsed records of every input, in input order.
pub fn load_parsed(cfg: &Config) -> Result<Vec<(String, Vec<ParsedRecord>)>> {
    let dir = Layout::new(cfg).parsed();
    let list = dir.join("files.txt");
    let text = std::fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|stem| Ok((stem.to_string(), read_records(&dir.join(format!("{stem}.records.tsv")))?)))
        .collect()
}

/// Build and save the prepared dataset.
pub fn prepare(cfg: &Config) -> Result<Dataset> {
    let files = load_parsed(cfg)?;
    let ds = Dataset::prepare(&files, &cfg.prepare, cfg.exec())?;
    ds.save(&Layout::new(cfg).prepared())?;
    Ok(ds)
}

/// Undersample the training split and save the result to `balanced/`.
pub fn balance(cfg: &Config) -> Result<BalanceReport> {
    let layout = Layout::new(cfg);
    let mut ds = Dataset::load(&layout.prepared())?;
    let report = balance_dataset(&mut ds, cfg.model.n_classes, cfg.exec());
    ds.save(&layout.balanced())?;
    write_json(&layout.balanced().join("balance.json"), &report)?;
    Ok(report)
}

/// The dataset training should use: balanced when balancing is enabled.
pub fn training_dataset(cfg: &Config) -> Result<Dataset> {
    let layout = Layout::new(cfg);
    if cfg.balance.enabled {
        let dir = layout.balanced();
        if !dir.join("meta.json").exists() {
            return Err(Error::config("balancing is enabled but no balanced dataset exists; run balance first"));
        }
        Dataset::load(&dir)
    } else {
        Dataset::load(&layout.prepared())
    }
}

/// Model configuration with the data-dependent sizes taken from `ds`.
pub fn model_config(cfg: &Config, ds: &Dataset) -> ModelConfig {
    let mut m = cfg.model.clone();
    m.vocab_size = ds.vocab.len();
    m.l_sem = ds.meta.prepare.l_sem;
    m.l_seq = ds.meta.prepare.l_seq;
    m.d_event = ds.events.dim;
    m
}

/// Fit, then save the best checkpoint and the history.
pub fn train(cfg: &Config, on_epoch: impl FnMut(&EpochRecord)) -> Result<FitResult> {
    let layout = Layout::new(cfg);
    let ds = training_dataset(cfg)?;
    let mut model = Model::new(model_config(cfg, &ds))?;
    if let Some(path) = &cfg.prepare.word_vectors {
        let rows = read_word_vectors(path, &ds.vocab, model.config.d_word)?;
        model.params.load_token_vectors(&rows);
    }
    let result = fit(model, &ds, &cfg.train, cfg.exec(), on_epoch)?;
    mkdir(&layout.model_dir())?;
    save_checkpoint(&result.best, &layout.checkpoint())?;
    write_history(&layout.history(), &result.history)?;
    Ok(result)
}

/// Load the trained checkpoint, refusing it if it does not fit `ds`.
pub fn load_model(cfg: &Config, ds: &Dataset) -> Result<Model> {
    load_checkpoint_matching(&Layout::new(cfg).checkpoint(), &model_config(cfg, ds))
}

/// Evaluate the test split and write the report and curves.
pub fn evaluate(cfg: &Config) -> Result<(EvalReport, Option<Curves>)> {
    let layout = Layout::new(cfg);
    let ds = Dataset::load(&layout.prepared())?;
    let model = load_model(cfg, &ds)?;
    let (report, curves) = eval::evaluate(
        &model,
        &ds,
        Split::Test,
        cfg.eval.batch,
        cfg.eval.weighting,
        cfg.exec(),
    )?;
    eval::write_report(&layout.eval(), &report, curves.as_ref())?;
    Ok((report, curves))
}

/// One scored line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub line_no: usize,
    pub predicted: usize,
    /// Probability that the event itself is anomalous.
    pub anomaly_probability: f64,
}

/// Score every line of `input` with the trained model. With `truth`, the
/// verdicts are also scored and the report is returned.
pub fn predict(cfg: &Config, input: &Path, truth: Option<&Path>) -> Result<(Vec<Verdict>, Option<EvalReport>)> {
    let layout = Layout::new(cfg);
    let prepared = Dataset::load(&layout.prepared())?;
    let model = load_model(cfg, &prepared)?;
    let pattern = HeaderPattern::named(&cfg.parse.pattern)?;
    let mut tree = DrainTree::new(cfg.parse.drain)?;
    let mut records = parse_file(input, &pattern, &mut tree)?;
    attach_truth(&mut records, truth)?;
    let name = input.display().to_string();
    let meta = PreparedMeta {
        files: vec![name],
        prepare: prepared.meta.prepare.clone(),
    };
    let ds = Dataset::assemble(&[(String::new(), records)], meta, prepared.vocab.clone(), |_, _| Split::Test, cfg.exec())?;
    let idx: Vec<usize> = (0..ds.samples.len()).collect();
    let p = eval::predict(&model, &ds, &idx, cfg.eval.batch, cfg.exec())?;
    // Classes below 2 in 4-class mode are the ones whose event is anomalous.
    let anomalous = if model.config.n_classes == 4 { 2 } else { 1 };
    let verdicts: Vec<Verdict> = idx
        .iter()
        .map(|&i| Verdict {
            line_no: ds.samples[i].line_no,
            predicted: p.predicted[i],
            anomaly_probability: p.probabilities.row(i)[..anomalous].iter().sum(),
        })
        .collect();
    let dir = layout.predict();
    mkdir(&dir)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    let mut body = String::from("line_no\tpredicted\tanomaly_probability\n");
    for v in &verdicts {
        body.push_str(&format!("{}\t{}\t{}\n", v.line_no, v.predicted, v.anomaly_probability));
    }
    let path = dir.join(format!("{stem}.verdicts.tsv"));
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    let report = match truth {
        Some(_) => {
            let (r, _) = eval::report(&ds, &p, model.config.n_classes, cfg.eval.weighting)?;
            let path = dir.join(format!("{stem}.report.json"));
            std::fs::write(&path, r.to_json()).map_err(|e| Error::io(&path, e))?;
            Some(r)
        }
        None => None,
    };
    Ok((verdicts, report))
}

/// Export latent vectors and their PCA projection for the test split.
pub fn export_vectors(cfg: &Config) -> Result<Option<Pca>> {
    let layout = Layout::new(cfg);
    let ds = Dataset::load(&layout.prepared())?;
    let model = load_model(cfg, &ds)?;
    let idx = ds.indices(Split::Test);
    eval::export_vectors(&model, &ds, &idx, cfg.eval.batch, &layout.vectors(), cfg.exec())
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub parse: ParseSummary,
    pub balance: Option<BalanceReport>,
    pub fit: FitResult,
    pub report: EvalReport,
}

/// synth (when no inputs are configured), parse, prepare, balance, train
/// and evaluate.
pub fn run_all(cfg: &Config, on_epoch: impl FnMut(&EpochRecord)) -> Result<PipelineRun> {
    cfg.validate()?;
    if cfg.parse.inputs.is_empty() {
        synth(cfg)?;
    }
    let parse = parse(cfg)?;
    prepare(cfg)?;
    let balance = if cfg.balance.enabled {
        Some(balance(cfg)?)
    } else {
        None
    };
    let fit = train(cfg, on_epoch)?;
    let (report, _) = evaluate(cfg)?;
    Ok(PipelineRun {
        parse,
        balance,
        fit,
        report,
    })
}
