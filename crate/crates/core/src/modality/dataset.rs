//! Samples, batches and the prepared-dataset directory format.
//!
//! A prepared directory holds `meta.json`, `vocab.txt`, `samples.tsv`
//! (`file, line_no, split, token ids, point, window, joint`) and
//! `events.bin` (one event vector per sample row, in the same order).
//! Sequence inputs are rebuilt from the event store at load time.

use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{read_matrix, write_matrix, FileEmbedder, RandomProjectionEmbedder, SentenceEmbedder};
use super::labels::{derive_labels, label_with_keywords, Lexicon};
use super::sequence::{build_sequence, SequenceInput, WindowKind};
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::ingest::ParsedRecord;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Removed from training by balancing; still feeds neighbours' windows.
    Dropped,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Dropped => "dropped",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            "dropped" => Split::Dropped,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub l_sem: usize,
    pub l_seq: usize,
    pub window: usize,
    pub window_kind: WindowKind,
    /// Chronological train/val/test fractions, applied per file.
    pub split: [f64; 3],
    pub embed_dim: usize,
    pub embed_word_dim: usize,
    pub embed_seed: u64,
    pub lexicon: Option<PathBuf>,
    /// Optional `message \t vector` file overriding the default embedder.
    pub sentence_vectors: Option<PathBuf>,
    /// Optional word2vec text file seeding the token embedding table.
    pub word_vectors: Option<PathBuf>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            l_sem: 60,
            l_seq: 60,
            window: 1,
            window_kind: WindowKind::Context,
            split: [0.6, 0.2, 0.2],
            embed_dim: 384,
            embed_word_dim: 300,
            embed_seed: 0,
            lexicon: None,
            sentence_vectors: None,
            word_vectors: None,
        }
    }
}

impl PrepareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_sem == 0 || self.l_seq == 0 || self.embed_dim == 0 || self.embed_word_dim == 0 {
            return Err(Error::config("modality lengths and embedding sizes must be >= 1"));
        }
        if self.window == 0 || self.window_kind.span(self.window) > self.l_seq {
            return Err(Error::config(format!(
                "window {} ({:?}) does not fit sequence length {}",
                self.window, self.window_kind, self.l_seq
            )));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config("split fractions must lie in [0,1] and sum to 1"));
        }
        Ok(())
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Lexicon::load(p),
            None => Ok(Lexicon::default()),
        }
    }

    pub fn embedder(&self, vocab: &Vocabulary) -> Result<Box<dyn SentenceEmbedder>> {
        let base = RandomProjectionEmbedder::new(
            vocab.clone(),
            self.embed_word_dim,
            self.embed_dim,
            self.embed_seed,
        );
        Ok(match &self.sentence_vectors {
            Some(p) => Box::new(FileEmbedder::load(p, Box::new(base))?),
            None => Box::new(base),
        })
    }
}

/// Fixed-length token ids; padding is [`PAD`] at the tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticInput {
    pub token_ids: Vec<u32>,
}

impl SemanticInput {
    pub fn new(mut ids: Vec<u32>, l_sem: usize) -> Self {
        ids.truncate(l_sem);
        ids.resize(l_sem, PAD);
        SemanticInput { token_ids: ids }
    }

    pub fn mask(&self) -> Vec<bool> {
        self.token_ids.iter().map(|&t| t != PAD).collect()
    }
}

/// Event vectors for every record, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStore {
    pub dim: usize,
    pub data: Vec<f64>,
    /// False for records whose message had no tokens.
    pub present: Vec<bool>,
}

impl EventStore {
    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub file: usize,
    pub line_no: usize,
    /// Row of this sample's own event in the [`EventStore`].
    pub event: usize,
    pub split: Split,
    pub semantic: SemanticInput,
    pub sequence: SequenceInput,
    pub point_label: u8,
    pub window_label: u8,
    pub joint_label: u8,
}

impl Sample {
    /// Target for a 2-class (point) or 4-class (point + collective) model.
    pub fn label(&self, n_classes: usize) -> usize {
        if n_classes == 4 {
            self.joint_label as usize
        } else {
            self.point_label as usize
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PreparedMeta {
    pub files: Vec<String>,
    pub prepare: PrepareConfig,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: PreparedMeta,
    pub vocab: Vocabulary,
    pub events: EventStore,
    pub samples: Vec<Sample>,
    pub file_ranges: Vec<Range<usize>>,
}

/// Chronological split of `n` records.
pub fn split_of(index: usize, n: usize, fractions: [f64; 3]) -> Split {
    let train = (fractions[0] * n as f64).round() as usize;
    let val = ((fractions[0] + fractions[1]) * n as f64).round() as usize;
    if index < train {
        Split::Train
    } else if index < val {
        Split::Val
    } else {
        Split::Test
    }
}

impl Dataset {
    /// Build vocabulary from the training portion of each file, embed all
    /// records and assemble samples.
    pub fn prepare(
        files: &[(String, Vec<ParsedRecord>)],
        cfg: &PrepareConfig,
        exec: Exec,
    ) -> Result<Self> {
        cfg.validate()?;
        let train_msgs = files.iter().flat_map(|(_, recs)| {
            let n = recs.len();
            recs.iter()
                .enumerate()
                .filter(move |(i, _)| split_of(*i, n, cfg.split) == Split::Train)
                .map(|(_, r)| r.record.message.as_str())
        });
        let vocab = Vocabulary::build(train_msgs)?;
        let meta = PreparedMeta {
            files: files.iter().map(|(n, _)| n.clone()).collect(),
            prepare: cfg.clone(),
        };
        Self::assemble(files, meta, vocab, |i, n| split_of(i, n, cfg.split), exec)
    }

    /// Assemble samples for `files` against an existing vocabulary (used for
    /// inference on new logs).
    pub fn assemble(
        files: &[(String, Vec<ParsedRecord>)],
        meta: PreparedMeta,
        vocab: Vocabulary,
        split: impl Fn(usize, usize) -> Split,
        exec: Exec,
    ) -> Result<Self> {
        let cfg = &meta.prepare;
        let lexicon = cfg.lexicon()?;
        let embedder = cfg.embedder(&vocab)?;
        let all: Vec<&ParsedRecord> = files.iter().flat_map(|(_, r)| r.iter()).collect();
        if all.is_empty() {
            return Err(Error::data("no records to prepare"));
        }

        let vectors = exec.map(&all, |r| embedder.embed(&r.record.message));
        let token_ids = exec.map(&all, |r| vocab.encode(&r.record.message));
        let present: Vec<bool> = token_ids.iter().map(|t| !t.is_empty()).collect();
        let events = EventStore {
            dim: embedder.dim(),
            data: vectors.into_iter().flatten().collect(),
            present,
        };
        let points: Vec<u8> = all
            .iter()
            .map(|r| {
                r.record
                    .label
                    .unwrap_or_else(|| label_with_keywords(&r.record.message, &lexicon))
            })
            .collect();

        let mut file_ranges = Vec::with_capacity(files.len());
        let mut start = 0;
        for (_, recs) in files {
            file_ranges.push(start..start + recs.len());
            start += recs.len();
        }

        let mut samples = Vec::with_capacity(all.len());
        let mut ids = token_ids.into_iter();
        for (f, range) in file_ranges.iter().enumerate() {
            let labels = &points[range.clone()];
            for (local, g) in range.clone().enumerate() {
                let (window_label, joint_label) =
                    derive_labels(labels, local, cfg.window, cfg.window_kind);
                samples.push(Sample {
                    file: f,
                    line_no: all[g].record.line_no,
                    event: g,
                    split: split(local, range.len()),
                    semantic: SemanticInput::new(ids.next().expect("one per record"), cfg.l_sem),
                    sequence: build_sequence(
                        range,
                        &events.present,
                        g,
                        cfg.window,
                        cfg.window_kind,
                        cfg.l_seq,
                    )?,
                    point_label: labels[local],
                    window_label,
                    joint_label,
                });
            }
        }
        Ok(Dataset {
            meta,
            vocab,
            events,
            samples,
            file_ranges,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        self.vocab.save(&dir.join("vocab.txt"))?;

        let path = dir.join("samples.tsv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for s in &self.samples {
            let ids: Vec<String> = s
                .semantic
                .token_ids
                .iter()
                .take_while(|&&t| t != PAD)
                .map(u32::to_string)
                .collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.file,
                s.line_no,
                s.split.as_str(),
                ids.join(" "),
                s.point_label,
                s.window_label,
                s.joint_label
            )
            .map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let data: Vec<f32> = self.events.data.iter().map(|&x| x as f32).collect();
        write_matrix(&dir.join("events.bin"), self.events.len(), self.events.dim, &data)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: PreparedMeta = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", meta_path.display())))?;
        let cfg = meta.prepare.clone();
        cfg.validate()?;
        let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
        let (rows, dim, data) = read_matrix(&dir.join("events.bin"))?;

        let path = dir.join("samples.tsv");
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut raw = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let bad = || Error::data(format!("{}:{}: malformed sample row", path.display(), n + 1));
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 7 {
                return Err(bad());
            }
            let ids: Vec<u32> = c[3]
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            if ids.iter().any(|&t| t as usize >= vocab.len()) {
                return Err(bad());
            }
            let label = |s: &str, max: u8| s.parse::<u8>().ok().filter(|&v| v <= max);
            raw.push((
                c[0].parse::<usize>().map_err(|_| bad())?,
                c[1].parse::<usize>().map_err(|_| bad())?,
                Split::parse(c[2]).ok_or_else(bad)?,
                ids,
                label(c[4], 1).ok_or_else(bad)?,
                label(c[5], 1).ok_or_else(bad)?,
                label(c[6], 3).ok_or_else(bad)?,
            ));
        }
        if raw.len() != rows {
            return Err(Error::data(format!(
                "{}: {} samples but {rows} event vectors",
                dir.display(),
                raw.len()
            )));
        }
        let present: Vec<bool> = raw.iter().map(|r| !r.3.is_empty()).collect();
        let events = EventStore {
            dim,
            data: data.into_iter().map(f64::from).collect(),
            present,
        };

        let mut file_ranges: Vec<Range<usize>> = Vec::new();
        for (i, r) in raw.iter().enumerate() {
            let n = file_ranges.len();
            if n > 0 && r.0 == n - 1 {
                file_ranges[n - 1].end = i + 1;
            } else if r.0 == n {
                file_ranges.push(i..i + 1);
            } else {
                return Err(Error::data("samples are not grouped by file"));
            }
        }

        let mut samples = Vec::with_capacity(raw.len());
        for (g, (f, line_no, split, ids, p, w, j)) in raw.into_iter().enumerate() {
            samples.push(Sample {
                file: f,
                line_no,
                event: g,
                split,
                semantic: SemanticInput::new(ids, cfg.l_sem),
                sequence: build_sequence(
                    &file_ranges[f],
                    &events.present,
                    g,
                    cfg.window,
                    cfg.window_kind,
                    cfg.l_seq,
                )?,
                point_label: p,
                window_label: w,
                joint_label: j,
            });
        }
        Ok(Dataset {
            meta,
            vocab,
            events,
            samples,
            file_ranges,
        })
    }
}

/// Padded, masked tensors for a group of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub l_sem: usize,
    pub l_seq: usize,
    pub d_event: usize,
    /// `size × l_sem`
    pub token_ids: Vec<u32>,
    pub sem_mask: Vec<bool>,
    /// `size × l_seq × d_event`
    pub seq: Vec<f64>,
    pub seq_mask: Vec<bool>,
    pub labels: Vec<usize>,
    /// Indices of the source samples.
    pub samples: Vec<usize>,
}

/// Borrowed tensors of one sample inside a [`Batch`].
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub token_ids: &'a [u32],
    pub sem_mask: &'a [bool],
    pub seq: &'a [f64],
    pub seq_mask: &'a [bool],
}

impl Batch {
    pub fn gather(samples: &[Sample], events: &EventStore, indices: &[usize], n_classes: usize) -> Self {
        let first = &samples[indices[0]];
        let l_sem = first.semantic.token_ids.len();
        let l_seq = first.sequence.rows.len();
        let d = events.dim;
        let mut b = Batch {
            l_sem,
            l_seq,
            d_event: d,
            token_ids: Vec::with_capacity(indices.len() * l_sem),
            sem_mask: Vec::with_capacity(indices.len() * l_sem),
            seq: vec![0.0; indices.len() * l_seq * d],
            seq_mask: Vec::with_capacity(indices.len() * l_seq),
            labels: Vec::with_capacity(indices.len()),
            samples: indices.to_vec(),
        };
        for (n, &i) in indices.iter().enumerate() {
            let s = &samples[i];
            b.token_ids.extend_from_slice(&s.semantic.token_ids);
            b.sem_mask.extend(s.semantic.mask());
            for (p, row) in s.sequence.rows.iter().enumerate() {
                b.seq_mask.push(row.is_some());
                if let Some(j) = row {
                    let off = (n * l_seq + p) * d;
                    b.seq[off..off + d].copy_from_slice(events.row(*j));
                }
            }
            b.labels.push(s.label(n_classes));
        }
        b
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn semantic_shape(&self) -> [usize; 2] {
        [self.size(), self.l_sem]
    }

    pub fn sequence_shape(&self) -> [usize; 3] {
        [self.size(), self.l_seq, self.d_event]
    }

    pub fn view(&self, b: usize) -> SampleView<'_> {
        let (ls, lq, d) = (self.l_sem, self.l_seq, self.d_event);
        SampleView {
            token_ids: &self.token_ids[b * ls..(b + 1) * ls],
            sem_mask: &self.sem_mask[b * ls..(b + 1) * ls],
            seq: &self.seq[b * lq * d..(b + 1) * lq * d],
            seq_mask: &self.seq_mask[b * lq..(b + 1) * lq],
        }
    }
}

/// Partition `indices` into batches of `batch_size` (the last may be short),
/// shuffled deterministically when a seed is given.
pub fn batch_plan(indices: &[usize], batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    if indices.is_empty() {
        return Err(Error::data("cannot batch an empty sample set"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let mut order = indices.to_vec();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn make_batches(
    samples: &[Sample],
    events: &EventStore,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    n_classes: usize,
) -> Result<Vec<Batch>> {
    let all: Vec<usize> = (0..samples.len()).collect();
    Ok(batch_plan(&all, batch_size, shuffle_seed)?
        .iter()
        .map(|idx| Batch::gather(samples, events, idx, n_classes))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{LogRecord, ParsedRecord};

    fn records(msgs: &[&str], labels: &[Option<u8>]) -> Vec<ParsedRecord> {
        msgs.iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (m, l))| ParsedRecord {
                record: LogRecord {
                    line_no: i,
                    timestamp: None,
                    host: None,
                    service: None,
                    message: m.to_string(),
                    header_only: m.is_empty(),
                    label: *l,
                },
                template_id: 0,
            })
            .collect()
    }

    fn small_cfg() -> PrepareConfig {
        PrepareConfig {
            l_sem: 6,
            l_seq: 4,
            embed_dim: 8,
            embed_word_dim: 5,
            ..Default::default()
        }
    }

    fn toy() -> Dataset {
        let msgs = [
            "session opened for user root",
            "disk failure on sda",
            "session closed",
            "",
            "job started",
            "job finished ok",
            "job started",
            "timeout waiting for lock",
            "job finished ok",
            "session opened",
        ];
        let recs = records(&msgs, &[None; 10]);
        Dataset::prepare(&[("a.log".into(), recs)], &small_cfg(), Exec::Sequential).unwrap()
    }

    #[test]
    fn prepare_labels_and_splits() {
        let ds = toy();
        assert_eq!(ds.samples.len(), 10);
        assert_eq!(ds.indices(Split::Train).len(), 6);
        assert_eq!(ds.indices(Split::Val).len(), 2);
        assert_eq!(ds.indices(Split::Test).len(), 2);
        let p: Vec<u8> = ds.samples.iter().map(|s| s.point_label).collect();
        assert_eq!(p, vec![1, 0, 1, 1, 1, 1, 1, 0, 1, 1]);
        // event 2 sits next to the disk failure
        assert_eq!(ds.samples[2].joint_label, 2);
        assert_eq!(ds.samples[1].joint_label, 1);
        // header-only record: no tokens, masked from neighbours' windows
        assert!(!ds.events.present[3]);
        assert!(ds.events.row(3).iter().all(|&x| x == 0.0));
        assert_eq!(ds.samples[4].sequence.rows[..2], [None, Some(5)]);
        // test-split words are not in the vocabulary
        assert_eq!(ds.vocab.lookup("timeout"), super::super::vocab::UNK);
    }

    #[test]
    fn own_event_never_in_its_sequence() {
        let ds = toy();
        for (i, s) in ds.samples.iter().enumerate() {
            assert!(!s.sequence.rows.contains(&Some(i)));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let ds = toy();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.vocab, ds.vocab);
        for (a, b) in back.events.data.iter().zip(&ds.events.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_sizes_and_shapes() {
        let plan = batch_plan(&(0..100).collect::<Vec<_>>(), 32, Some(3)).unwrap();
        let sizes: Vec<usize> = plan.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
        assert_eq!(plan, batch_plan(&(0..100).collect::<Vec<_>>(), 32, Some(3)).unwrap());
        assert_ne!(plan, batch_plan(&(0..100).collect::<Vec<_>>(), 32, Some(4)).unwrap());
        assert!(batch_plan(&[], 32, None).is_err());
    }

    #[test]
    fn batch_masks_match_zero_rows() {
        let ds = toy();
        let batches = make_batches(&ds.samples, &ds.events, 4, None, 2).unwrap();
        assert_eq!(batches.len(), 3);
        let b = &batches[0];
        assert_eq!(b.semantic_shape(), [4, 6]);
        assert_eq!(b.sequence_shape(), [4, 4, 8]);
        for (p, &m) in b.seq_mask.iter().enumerate() {
            let row = &b.seq[p * 8..(p + 1) * 8];
            assert_eq!(m, row.iter().any(|&x| x != 0.0));
        }
        for (t, m) in b.token_ids.iter().zip(&b.sem_mask) {
            assert_eq!(*m, *t != PAD);
        }
    }

    #[test]
    fn paper_default_batch_shapes() {
        let msgs: Vec<String> = (0..40).map(|i| format!("event number {i} ok")).collect();
        let refs: Vec<&str> = msgs.iter().map(String::as_str).collect();
        let recs = records(&refs, &[None; 40]);
        let ds = Dataset::prepare(
            &[("x".into(), recs)],
            &PrepareConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        let b = &make_batches(&ds.samples, &ds.events, 32, Some(1), 2).unwrap()[0];
        assert_eq!(b.semantic_shape(), [32, 60]);
        assert_eq!(b.sequence_shape(), [32, 60, 384]);
    }
}
