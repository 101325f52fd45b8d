//! Sentence-level event vectors and the binary matrix file format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tokenize::tokenize;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Maps one log message to a fixed-width vector.
pub trait SentenceEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, message: &str) -> Vec<f64>;
}

/// Mean of seeded random word vectors, pushed through a seeded random
/// projection and L2-normalised. Messages with no tokens embed to zero.
#[derive(Debug, Clone)]
pub struct RandomProjectionEmbedder {
    vocab: Vocabulary,
    word_dim: usize,
    dim: usize,
    words: Vec<f64>,
    projection: Vec<f64>,
}

impl RandomProjectionEmbedder {
    pub fn new(vocab: Vocabulary, word_dim: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let words = (0..vocab.len() * word_dim)
            .map(|_| unit.sample(&mut rng))
            .collect();
        let scale = 1.0 / (word_dim as f64).sqrt();
        let projection = (0..word_dim * dim)
            .map(|_| unit.sample(&mut rng) * scale)
            .collect();
        RandomProjectionEmbedder {
            vocab,
            word_dim,
            dim,
            words,
            projection,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl SentenceEmbedder for RandomProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, message: &str) -> Vec<f64> {
        let tokens = tokenize(message);
        let mut out = vec![0.0; self.dim];
        if tokens.is_empty() {
            return out;
        }
        let mut mean = vec![0.0; self.word_dim];
        for t in &tokens {
            let id = self.vocab.lookup(t) as usize;
            let row = &self.words[id * self.word_dim..(id + 1) * self.word_dim];
            for (m, w) in mean.iter_mut().zip(row) {
                *m += w;
            }
        }
        let n = tokens.len() as f64;
        for (i, m) in mean.iter().enumerate() {
            let m = m / n;
            let row = &self.projection[i * self.dim..(i + 1) * self.dim];
            for (o, p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|x| *x /= norm);
        }
        out
    }
}

/// Precomputed vectors keyed by exact message text, loaded from
/// `message \t v1 v2 ...` lines. Unknown messages go to the fallback.
pub struct FileEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
    fallback: Box<dyn SentenceEmbedder>,
}

impl FileEmbedder {
    pub fn load(path: &Path, fallback: Box<dyn SentenceEmbedder>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dim = fallback.dim();
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let Some((msg, vals)) = line.rsplit_once('\t') else {
                continue;
            };
            let v: Vec<f64> = vals
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::data(format!("{}:{}: bad vector", path.display(), i + 1)))?;
            if v.len() != dim {
                return Err(Error::data(format!(
                    "{}:{}: expected {dim} values, found {}",
                    path.display(),
                    i + 1,
                    v.len()
                )));
            }
            table.insert(msg.to_string(), v);
        }
        Ok(FileEmbedder {
            dim,
            table,
            fallback,
        })
    }
}

impl SentenceEmbedder for FileEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, message: &str) -> Vec<f64> {
        match self.table.get(message) {
            Some(v) => v.clone(),
            None => self.fallback.embed(message),
        }
    }
}

/// Read `word v1 ... vd` lines (word2vec text format, optional count header)
/// into rows aligned with `vocab`. Words absent from the file are `None`.
pub fn read_word_vectors(path: &Path, vocab: &Vocabulary, dim: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = vec![None; vocab.len()];
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let vals: Vec<f64> = match parts.map(str::parse).collect() {
            Ok(v) => v,
            Err(_) => continue,
        };
        if i == 0 && vals.len() == 1 {
            continue;
        }
        if vals.len() != dim {
            return Err(Error::data(format!(
                "{}:{}: expected {dim} values, found {}",
                path.display(),
                i + 1,
                vals.len()
            )));
        }
        let id = vocab.lookup(word);
        if id > super::vocab::UNK {
            rows[id as usize] = Some(vals);
        }
    }
    Ok(rows)
}

/// Row-major f32 matrix: `rows: u64 LE`, `cols: u64 LE`, then data.
pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), rows * cols, "matrix data length");
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&(rows as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(cols as u64).to_le_bytes()).map_err(io)?;
    for x in data {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::data(format!("{}: truncated matrix header", path.display())));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(Error::data(format!(
            "{}: matrix body does not match {rows}x{cols}",
            path.display()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}
