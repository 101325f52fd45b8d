use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token lexicon built from the training split. Ids 0 and 1 are reserved
/// for padding and unknown tokens; the rest follow first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn build<'a, I>(train_messages: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Vocabulary {
            ids: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
        };
        for msg in train_messages {
            for tok in tokenize(msg) {
                if !vocab.ids.contains_key(&tok) {
                    vocab.ids.insert(tok.clone(), vocab.tokens.len() as u32);
                    vocab.tokens.push(tok);
                }
            }
        }
        if vocab.distinct() == 0 {
            return Err(Error::data("cannot build a vocabulary from an empty corpus"));
        }
        Ok(vocab)
    }

    /// Number of distinct (non-reserved) tokens.
    pub fn distinct(&self) -> usize {
        self.tokens.len() - 2
    }

    /// Table size including reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct() == 0
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, message: &str) -> Vec<u32> {
        tokenize(message).iter().map(|t| self.lookup(t)).collect()
    }

    /// One token per line; the line index is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 3 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::data(format!("{}: not a vocabulary file", path.display())));
        }
        let ids = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        if ids.len() != tokens.len() - 2 {
            return Err(Error::data(format!("{}: duplicate tokens", path.display())));
        }
        Ok(Vocabulary { ids, tokens })
    }
}
