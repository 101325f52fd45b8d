//! Fixed-depth parse tree for online template mining.
//!
//! The first tree level routes on token count, the next `depth - 2` levels
//! on leading tokens. Tokens containing a digit route to the wildcard
//! branch, as does any token arriving at a node that already holds
//! `max_children` literal children. Leaves hold candidate templates, which
//! are compared by position-wise token similarity.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WILDCARD: &str = "<*>";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Literal(String),
    Wildcard,
}

impl Token {
    pub fn is_wildcard(&self) -> bool {
        matches!(self, Token::Wildcard)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Literal(s) => f.write_str(s),
            Token::Wildcard => f.write_str(WILDCARD),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: usize,
    pub tokens: Vec<Token>,
    pub count: u64,
}

impl Template {
    /// Fraction of positions where the template literal equals the message token.
    pub fn similarity(&self, message: &[&str]) -> f64 {
        if self.tokens.len() != message.len() || self.tokens.is_empty() {
            return 0.0;
        }
        let equal = self
            .tokens
            .iter()
            .zip(message)
            .filter(|(t, m)| matches!(t, Token::Literal(s) if s == *m))
            .count();
        equal as f64 / self.tokens.len() as f64
    }

    fn absorb(&mut self, message: &[&str]) {
        for (t, m) in self.tokens.iter_mut().zip(message) {
            if let Token::Literal(s) = t {
                if s != m {
                    *t = Token::Wildcard;
                }
            }
        }
        self.count += 1;
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrainConfig {
    pub depth: usize,
    pub sim_threshold: f64,
    pub max_children: usize,
}

impl Default for DrainConfig {
    fn default() -> Self {
        DrainConfig {
            depth: 4,
            sim_threshold: 0.4,
            max_children: 100,
        }
    }
}

impl DrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::config("drain depth must be >= 2"));
        }
        if !(self.sim_threshold > 0.0 && self.sim_threshold <= 1.0) {
            return Err(Error::config("drain sim_threshold must be in (0, 1]"));
        }
        if self.max_children < 1 {
            return Err(Error::config("drain max_children must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Node {
    children: HashMap<String, Node>,
    templates: Vec<usize>,
}

/// Outcome of routing one message through the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub template_id: usize,
    pub created: bool,
    /// Similarity against the template before it absorbed the message
    /// (1.0 for newly created templates).
    pub similarity: f64,
}

#[derive(Debug)]
pub struct DrainTree {
    config: DrainConfig,
    by_length: HashMap<usize, Node>,
    templates: Vec<Template>,
}

fn has_digit(s: &str) -> bool {
    s.bytes().any(|b| b.is_ascii_digit())
}

impl DrainTree {
    pub fn new(config: DrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(DrainTree {
            config,
            by_length: HashMap::new(),
            templates: Vec::new(),
        })
    }

    pub fn config(&self) -> &DrainConfig {
        &self.config
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn template(&self, id: usize) -> Option<&Template> {
        self.templates.get(id)
    }

    /// Route `tokens` to a leaf, then merge into the most similar template
    /// or start a new one. Empty token lists are routed as a single empty
    /// literal so every record still receives a template.
    pub fn add(&mut self, tokens: &[&str]) -> Match {
        let empty = [""];
        let tokens = if tokens.is_empty() { &empty[..] } else { tokens };
        let max_children = self.config.max_children;
        let route_len = (self.config.depth - 2).min(tokens.len());

        let mut node = self.by_length.entry(tokens.len()).or_default();
        for tok in &tokens[..route_len] {
            let key = if has_digit(tok) { WILDCARD } else { tok };
            if !node.children.contains_key(key) {
                let literal_children = node
                    .children
                    .keys()
                    .filter(|k| k.as_str() != WILDCARD)
                    .count();
                let key = if key == WILDCARD || literal_children < max_children {
                    key
                } else {
                    WILDCARD
                };
                node = node.children.entry(key.to_string()).or_default();
            } else {
                node = node.children.get_mut(key).expect("checked above");
            }
        }

        let mut best: Option<(usize, f64)> = None;
        for &id in &node.templates {
            let sim = self.templates[id].similarity(tokens);
            // Strict comparison keeps the lowest id on ties.
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((id, sim));
            }
        }
        match best {
            Some((id, sim)) if sim >= self.config.sim_threshold => {
                self.templates[id].absorb(tokens);
                Match {
                    template_id: id,
                    created: false,
                    similarity: sim,
                }
            }
            _ => {
                let id = self.templates.len();
                self.templates.push(Template {
                    id,
                    tokens: tokens
                        .iter()
                        .map(|t| Token::Literal((*t).to_string()))
                        .collect(),
                    count: 1,
                });
                node.templates.push(id);
                Match {
                    template_id: id,
                    created: true,
                    similarity: 1.0,
                }
            }
        }
    }

    /// Whitespace-split `message` and [`add`](Self::add) it.
    pub fn add_message(&mut self, message: &str) -> Match {
        let tokens: Vec<&str> = message.split_whitespace().collect();
        self.add(&tokens)
    }
}
