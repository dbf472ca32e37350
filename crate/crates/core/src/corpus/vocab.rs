use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TextualGraph;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const PAD_TOKEN: &str = "<pad>";

/// Token ↔ id table. Id 0 is reserved for padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn from_tokens(corpus_tokens: Vec<String>) -> Result<Self> {
        let mut tokens = Vec::with_capacity(corpus_tokens.len() + 1);
        tokens.push(PAD_TOKEN.to_string());
        tokens.extend(corpus_tokens);
        let mut v = Vocabulary {
            tokens,
            index: HashMap::new(),
        };
        v.rebuild_index()?;
        Ok(v)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index = HashMap::with_capacity(self.tokens.len());
        for (i, t) in self.tokens.iter().enumerate().skip(1) {
            if t == PAD_TOKEN || self.index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::invalid(format!("token `{t}` listed twice")));
            }
        }
        Ok(())
    }

    /// Number of ids including the pad id.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pad_id(&self) -> TokenId {
        PAD_ID
    }

    /// Id of `token`, or the pad id for tokens outside the vocabulary.
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(PAD_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    /// Maps a token sequence to ids, dropping tokens outside the vocabulary.
    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t))
            .filter(|&id| id != PAD_ID)
            .collect()
    }

    /// One line per id starting at 1.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens[1..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
    }
}

/// Collects tokens occurring at least `min_count` times; ids follow first
/// occurrence across nodes in id order.
pub fn build_vocab(graph: &TextualGraph, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for text in graph.texts() {
        for t in text {
            let c = counts.entry(t.as_str()).or_insert(0);
            if *c == 0 {
                order.push(t.as_str());
            }
            *c += 1;
        }
    }
    if order.is_empty() {
        return Err(Error::invalid("empty corpus: no node has any text"));
    }
    let kept = order
        .into_iter()
        .filter(|t| counts[t] >= min_count)
        .map(str::to_string)
        .collect();
    Vocabulary::from_tokens(kept)
}

/// A token sequence padded or truncated to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedText {
    pub ids: Vec<TokenId>,
    pub mask: Vec<bool>,
}

impl PaddedText {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of real (unmasked) positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn pad_and_mask(tokens: &[TokenId], max_len: usize) -> PaddedText {
    assert!(max_len >= 1, "pad length must be positive");
    let keep = tokens.len().min(max_len);
    let mut ids = Vec::with_capacity(max_len);
    ids.extend_from_slice(&tokens[..keep]);
    ids.resize(max_len, PAD_ID);
    let mut mask = vec![true; keep];
    mask.resize(max_len, false);
    PaddedText { ids, mask }
}

/// Encodes and pads every node's text.
pub fn encode_graph(graph: &TextualGraph, vocab: &Vocabulary, max_len: usize) -> Vec<PaddedText> {
    graph
        .texts()
        .iter()
        .map(|t| pad_and_mask(&vocab.encode(t), max_len))
        .collect()
}
