//! Token inventory with fixed special symbols and text <-> id mapping.
//!
//! Ids are dense. The first three ids are always the start, end, and
//! unknown symbols, in that order; everything after them is an ordinary
//! token. The vocabulary size `V` counts ordinary tokens (unknown
//! included, start/end excluded), so the prediction support of a model —
//! ordinary tokens plus one terminal symbol — has `V + 1` entries.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const SOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;

pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    hash: String,
}

impl Vocabulary {
    /// Builds a vocabulary from whitespace-tokenized lines, keeping the
    /// `max_size` most frequent tokens. Frequency ties are broken by
    /// lexicographic token order.
    pub fn build<S: AsRef<str>>(corpus: impl IntoIterator<Item = S>, max_size: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::Config("max_size must be >= 1".into()));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for line in corpus {
            for tok in line.as_ref().split_whitespace() {
                if tok == SOS_TOKEN || tok == EOS_TOKEN || tok == UNK_TOKEN {
                    continue;
                }
                *counts.entry(tok.to_string()).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        Self::from_ordinary_tokens(ranked.into_iter().map(|(t, _)| t).collect())
    }

    /// Assembles a vocabulary from a list of ordinary tokens, prepending
    /// the three special symbols.
    pub fn from_ordinary_tokens(ordinary: Vec<String>) -> Result<Self> {
        let mut tokens = vec![
            SOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        tokens.extend(ordinary);
        Self::from_token_list(tokens)
    }

    pub(crate) fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 {
            return Err(Error::Config(
                "vocabulary needs at least the three special symbols".into(),
            ));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid token string {tok:?}")));
            }
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate token {tok:?}")));
            }
        }
        let hash = hash_tokens(&tokens);
        Ok(Self { tokens, ids, hash })
    }

    /// Number of ordinary tokens `V` (unknown included, start/end excluded).
    pub fn size(&self) -> usize {
        self.tokens.len() - 2
    }

    /// Total id count, specials included.
    pub fn total(&self) -> usize {
        self.tokens.len()
    }

    /// `V + 1`: ordinary tokens plus one terminal symbol.
    pub fn support_size(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// Ids of ordinary tokens (unknown first).
    pub fn ordinary_ids(&self) -> impl Iterator<Item = TokenId> {
        UNK_ID..self.tokens.len() as TokenId
    }

    /// Maps one token string to its id, unknown for out-of-vocabulary.
    pub fn encode_token(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Encodes a whitespace-tokenized line. No start/end symbols are
    /// inserted; callers add them where needed.
    pub fn encode_line(&self, line: &str) -> Vec<TokenId> {
        line.split_whitespace().map(|t| self.encode_token(t)).collect()
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.encode_token(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id));
        }
        out
    }

    /// One token per line; line number = id, specials on the first three lines.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for tok in &self.tokens {
            text.push_str(tok);
            text.push('\n');
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        Self::from_token_list(tokens).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })
    }
}

fn hash_tokens(tokens: &[String]) -> String {
    let mut hasher = Sha256::new();
    for tok in tokens {
        hasher.update(tok.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}
