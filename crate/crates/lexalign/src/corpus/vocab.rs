//! Closed whitespace-token vocabulary with fixed reserved ids.

use super::CorpusError;
use std::collections::HashMap;
use std::path::Path;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const MASK: usize = 3;
pub const BOS: usize = 4;
pub const EOS: usize = 5;
/// First id available for ordinary tokens.
pub const RESERVED: usize = 6;

const RESERVED_TOKENS: [&str; RESERVED] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]", "[BOS]", "[EOS]"];

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED_TOKENS {
            v.push(t.to_string());
        }
        v
    }

    fn push(&mut self, token: String) -> usize {
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    /// Add a token if absent; returns its id either way.
    pub fn add(&mut self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&id) => id,
            None => self.push(token.to_string()),
        }
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    /// Whitespace tokenization against the closed vocabulary; out-of-vocabulary
    /// words map to `[UNK]`.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| self.id_of(w).unwrap_or(UNK))
            .collect()
    }

    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; the line number is the id.
    pub fn write_file(&self, path: &Path) -> Result<(), CorpusError> {
        let body = self.tokens.join("\n") + "\n";
        std::fs::write(path, body).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_file(path: &Path) -> Result<Self, CorpusError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for line in body.lines() {
            v.push(line.to_string());
        }
        for (i, t) in RESERVED_TOKENS.iter().enumerate() {
            if v.tokens.get(i).map(|s| s.as_str()) != Some(*t) {
                return Err(CorpusError::Io(format!(
                    "{}: reserved token {t} missing at line {i}",
                    path.display()
                )));
            }
        }
        Ok(v)
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // detokenize(tokenize(s)) == whitespace-normalized s for in-vocab text.
        #[test]
        fn round_trip_whitespace_normalized(words in proptest::collection::vec("[a-z]{1,8}", 1..20)) {
            let mut v = Vocabulary::new();
            for w in &words {
                v.add(w);
            }
            let text = words.join("  ");
            let normalized = words.join(" ");
            prop_assert_eq!(v.detokenize(&v.tokenize(&text)), normalized);
        }
    }
}
