//! Word vocabulary with reserved control tokens.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
/// Separator placed between concatenated input documents.
pub const END_SEP: TokenId = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<unk>", "<bos>", "<eos>", "[END]"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    words: Vec<String>,
}

impl From<VocabFile> for Vocab {
    fn from(file: VocabFile) -> Self {
        let mut vocab = Vocab::new();
        for w in file.words.into_iter().skip(RESERVED.len()) {
            vocab.push(w);
        }
        vocab
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile { words: v.words }
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// A vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Vocab { words: Vec::new(), index: HashMap::new() };
        for w in RESERVED {
            v.push(w.to_string());
        }
        v
    }

    fn push(&mut self, word: String) -> TokenId {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len() as TokenId;
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    /// Build from raw texts, keeping the most frequent words so that the
    /// total size (reserved tokens included) does not exceed `max_size`.
    /// Ties are broken alphabetically, so the result is deterministic.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in crate::text_metrics::split_words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(w, _)| !RESERVED.contains(&w.as_str())).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocab::new();
        for (w, _) in ranked.into_iter().take(max_size.saturating_sub(RESERVED.len())) {
            vocab.push(w);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Render ids back to a space-joined string, stopping at EOS.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().take_while(|&&t| t != EOS).map(|&t| self.word(t).unwrap_or("<unk>")).collect::<Vec<_>>().join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_distinct_and_end_renders() {
        let v = Vocab::new();
        let ids = [PAD, UNK, BOS, EOS, END_SEP];
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(v.word(END_SEP), Some("[END]"));
    }

    #[test]
    fn build_respects_size_and_frequency() {
        let v = Vocab::build(["b a a c", "a b"], 7);
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("b"), 6);
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn json_roundtrip() {
        let v = Vocab::build(["x y z"], 64);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }
}
